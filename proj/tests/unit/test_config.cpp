#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "uietl/config.hpp"
#include "uietl/training.hpp"

using namespace uietl;

namespace {

std::string config_path(const std::string& name) { return std::string(UIETL_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST(KeyValueConfig, ParsingRules) {
  const auto kv = KeyValueConfig::parse(
      "# comment\n"
      "  lr = 1e-5   # trailing\n"
      "\n"
      "name=abc\n"
      "flag = true\n"
      "list = 1, 2,3\n"
      "neg = -inf\n");
  EXPECT_DOUBLE_EQ(kv.get_double("lr", 0), 1e-5);
  EXPECT_EQ(kv.get_string("name", ""), "abc");
  EXPECT_TRUE(kv.get_bool("flag", false));
  EXPECT_EQ(kv.get_int_list("list", {}), (std::vector<int>{1, 2, 3}));
  EXPECT_TRUE(std::isinf(kv.get_double("neg", 0)));
  EXPECT_EQ(kv.get_int("missing", 7), 7);
  EXPECT_TRUE(kv.unused().empty());
}

TEST(KeyValueConfig, Errors) {
  EXPECT_THROW(KeyValueConfig::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("just words\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse(" = 3\n"), ConfigError);
  const auto kv = KeyValueConfig::parse("n = 1.5\nb = maybe\nl = 1,x\nbig = 99999999999\nd = 1e-3x\n");
  EXPECT_THROW(kv.get_long("n", 0), ConfigError);
  EXPECT_THROW(kv.get_bool("b", false), ConfigError);
  EXPECT_THROW(kv.get_int_list("l", {}), ConfigError);
  EXPECT_THROW(kv.get_int("big", 0), ConfigError);
  EXPECT_THROW(kv.get_double("d", 0), ConfigError);
  EXPECT_THROW(KeyValueConfig::load(config_path("does_not_exist.cfg")), IoError);
}

TEST(KeyValueConfig, TyposAreRejected) {
  const auto kv = KeyValueConfig::parse("stage = pretrain\nepochs = 3\nlearning_rate = 0.1\n");
  PretrainConfig::from_kv(kv);
  try {
    kv.reject_unknown();
    FAIL() << "expected a config error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  EXPECT_THROW(PretrainConfig::from_kv(KeyValueConfig::parse("stage = finetune\n")), ConfigError);
  EXPECT_THROW(FinetuneConfig::from_kv(KeyValueConfig::parse("steps = 0\n")), ConfigError);
}

TEST(KeyValueConfig, ResolvedConfigsRoundTrip) {
  PretrainConfig p;
  p.epochs = 7;
  p.lr = 1.2345678901234567e-4;
  p.schedule = {{0, 4, 16}, {3, 2, 32}};
  p.network.base_channels = 8;
  const auto p2 = PretrainConfig::from_kv(KeyValueConfig::parse(p.to_kv().str()));
  EXPECT_EQ(p2.to_kv().str(), p.to_kv().str());
  EXPECT_EQ(p2.lr, p.lr);
  EXPECT_EQ(p2.network, p.network);

  FinetuneConfig f;
  f.weights.lambda3 = 0.1;
  f.desired_q = 55.5;
  const auto f2 = FinetuneConfig::from_kv(KeyValueConfig::parse(f.to_kv().str()));
  EXPECT_EQ(f2.to_kv().str(), f.to_kv().str());
  EXPECT_EQ(f2.weights.lambda3, 0.1);
}

TEST(ShippedConfigs, FullScalePretrain) {
  const auto kv = KeyValueConfig::load(config_path("pretrain.cfg"));
  const auto cfg = PretrainConfig::from_kv(kv);
  EXPECT_NO_THROW(kv.reject_unknown());
  EXPECT_EQ(cfg.lr, 3e-4);
  EXPECT_EQ(cfg.epochs, 380);
  const auto counts = read_dataset_counts(kv);
  EXPECT_EQ(counts.at("train.lsui"), 3879);
  EXPECT_EQ(counts.at("train.uieb"), 800);
  EXPECT_EQ(counts.at("train.lsui") + counts.at("train.uieb"), 4679);
  EXPECT_EQ(counts.at("test.lsui"), 400);
  EXPECT_EQ(counts.at("test.uieb"), 90);
}

TEST(ShippedConfigs, FullScaleFinetune) {
  const auto kv = KeyValueConfig::load(config_path("finetune.cfg"));
  const auto cfg = FinetuneConfig::from_kv(kv);
  EXPECT_NO_THROW(kv.reject_unknown());
  EXPECT_EQ(cfg.lr, 1e-5);
  EXPECT_EQ(cfg.steps, 1000);
  EXPECT_EQ(cfg.batch, 2);
  EXPECT_EQ(cfg.weights.lambda3, 0.003);
  const auto counts = read_dataset_counts(kv);
  EXPECT_EQ(counts.at("finetune.ruie"), 3830);
  EXPECT_EQ(counts.at("finetune.euvp"), 3870);
  EXPECT_EQ(counts.at("finetune.lsui"), 2300);
  EXPECT_EQ(counts.at("finetune.ruie") + counts.at("finetune.euvp") + counts.at("finetune.lsui"), 10000);
}

TEST(ShippedConfigs, DeskConfigsLoad) {
  for (const char* name : {"desk/pretrain.cfg"}) {
    const auto kv = KeyValueConfig::load(config_path(name));
    PretrainConfig::from_kv(kv);
    EXPECT_NO_THROW(kv.reject_unknown()) << name;
  }
  const auto kv = KeyValueConfig::load(config_path("desk/finetune.cfg"));
  FinetuneConfig::from_kv(kv);
  EXPECT_NO_THROW(kv.reject_unknown());
}

TEST(Defaults, BuiltInValues) {
  const FinetuneConfig f;
  EXPECT_EQ(f.weights.lambda3, 0.003);
  EXPECT_EQ(f.batch, 2);
  EXPECT_EQ(f.lr, 1e-5);
  EXPECT_TRUE(std::isinf(f.desired_q));
  const PretrainConfig p;
  EXPECT_EQ(p.lr, 3e-4);
  EXPECT_EQ(p.epochs, 50);
}
