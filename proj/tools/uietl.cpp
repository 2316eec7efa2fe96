#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uietl/uietl.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace uietl;

namespace {

constexpr int kMetricSide = 256;

struct Common {
  std::string config;
  std::vector<std::string> manifests;
  std::string out;
  std::optional<long> seed;
  int workers = 1;
  std::string checkpoint;
  std::string scorer = "proxy";
  std::string scorer_command;
};

void log(const std::string& msg) { std::cerr << "[uietl] " << msg << '\n'; }

// Flag over config file over built-in default.
std::uint64_t resolve_seed(const Common& c, const KeyValueConfig& kv, std::uint64_t fallback) {
  if (c.seed) {
    log("seed " + std::to_string(*c.seed) + " (flag)");
    return static_cast<std::uint64_t>(*c.seed);
  }
  if (kv.has("seed")) {
    log("seed " + std::to_string(fallback) + " (config " + c.config + ")");
    return fallback;
  }
  log("seed " + std::to_string(fallback) + " (default)");
  return fallback;
}

std::vector<ManifestEntry> read_manifests(const std::vector<std::string>& paths) {
  std::vector<ManifestEntry> out;
  for (const auto& p : paths) {
    const auto m = DatasetManifest::load(p);
    out.insert(out.end(), m.entries.begin(), m.entries.end());
  }
  if (out.empty()) throw IoError("manifest lists no images");
  return out;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw ConfigError("--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

KeyValueConfig read_config(const std::string& path) {
  return path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
}

std::string file_digest(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return sha256_hex(ss.str());
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  if (!f) throw IoError("cannot write " + p.string());
  f << s;
}

// Records everything needed to rerun: resolved config, inputs, seed, and
// digests of the outputs.
void write_run_manifest(const fs::path& out, const std::string& command, const Common& c,
                        const KeyValueConfig& resolved, json extra) {
  write_text(out / "resolved_config.cfg", resolved.str());
  json j;
  j["command"] = command;
  j["config"] = "resolved_config.cfg";
  j["source_config"] = c.config;
  j["manifests"] = c.manifests;
  if (!c.checkpoint.empty()) j["checkpoint"] = c.checkpoint;
  j["seed"] = resolved.has("seed") ? resolved.get_string("seed", "") : std::string("0");
  j["workers"] = c.workers;
  j["scorer"] = c.scorer;
  for (auto& [k, v] : extra.items()) j[k] = v;
  std::ofstream(out / "run.json") << j.dump(2) << '\n';
}

std::unique_ptr<iqa::QualityScorer<float>> make_scorer(const Common& c) {
  if (c.scorer == "proxy") return std::make_unique<iqa::ProxyScorer<float>>();
  if (c.scorer == "external") return std::make_unique<iqa::ExternalCommandScorer<float>>(c.scorer_command);
  throw ConfigError("unknown scorer '" + c.scorer + "'");
}

BasicImage<float> enhance_any_size(const BasicImage<float>& img, const Checkpoint<float>& ck) {
  const int f = ck.network.downsampling();
  if (img.height() % f == 0 && img.width() % f == 0) return forward_enhance(img, ck.params, ck.network);
  const auto padded = pad_to_multiple(img, f);
  return crop(forward_enhance(padded, ck.params, ck.network), 0, 0, img.height(), img.width());
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------- pretrain

void run_pretrain(const Common& c) {
  auto kv = read_config(c.config);
  auto cfg = PretrainConfig::from_kv(kv);
  kv.reject_unknown();
  cfg.seed = resolve_seed(c, kv, cfg.seed);
  cfg.workers = c.workers;
  cfg.validate();
  const auto entries = read_manifests(c.manifests);
  const fs::path out = prepare_out(c.out);

  std::vector<ImagePair> pairs;
  for (const auto& e : entries) {
    if (!e.target) throw ConfigError("pretrain needs a target for every manifest entry: " + e.input.string());
    pairs.push_back({load_image(e.input), load_image(*e.target)});
  }
  std::optional<Checkpoint<float>> resume;
  if (!c.checkpoint.empty()) resume = load_checkpoint<float>(c.checkpoint);
  log("pretrain: " + std::to_string(pairs.size()) + " pairs, " +
      std::to_string(pretrain_total_steps(cfg, pairs.size())) + " steps");
  const auto res = pretrain(pairs, cfg, resume ? &*resume : nullptr);
  save_checkpoint(res.checkpoint, out / "checkpoint.bin");
  {
    std::ofstream f(out / "pretrain_log.csv");
    write_pretrain_log(f, res.epochs);
    std::ofstream s(out / "pretrain_steps.csv");
    write_pretrain_step_log(s, res.steps);
  }
  json extra;
  extra["steps"] = res.checkpoint.step;
  extra["parameter_digest"] = res.checkpoint.params.digest();
  extra["checkpoint_digest"] = file_digest(out / "checkpoint.bin");
  write_run_manifest(out, "pretrain", c, cfg.to_kv(), extra);
}

// ---------------------------------------------------------------- finetune

void run_finetune(const Common& c) {
  if (c.checkpoint.empty()) throw ConfigError("finetune needs --checkpoint");
  auto kv = read_config(c.config);
  auto cfg = FinetuneConfig::from_kv(kv);
  kv.reject_unknown();
  cfg.seed = resolve_seed(c, kv, cfg.seed);
  cfg.workers = c.workers;
  cfg.validate();
  auto scorer = make_scorer(c);
  if (!scorer->differentiable())
    throw CapabilityError("finetune: scorer '" + scorer->tag() + "' is not differentiable");
  const auto entries = read_manifests(c.manifests);
  const fs::path out = prepare_out(c.out);
  const auto ck = load_checkpoint<float>(c.checkpoint);

  std::vector<Image> inputs;
  std::vector<SourceTag> tags;
  for (const auto& e : entries) {
    inputs.push_back(load_image(e.input));
    tags.push_back(e.source);
  }
  log("finetune: generating " + std::to_string(inputs.size()) + " pseudo labels");
  const auto records = generate_pseudo_labels(inputs, ck, *scorer, tags, c.workers);
  {
    std::ofstream f(out / "pseudo_labels.csv");
    f << "input,source,q_reference\n";
    f.precision(10);
    for (std::size_t i = 0; i < records.size(); ++i)
      f << entries[i].input.string() << ',' << to_string(records[i].source) << ',' << records[i].q_reference << '\n';
  }
  const std::string scorer_digest = scorer->parameters().digest();
  ConvPyramidExtractor<float> extractor;
  const auto res = finetune(records, ck, *scorer, cfg, extractor);
  save_checkpoint(res.checkpoint, out / "checkpoint.bin");
  {
    std::ofstream f(out / "finetune_log.csv");
    write_finetune_log(f, res.steps);
  }
  std::vector<double> q_before, q_after;
  for (const auto& r : records) {
    q_before.push_back(r.q_reference);
    q_after.push_back(scorer->score(forward_enhance(r.input, res.checkpoint.params, res.checkpoint.network)));
  }
  json extra;
  extra["steps"] = res.steps.size();
  extra["stopped_early"] = res.stopped_early;
  extra["lambda"] = {cfg.weights.lambda1, cfg.weights.lambda2, cfg.weights.lambda3};
  extra["lr"] = cfg.lr;
  extra["batch"] = cfg.batch;
  extra["records_digest"] = records_digest(records);
  extra["scorer_digest_before"] = scorer_digest;
  extra["scorer_digest_after"] = scorer->parameters().digest();
  extra["mean_q_pretrained"] = mean_of(q_before);
  extra["mean_q_finetuned"] = mean_of(q_after);
  extra["parameter_digest"] = res.checkpoint.params.digest();
  extra["checkpoint_digest"] = file_digest(out / "checkpoint.bin");
  write_run_manifest(out, "finetune", c, cfg.to_kv(), extra);
}

// ---------------------------------------------------------------- enhance

void run_enhance(const Common& c, const std::string& input_dir) {
  if (c.checkpoint.empty()) throw ConfigError("enhance needs --checkpoint");
  if (input_dir.empty() == c.manifests.empty()) throw ConfigError("enhance needs exactly one of --manifest or --input");
  std::vector<fs::path> inputs;
  if (!input_dir.empty()) {
    inputs = list_images(input_dir);
  } else {
    for (const auto& e : read_manifests(c.manifests)) inputs.push_back(e.input);
  }
  const fs::path out = prepare_out(c.out);
  const auto ck = load_checkpoint<float>(c.checkpoint);
  json digests = json::object();
  for (const auto& p : inputs) {
    const fs::path dst = out / (p.stem().string() + ".png");
    save_png(enhance_any_size(load_image(p), ck), dst);
    digests[dst.filename().string()] = file_digest(dst);
  }
  KeyValueConfig resolved;
  write_network(resolved, ck.network);
  json extra;
  extra["images"] = digests;
  if (!input_dir.empty()) extra["input_dir"] = input_dir;
  write_run_manifest(out, "enhance", c, resolved, extra);
}

// ---------------------------------------------------------------- evaluate

struct EvalOptions {
  std::string pred, target, niqe_corpus;
  bool resize_full_reference = false;
};

void run_evaluate(const Common& c, const EvalOptions& o) {
  if (o.pred.empty()) throw ConfigError("evaluate needs --pred");
  const auto preds = list_images(o.pred);
  if (preds.empty()) throw IoError("no images in " + o.pred);
  const fs::path out = prepare_out(c.out);
  std::optional<iqa::NiqeModel> niqe;
  if (!o.niqe_corpus.empty()) {
    std::vector<Image> corpus;
    for (const auto& p : list_images(o.niqe_corpus))
      corpus.push_back(resize_bilinear(load_image(p), kMetricSide, kMetricSide));
    niqe = iqa::niqe_fit(corpus);
  }
  iqa::ProxyScorer<float> proxy;
  std::ofstream csv(out / "metrics.csv");
  csv << "image,metric,value\n";
  csv.precision(10);
  std::map<std::string, std::vector<double>> columns;
  auto emit = [&](const std::string& id, const std::string& metric, double v) {
    csv << id << ',' << metric << ',' << v << '\n';
    columns[metric].push_back(v);
  };
  for (const auto& p : preds) {
    const std::string id = p.filename().string();
    const Image pred = load_image(p);
    if (!o.target.empty()) {
      const fs::path tp = fs::path(o.target) / p.filename();
      if (!fs::exists(tp)) throw IoError("missing target " + tp.string());
      Image tgt = load_image(tp);
      Image pr = pred;
      if (o.resize_full_reference) {
        pr = resize_bilinear(pr, kMetricSide, kMetricSide);
        tgt = resize_bilinear(tgt, kMetricSide, kMetricSide);
      }
      emit(id, "psnr", iqa::psnr(pr, tgt));
      emit(id, "ssim", iqa::ssim(pr, tgt));
    }
    const Image nr = resize_bilinear(pred, kMetricSide, kMetricSide);
    emit(id, "uiqm", iqa::uiqm(nr));
    emit(id, "uciqe", iqa::uciqe(nr));
    emit(id, "proxy", proxy.score(nr));
    if (niqe) emit(id, "niqe", iqa::niqe_score(*niqe, nr));
  }
  json summary = json::object();
  for (const auto& [m, v] : columns) summary[m] = mean_of(v);
  std::ofstream(out / "summary.json") << summary.dump(2) << '\n';
  KeyValueConfig resolved;
  resolved.set("metric_side", std::to_string(kMetricSide));
  resolved.set("resize_full_reference", o.resize_full_reference ? "true" : "false");
  json extra;
  extra["pred"] = o.pred;
  extra["target"] = o.target;
  extra["metrics_digest"] = file_digest(out / "metrics.csv");
  write_run_manifest(out, "evaluate", c, resolved, extra);
}

// ---------------------------------------------------------------- select-metric

struct SelectOptions {
  std::string ratios;
  std::string labels;
  std::string niqe_corpus;
};

void run_select_metric(const Common& c, const SelectOptions& o) {
  std::vector<double> ratios = default_ratio_grid();
  if (!o.ratios.empty()) {
    ratios.clear();
    for (const auto& s : KeyValueConfig::split(o.ratios, ',')) ratios.push_back(KeyValueConfig::to_double("ratios", s));
  }
  validate_ratio_grid(ratios);
  const auto entries = read_manifests(c.manifests);
  const fs::path out = prepare_out(c.out);
  // manifests list degraded -> clean; mixture series run clean -> degraded
  std::vector<ImagePair> pairs;
  for (const auto& e : entries) {
    if (!e.target) throw ConfigError("select-metric needs a clean target for every entry: " + e.input.string());
    pairs.push_back({resize_bilinear(load_image(*e.target), kMetricSide, kMetricSide),
                     resize_bilinear(load_image(e.input), kMetricSide, kMetricSide)});
  }

  std::vector<std::pair<std::string, MetricFn<float>>> metrics;
  metrics.push_back({"uiqm", [](const Image& i) { return iqa::uiqm(i); }});
  metrics.push_back({"uciqe", [](const Image& i) { return iqa::uciqe(i); }});
  auto proxy = std::make_shared<iqa::ProxyScorer<float>>();
  metrics.push_back({"proxy", [proxy](const Image& i) { return proxy->score(i); }});
  if (!o.niqe_corpus.empty()) {
    std::vector<Image> corpus;
    for (const auto& p : list_images(o.niqe_corpus))
      corpus.push_back(resize_bilinear(load_image(p), kMetricSide, kMetricSide));
    auto model = std::make_shared<iqa::NiqeModel>(iqa::niqe_fit(corpus));
    // lower distance is better, so negate to keep "higher is better"
    metrics.push_back({"niqe", [model](const Image& i) { return -iqa::niqe_score(*model, i); }});
  }
  if (c.scorer == "external") {
    auto ext = std::make_shared<iqa::ExternalCommandScorer<float>>(c.scorer_command);
    metrics.push_back({"external", [ext](const Image& i) { return ext->score(i); }});
  }

  // PLCC against human labels when given, otherwise against the clean share
  // of each mixture.
  std::vector<std::pair<Image, double>> labelled;
  if (!o.labels.empty()) {
    std::ifstream f(o.labels);
    if (!f) throw IoError("cannot read labels " + o.labels);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto cut = line.find_last_of(",\t");
      if (cut == std::string::npos) throw FormatError("labels: expected path,score");
      fs::path p = line.substr(0, cut);
      if (p.is_relative()) p = fs::path(o.labels).parent_path() / p;
      labelled.push_back({resize_bilinear(load_image(p), kMetricSide, kMetricSide),
                          KeyValueConfig::to_double("labels", KeyValueConfig::trim(line.substr(cut + 1)))});
    }
  }

  std::ofstream scores_csv(out / "series_scores.csv");
  scores_csv << "metric,pair,ratio,score\n";
  scores_csv.precision(10);
  std::vector<MetricReport> reports;
  for (const auto& [tag, fn] : metrics) {
    const auto scores = series_scores(fn, pairs, ratios);
    std::vector<double> xs, ys;
    for (std::size_t p = 0; p < scores.size(); ++p)
      for (std::size_t k = 0; k < ratios.size(); ++k) {
        scores_csv << tag << ',' << p << ',' << ratios[k] << ',' << scores[p][k] << '\n';
        if (labelled.empty()) {
          xs.push_back(scores[p][k]);
          ys.push_back(1.0 - ratios[k]);
        }
      }
    for (const auto& [img, label] : labelled) {
      xs.push_back(fn(img));
      ys.push_back(label);
    }
    double r = std::nan("");
    try {
      r = iqa::plcc(xs, ys);
    } catch (const DegenerateInputError&) {
      r = 0.0;
    }
    reports.push_back({tag, monotonicity_rate(scores), r, 0});
  }
  const auto ranked = rank_metrics(reports);
  std::ofstream table(out / "metric_selection.csv");
  table << "rank,metric,monotonicity,plcc\n";
  table.precision(10);
  for (const auto& r : ranked) table << r.rank << ',' << r.tag << ',' << r.monotonicity << ',' << r.plcc << '\n';
  KeyValueConfig resolved;
  std::string rs;
  for (std::size_t i = 0; i < ratios.size(); ++i) rs += (i ? "," : "") + KeyValueConfig::format(ratios[i]);
  resolved.set("ratios", rs);
  resolved.set("plcc_labels", o.labels.empty() ? "mixture" : o.labels);
  json extra;
  extra["table_digest"] = file_digest(out / "metric_selection.csv");
  write_run_manifest(out, "select-metric", c, resolved, extra);
}

// ---------------------------------------------------------------- analyze-domain

NoiseSpec read_noise(const KeyValueConfig& kv, const std::string& prefix, NoiseSpec fallback, std::uint64_t seed) {
  NoiseSpec s = fallback;
  s.kind = parse_noise_kind(kv.get_string(prefix + ".kind", to_string(fallback.kind)));
  s.sigma = kv.get_double(prefix + ".sigma", s.sigma);
  s.blend = kv.get_double(prefix + ".blend", s.blend);
  for (int k = 0; k < 3; ++k) {
    s.cast[static_cast<std::size_t>(k)] = kv.get_double(prefix + ".cast" + std::to_string(k), s.cast[static_cast<std::size_t>(k)]);
    s.haze[static_cast<std::size_t>(k)] = kv.get_double(prefix + ".haze" + std::to_string(k), s.haze[static_cast<std::size_t>(k)]);
  }
  s.seed = split_seed(seed, prefix == "reference" ? 1u : 2u);
  s.validate();
  return s;
}

void write_noise(KeyValueConfig& kv, const std::string& prefix, const NoiseSpec& s) {
  kv.set(prefix + ".kind", to_string(s.kind));
  kv.set(prefix + ".sigma", KeyValueConfig::format(s.sigma));
  kv.set(prefix + ".blend", KeyValueConfig::format(s.blend));
  for (int k = 0; k < 3; ++k) {
    kv.set(prefix + ".cast" + std::to_string(k), KeyValueConfig::format(s.cast[static_cast<std::size_t>(k)]));
    kv.set(prefix + ".haze" + std::to_string(k), KeyValueConfig::format(s.haze[static_cast<std::size_t>(k)]));
  }
}

void run_analyze_domain(const Common& c) {
  auto kv = read_config(c.config);
  const std::uint64_t seed = resolve_seed(c, kv, static_cast<std::uint64_t>(kv.get_long("seed", 0)));
  const NoiseSpec spec_r = read_noise(kv, "reference", NoiseSpec::gaussian(0.05, 0), seed);
  const NoiseSpec spec_n = read_noise(kv, "non_reference", NoiseSpec::color_cast({-0.05, 0.03, 0.08}), seed);
  const std::string ext_tag = kv.get_string("extractor", "pyramid");
  const int side = kv.get_int("side", 64);
  kv.reject_unknown();
  if (side < 8) throw ConfigError("side must be >= 8");

  const auto entries = read_manifests(c.manifests);
  const fs::path out = prepare_out(c.out);
  std::vector<Image> clean, set_r, set_n;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    clean.push_back(resize_bilinear(load_image(entries[i].input), side, side));
    set_r.push_back(corrupt(clean.back(), spec_r, i));
    set_n.push_back(corrupt(clean.back(), spec_n, i));
  }
  std::unique_ptr<FeatureExtractor<float>> ext;
  std::optional<Checkpoint<float>> ck;
  if (ext_tag == "identity") {
    ext = std::make_unique<IdentityExtractor<float>>();
  } else if (ext_tag == "pyramid") {
    ext = std::make_unique<ConvPyramidExtractor<float>>();
  } else if (ext_tag == "encoder") {
    if (c.checkpoint.empty()) throw ConfigError("extractor = encoder needs --checkpoint");
    ck = load_checkpoint<float>(c.checkpoint);
    ext = std::make_unique<EncoderExtractor<float>>(ck->params, ck->network);
  } else {
    throw ConfigError("unknown extractor '" + ext_tag + "'");
  }
  ShiftReport rep = feature_shift(set_r, set_n, *ext);
  rep.delta_domain = domain_discrepancy(set_r, clean);
  json j;
  j["extractor"] = rep.extractor;
  j["delta_domain"] = rep.delta_domain;
  j["delta_domain_non_reference"] = domain_discrepancy(set_n, clean);
  j["delta_feat"] = rep.delta_feat;
  j["feature_dim"] = rep.mu_r.size();
  j["mu_r"] = rep.mu_r;
  j["mu_n"] = rep.mu_n;
  std::ofstream(out / "shift_report.json") << j.dump(2) << '\n';

  KeyValueConfig resolved;
  resolved.set("seed", std::to_string(seed));
  resolved.set("extractor", ext_tag);
  resolved.set("side", std::to_string(side));
  write_noise(resolved, "reference", spec_r);
  write_noise(resolved, "non_reference", spec_n);
  json extra;
  extra["report_digest"] = file_digest(out / "shift_report.json");
  write_run_manifest(out, "analyze-domain", c, resolved, extra);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Underwater image enhancement with quality-guided transfer learning"};
  app.require_subcommand(1);
  Common c;
  long seed = 0;
  auto add_common = [&](CLI::App* s) {
    s->add_option("--config", c.config, "Config file (key = value)")->check(CLI::ExistingFile);
    s->add_option("--manifest", c.manifests, "Dataset manifest (repeatable)");
    s->add_option("--out", c.out, "Output directory");
    s->add_option("--seed", seed, "Root seed, overrides the config");
    s->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
    s->add_option("--checkpoint", c.checkpoint, "Checkpoint file");
    s->add_option("--scorer", c.scorer, "Quality scorer")->check(CLI::IsMember({"proxy", "external"}));
    s->add_option("--scorer-command", c.scorer_command, "Command for --scorer external; {} is the image path");
  };
  auto* pre = app.add_subcommand("pretrain", "Supervised pretraining on paired data");
  auto* fin = app.add_subcommand("finetune", "Quality-guided fine-tuning on pseudo labels");
  auto* enh = app.add_subcommand("enhance", "Enhance images with a checkpoint");
  auto* eva = app.add_subcommand("evaluate", "Full- and no-reference metrics");
  auto* sel = app.add_subcommand("select-metric", "Rank quality metrics by the monotonicity law and PLCC");
  auto* dom = app.add_subcommand("analyze-domain", "Domain discrepancy and feature shift on synthetic noise");
  for (auto* s : {pre, fin, enh, eva, sel, dom}) add_common(s);
  std::string input_dir;
  enh->add_option("--input", input_dir, "Directory of input images");
  EvalOptions eo;
  eva->add_option("--pred", eo.pred, "Directory of predictions");
  eva->add_option("--target", eo.target, "Directory of references with matching file names");
  eva->add_option("--niqe-corpus", eo.niqe_corpus, "Pristine images to fit the NIQE model");
  eva->add_flag("--resize-full-reference", eo.resize_full_reference, "Resize to 256x256 before PSNR/SSIM too");
  SelectOptions so;
  sel->add_option("--ratios", so.ratios, "Comma-separated mixing grid");
  sel->add_option("--labels", so.labels, "CSV of image path, quality label for PLCC");
  sel->add_option("--niqe-corpus", so.niqe_corpus, "Pristine images to fit the NIQE model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (auto* s : {pre, fin, enh, eva, sel, dom})
    if (s->parsed() && s->count("--seed")) c.seed = seed;

  try {
    if (c.scorer == "external" && c.scorer_command.empty()) throw ConfigError("--scorer external needs --scorer-command");
    if (c.scorer != "external" && !c.scorer_command.empty()) throw ConfigError("--scorer-command requires --scorer external");
    const auto t0 = std::chrono::steady_clock::now();
    if (pre->parsed()) {
      run_pretrain(c);
    } else if (fin->parsed()) {
      run_finetune(c);
    } else if (enh->parsed()) {
      run_enhance(c, input_dir);
    } else if (eva->parsed()) {
      run_evaluate(c, eo);
    } else if (sel->parsed()) {
      run_select_metric(c, so);
    } else if (dom->parsed()) {
      run_analyze_domain(c);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log("done in " + std::to_string(secs) + " s");
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
