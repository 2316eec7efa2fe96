#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "uietl/checkpoint.hpp"
#include "uietl/config.hpp"
#include "uietl/digest.hpp"
#include "uietl/error.hpp"
#include "uietl/extractor.hpp"
#include "uietl/image.hpp"
#include "uietl/iqa/scorer.hpp"
#include "uietl/losses.hpp"
#include "uietl/manifest.hpp"
#include "uietl/net/restoration_net.hpp"
#include "uietl/optim.hpp"
#include "uietl/rng.hpp"

namespace uietl {

/// From `start_epoch` on, train with this batch and patch size. Patch 0 uses
/// whole images.
struct ScheduleStage {
  int start_epoch = 0;
  int batch = 1;
  int patch = 0;
  bool operator==(const ScheduleStage&) const = default;
};

inline std::vector<ScheduleStage> parse_schedule(const std::string& s) {
  std::vector<ScheduleStage> out;
  for (const auto& item : KeyValueConfig::split(s, ',')) {
    const auto f = KeyValueConfig::split(item, ':');
    if (f.size() != 3) throw ConfigError("schedule item '" + item + "' must be epoch:batch:patch");
    try {
      out.push_back({std::stoi(f[0]), std::stoi(f[1]), std::stoi(f[2])});
    } catch (const std::logic_error&) {
      throw ConfigError("schedule item '" + item + "' is not numeric");
    }
  }
  return out;
}

inline std::string format_schedule(const std::vector<ScheduleStage>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i)
    out += (i ? "," : "") + std::to_string(s[i].start_epoch) + ":" + std::to_string(s[i].batch) + ":" +
           std::to_string(s[i].patch);
  return out;
}

struct PretrainConfig {
  NetworkConfig network;
  int epochs = 50;
  long max_steps = 0;  // caps the whole run (and the schedule length) when > 0
  double lr = 3e-4;
  double lr_min = 1e-6;
  std::vector<ScheduleStage> schedule = {{0, 8, 64}, {25, 4, 96}, {38, 2, 128}};
  std::uint64_t seed = 0;
  double pearson_weight = 1.0;
  bool augment = true;
  bool identity_head = false;
  AdamWConfig adamw;
  int workers = 1;

  void validate() const {
    network.validate();
    if (epochs < 1) throw ConfigError("pretrain: epochs must be >= 1");
    if (max_steps < 0) throw ConfigError("pretrain: max_steps must be >= 0");
    if (!(lr >= 0) || !(lr_min >= 0) || lr_min > lr) throw ConfigError("pretrain: need 0 <= lr_min <= lr");
    if (!(pearson_weight >= 0)) throw ConfigError("pretrain: pearson_weight must be >= 0");
    if (workers < 1) throw ConfigError("pretrain: workers must be >= 1");
    if (schedule.empty() || schedule.front().start_epoch != 0)
      throw ConfigError("pretrain: schedule must start at epoch 0");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      const auto& s = schedule[i];
      if (s.batch < 1 || s.patch < 0) throw ConfigError("pretrain: schedule batch >= 1 and patch >= 0 required");
      if (s.patch % network.downsampling() != 0)
        throw AlignmentError("pretrain: patch " + std::to_string(s.patch) + " is not divisible by " +
                             std::to_string(network.downsampling()));
      if (i == 0) continue;
      const auto& p = schedule[i - 1];
      if (s.start_epoch <= p.start_epoch) throw ConfigError("pretrain: schedule epochs must increase");
      if (s.batch > p.batch) throw ConfigError("pretrain: schedule batch sizes must not increase");
      if (s.patch < p.patch) throw ConfigError("pretrain: schedule patch sizes must not decrease");
    }
  }

  const ScheduleStage& stage_at(int epoch) const {
    std::size_t k = 0;
    for (std::size_t i = 0; i < schedule.size(); ++i)
      if (schedule[i].start_epoch <= epoch) k = i;
    return schedule[k];
  }

  static PretrainConfig from_kv(const KeyValueConfig& kv) {
    PretrainConfig c;
    if (kv.get_string("stage", "pretrain") != "pretrain") throw ConfigError("config is not a pretrain config");
    c.network = read_network(kv);
    c.epochs = kv.get_int("epochs", c.epochs);
    c.max_steps = kv.get_long("max_steps", c.max_steps);
    c.lr = kv.get_double("lr", c.lr);
    c.lr_min = kv.get_double("lr_min", c.lr_min);
    if (kv.has("schedule")) c.schedule = parse_schedule(kv.get_string("schedule", ""));
    c.seed = static_cast<std::uint64_t>(kv.get_long("seed", static_cast<long>(c.seed)));
    c.pearson_weight = kv.get_double("pearson_weight", c.pearson_weight);
    c.augment = kv.get_bool("augment", c.augment);
    c.identity_head = kv.get_bool("identity_head", c.identity_head);
    c.adamw.beta1 = kv.get_double("adamw.beta1", c.adamw.beta1);
    c.adamw.beta2 = kv.get_double("adamw.beta2", c.adamw.beta2);
    c.adamw.eps = kv.get_double("adamw.eps", c.adamw.eps);
    c.adamw.weight_decay = kv.get_double("adamw.weight_decay", c.adamw.weight_decay);
    c.workers = kv.get_int("workers", c.workers);
    read_dataset_counts(kv);
    c.validate();
    return c;
  }

  KeyValueConfig to_kv() const {
    KeyValueConfig kv;
    kv.set("stage", "pretrain");
    write_network(kv, network);
    kv.set("epochs", std::to_string(epochs));
    kv.set("max_steps", std::to_string(max_steps));
    kv.set("lr", KeyValueConfig::format(lr));
    kv.set("lr_min", KeyValueConfig::format(lr_min));
    kv.set("schedule", format_schedule(schedule));
    kv.set("seed", std::to_string(seed));
    kv.set("pearson_weight", KeyValueConfig::format(pearson_weight));
    kv.set("augment", augment ? "true" : "false");
    kv.set("identity_head", identity_head ? "true" : "false");
    kv.set("adamw.beta1", KeyValueConfig::format(adamw.beta1));
    kv.set("adamw.beta2", KeyValueConfig::format(adamw.beta2));
    kv.set("adamw.eps", KeyValueConfig::format(adamw.eps));
    kv.set("adamw.weight_decay", KeyValueConfig::format(adamw.weight_decay));
    kv.set("workers", std::to_string(workers));
    return kv;
  }
};

struct FinetuneConfig {
  long steps = 1000;
  int batch = 2;
  int patch = 0;
  double lr = 1e-5;
  double lr_min = 0.0;
  LossWeights weights;
  double desired_q = -std::numeric_limits<double>::infinity();  // -inf disables early stopping
  int window = 10;
  std::uint64_t seed = 0;
  bool augment = true;
  AdamWConfig adamw;
  int workers = 1;

  void validate() const {
    weights.validate();
    if (steps < 1) throw ConfigError("finetune: steps must be >= 1");
    if (batch < 1) throw ConfigError("finetune: batch must be >= 1");
    if (patch < 0) throw ConfigError("finetune: patch must be >= 0");
    if (!(lr >= 0) || !(lr_min >= 0) || lr_min > lr) throw ConfigError("finetune: need 0 <= lr_min <= lr");
    if (window < 1) throw ConfigError("finetune: window must be >= 1");
    if (std::isnan(desired_q)) throw ConfigError("finetune: desired_q must not be NaN");
    if (workers < 1) throw ConfigError("finetune: workers must be >= 1");
  }

  static FinetuneConfig from_kv(const KeyValueConfig& kv) {
    FinetuneConfig c;
    if (kv.get_string("stage", "finetune") != "finetune") throw ConfigError("config is not a finetune config");
    c.steps = kv.get_long("steps", c.steps);
    c.batch = kv.get_int("batch", c.batch);
    c.patch = kv.get_int("patch", c.patch);
    c.lr = kv.get_double("lr", c.lr);
    c.lr_min = kv.get_double("lr_min", c.lr_min);
    c.weights.lambda1 = kv.get_double("lambda1", c.weights.lambda1);
    c.weights.lambda2 = kv.get_double("lambda2", c.weights.lambda2);
    c.weights.lambda3 = kv.get_double("lambda3", c.weights.lambda3);
    c.desired_q = kv.get_double("desired_q", c.desired_q);
    c.window = kv.get_int("window", c.window);
    c.seed = static_cast<std::uint64_t>(kv.get_long("seed", static_cast<long>(c.seed)));
    c.augment = kv.get_bool("augment", c.augment);
    c.adamw.beta1 = kv.get_double("adamw.beta1", c.adamw.beta1);
    c.adamw.beta2 = kv.get_double("adamw.beta2", c.adamw.beta2);
    c.adamw.eps = kv.get_double("adamw.eps", c.adamw.eps);
    c.adamw.weight_decay = kv.get_double("adamw.weight_decay", c.adamw.weight_decay);
    c.workers = kv.get_int("workers", c.workers);
    read_dataset_counts(kv);
    c.validate();
    return c;
  }

  KeyValueConfig to_kv() const {
    KeyValueConfig kv;
    kv.set("stage", "finetune");
    kv.set("steps", std::to_string(steps));
    kv.set("batch", std::to_string(batch));
    kv.set("patch", std::to_string(patch));
    kv.set("lr", KeyValueConfig::format(lr));
    kv.set("lr_min", KeyValueConfig::format(lr_min));
    kv.set("lambda1", KeyValueConfig::format(weights.lambda1));
    kv.set("lambda2", KeyValueConfig::format(weights.lambda2));
    kv.set("lambda3", KeyValueConfig::format(weights.lambda3));
    kv.set("desired_q", KeyValueConfig::format(desired_q));
    kv.set("window", std::to_string(window));
    kv.set("seed", std::to_string(seed));
    kv.set("augment", augment ? "true" : "false");
    kv.set("adamw.beta1", KeyValueConfig::format(adamw.beta1));
    kv.set("adamw.beta2", KeyValueConfig::format(adamw.beta2));
    kv.set("adamw.eps", KeyValueConfig::format(adamw.eps));
    kv.set("adamw.weight_decay", KeyValueConfig::format(adamw.weight_decay));
    kv.set("workers", std::to_string(workers));
    return kv;
  }
};

/// Fine-tuning unit: a degraded input, its pseudo label, and the score the
/// label received when it was generated.
template <class T>
struct SampleRecord {
  BasicImage<T> input;
  BasicImage<T> pseudo_label;
  double q_reference = 0;
  SourceTag source = SourceTag::kNonReference;
};

template <class T>
std::string records_digest(const std::vector<SampleRecord<T>>& records) {
  Sha256 h;
  for (const auto& r : records) {
    for (const auto* img : {&r.input, &r.pseudo_label}) {
      const int dims[2] = {img->height(), img->width()};
      h.update(dims, sizeof dims);
      h.update(img->data().data(), img->data().size_bytes());
    }
    h.update(&r.q_reference, sizeof r.q_reference);
    h.update(to_string(r.source));
  }
  return h.hex();
}

/// True once the mean of the last `window` batch-mean scores reaches
/// `desired`. A desired value of -inf never stops.
inline bool should_stop(const std::vector<double>& batch_mean_q, double desired, int window = 10) {
  if (std::isinf(desired) && desired < 0) return false;
  if (window < 1 || batch_mean_q.size() < static_cast<std::size_t>(window)) return false;
  double s = 0;
  for (auto it = batch_mean_q.end() - window; it != batch_mean_q.end(); ++it) s += *it;
  return s / window >= desired;
}

inline double trailing_mean(const std::vector<double>& v, std::size_t end, int window) {
  const std::size_t begin = end > static_cast<std::size_t>(window) ? end - window : 0;
  double s = 0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return end > begin ? s / static_cast<double>(end - begin) : 0.0;
}

struct PretrainStepLog {
  long step = 0;
  int epoch = 0;
  int batch = 0;
  int patch = 0;
  double pixel = 0;
  double pearson = 0;
  double total = 0;
  double lr = 0;
};

struct PretrainEpochLog {
  int epoch = 0;
  int batch = 0;
  int patch = 0;
  long steps = 0;
  double pixel = 0;
  double pearson = 0;
  double total = 0;
};

struct FinetuneStepLog {
  long step = 0;
  LossBreakdown loss;
  double mean_q = 0;
  double lr = 0;
};

template <class T>
struct PretrainResult {
  Checkpoint<T> checkpoint;
  std::vector<PretrainStepLog> steps;
  std::vector<PretrainEpochLog> epochs;
};

template <class T>
struct FinetuneResult {
  Checkpoint<T> checkpoint;
  std::vector<FinetuneStepLog> steps;
  std::vector<double> trailing_q;  // trailing-window mean of the batch-mean score after each step
  bool stopped_early = false;
};

inline void write_pretrain_log(std::ostream& os, const std::vector<PretrainEpochLog>& log) {
  os << "epoch,batch,patch,steps,pixel,pearson,total\n";
  os.precision(10);
  for (const auto& r : log)
    os << r.epoch << ',' << r.batch << ',' << r.patch << ',' << r.steps << ',' << r.pixel << ',' << r.pearson
       << ',' << r.total << '\n';
}

inline void write_pretrain_step_log(std::ostream& os, const std::vector<PretrainStepLog>& log) {
  os << "step,epoch,batch,patch,pixel,pearson,total,lr\n";
  os.precision(10);
  for (const auto& r : log)
    os << r.step << ',' << r.epoch << ',' << r.batch << ',' << r.patch << ',' << r.pixel << ',' << r.pearson
       << ',' << r.total << ',' << r.lr << '\n';
}

/// Columns: step, pixel, perceptual, score, total, mean_q, lr. `score` is the
/// weighted score term, so total = lambda1 * pixel + lambda2 * perceptual - score.
inline void write_finetune_log(std::ostream& os, const std::vector<FinetuneStepLog>& log) {
  os << "step,pixel,perceptual,score,total,mean_q,lr\n";
  os.precision(10);
  for (const auto& r : log)
    os << r.step << ',' << r.loss.pixel << ',' << r.loss.perceptual << ',' << r.loss.score_term << ','
       << r.loss.total << ',' << r.mean_q << ',' << r.lr << '\n';
}

namespace train_detail {

// Runs `fn(j)` for j in [0, n) on up to `workers` threads. Results are
// written by index, so the reduction order never depends on scheduling.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int j = 0; j < n; ++j) fn(j);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int j = w; j < n; j += workers) {
        try {
          fn(j);
        } catch (...) {
          errors[static_cast<std::size_t>(j)] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, long epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(split_seed(seed, static_cast<std::uint64_t>(Stream::kEpochOrder), static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

struct SampleDraw {
  bool flip_h = false, flip_v = false;
  std::uint64_t patch_seed = 0;
};

inline SampleDraw draw(std::uint64_t seed, long step, int j, bool augment) {
  Rng rng(split_seed(split_seed(seed, Stream::kAugment), static_cast<std::uint64_t>(step),
                     static_cast<std::uint64_t>(j)));
  SampleDraw d;
  if (augment) {
    d.flip_h = uniform01(rng) < 0.5;
    d.flip_v = uniform01(rng) < 0.5;
  }
  d.patch_seed = split_seed(split_seed(seed, Stream::kPatch), static_cast<std::uint64_t>(step),
                            static_cast<std::uint64_t>(j));
  return d;
}

template <class T>
BasicImagePair<T> prepare(const BasicImagePair<T>& src, const SampleDraw& d, int patch, int alignment) {
  BasicImagePair<T> p = patch > 0 ? extract_patch(src, patch, d.patch_seed, alignment) : src;
  if (d.flip_h || d.flip_v) p = augment_flip(p, d.flip_h, d.flip_v);
  return p;
}

// Forward the network on `input`, seed the output with `dloss` and collect
// parameter gradients.
template <class T>
GradientMap<T> network_gradient(const ParameterStore<T>& params, const NetworkConfig& cfg,
                                const BasicImage<T>& input,
                                const std::function<BasicImage<T>(const BasicImage<T>&)>& dloss) {
  Graph<T> g(true);
  ParamBinder<T> P(g, params);
  Var<T> out = build_forward(P, g.constant(image_to_tensor(input)), cfg);
  const BasicImage<T> grad = dloss(tensor_to_image(out->value));
  g.backward(out, image_to_tensor(grad));
  GradientMap<T> grads = zero_gradients(params);
  P.collect(grads);
  return grads;
}

inline void check_finite(double v, long step, const char* what) {
  if (!std::isfinite(v)) throw TrainingError(std::string(what) + " is not finite at step " + std::to_string(step));
}

template <class T>
void check_finite(const GradientMap<T>& g, long step) {
  for (const auto& [name, v] : g)
    for (T x : v)
      if (!std::isfinite(x)) throw TrainingError("gradient of " + name + " is not finite at step " + std::to_string(step));
}

}  // namespace train_detail

/// Number of optimisation steps the schedule implies for a dataset.
inline long pretrain_total_steps(const PretrainConfig& cfg, std::size_t dataset_size) {
  long total = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto b = static_cast<std::size_t>(cfg.stage_at(e).batch);
    total += static_cast<long>((dataset_size + b - 1) / b);
  }
  return cfg.max_steps > 0 ? std::min(total, cfg.max_steps) : total;
}

template <class T>
Checkpoint<T> initial_checkpoint(const PretrainConfig& cfg) {
  Checkpoint<T> c;
  net::InitOptions opts;
  opts.identity_head = cfg.identity_head;
  c.params = init_network<T>(cfg.network, cfg.seed, opts);
  c.network = cfg.network;
  c.stage = "init";
  c.config_echo = cfg.to_kv().str();
  return c;
}

/// Supervised pretraining with pixel + weighted Pearson loss under a cosine
/// schedule. Pass `resume` to continue a pretrain checkpoint; `stop_after`
/// ends the run early (after that many total steps) without changing the
/// schedule, so a stopped and resumed run follows the uninterrupted one.
template <class T>
PretrainResult<T> pretrain(const std::vector<BasicImagePair<T>>& pairs, const PretrainConfig& cfg,
                           const Checkpoint<T>* resume = nullptr, long stop_after = -1) {
  cfg.validate();
  if (pairs.empty()) throw RangeError("pretrain: empty dataset");
  for (const auto& p : pairs) require_same_shape(p.input, p.target, "pretrain");
  const long total = pretrain_total_steps(cfg, pairs.size());
  const int align = cfg.network.downsampling();

  PretrainResult<T> res;
  AdamW<T> opt(cfg.adamw);
  if (resume) {
    if (resume->stage != "pretrain" && resume->stage != "init")
      throw ConfigError("pretrain: cannot resume from a " + resume->stage + " checkpoint");
    if (!(resume->network == cfg.network)) throw ConfigError("pretrain: checkpoint network differs from config");
    res.checkpoint = *resume;
    opt.restore(resume->optimizer_step, resume->moments);
  } else {
    res.checkpoint = initial_checkpoint<T>(cfg);
  }
  auto& params = res.checkpoint.params;
  const long start = res.checkpoint.step;
  const long end = stop_after >= 0 ? std::min(total, stop_after) : total;

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs && step < end; ++epoch) {
    const ScheduleStage& st = cfg.stage_at(epoch);
    const auto order = train_detail::epoch_order(pairs.size(), cfg.seed, epoch);
    PretrainEpochLog elog{epoch, st.batch, st.patch, 0, 0, 0, 0};
    for (std::size_t b0 = 0; b0 < order.size() && step < end; b0 += static_cast<std::size_t>(st.batch), ++step) {
      if (step < start) continue;
      const int B = static_cast<int>(std::min(order.size() - b0, static_cast<std::size_t>(st.batch)));
      std::vector<GradientMap<T>> grads(static_cast<std::size_t>(B));
      std::vector<double> pix(static_cast<std::size_t>(B)), cor(static_cast<std::size_t>(B));
      train_detail::parallel_for(B, cfg.workers, [&](int j) {
        const auto d = train_detail::draw(cfg.seed, step, j, cfg.augment);
        const auto sample = train_detail::prepare(pairs[order[b0 + static_cast<std::size_t>(j)]], d, st.patch, align);
        grads[static_cast<std::size_t>(j)] = train_detail::network_gradient<T>(
            params, cfg.network, sample.input, [&](const BasicImage<T>& pred) {
              BasicImage<T> gp, gc;
              pix[static_cast<std::size_t>(j)] = pixel_loss(pred, sample.target, &gp);
              if (cfg.pearson_weight > 0) {
                try {
                  cor[static_cast<std::size_t>(j)] = pearson_loss(pred, sample.target, &gc);
                } catch (const DegenerateInputError& e) {
                  throw TrainingError("step " + std::to_string(step) + ": " + e.what());
                }
                for (std::size_t i = 0; i < gp.size(); ++i)
                  gp[i] = static_cast<T>((gp[i] + cfg.pearson_weight * gc[i]) / B);
              } else {
                for (std::size_t i = 0; i < gp.size(); ++i) gp[i] = static_cast<T>(gp[i] / B);
              }
              return gp;
            });
      });
      GradientMap<T> sum = zero_gradients(params);
      for (const auto& g : grads) add_into(sum, g);
      PretrainStepLog row{step, epoch, st.batch, st.patch, 0, 0, 0, cosine_lr(step, total, cfg.lr, cfg.lr_min)};
      for (int j = 0; j < B; ++j) {
        row.pixel += pix[static_cast<std::size_t>(j)] / B;
        row.pearson += cor[static_cast<std::size_t>(j)] / B;
      }
      row.total = row.pixel + cfg.pearson_weight * row.pearson;
      train_detail::check_finite(row.total, step, "loss");
      train_detail::check_finite(sum, step);
      opt.step(params, sum, row.lr);
      res.steps.push_back(row);
      elog.steps += 1;
      elog.pixel += row.pixel;
      elog.pearson += row.pearson;
      elog.total += row.total;
    }
    if (elog.steps > 0) {
      elog.pixel /= static_cast<double>(elog.steps);
      elog.pearson /= static_cast<double>(elog.steps);
      elog.total /= static_cast<double>(elog.steps);
      res.epochs.push_back(elog);
    }
  }
  res.checkpoint.stage = "pretrain";
  res.checkpoint.config_echo = cfg.to_kv().str();
  res.checkpoint.step = std::max(start, step);
  res.checkpoint.optimizer_step = opt.step_count();
  res.checkpoint.moments = opt.moments();
  return res;
}

/// Enhances each input with the checkpoint and scores the result.
template <class T>
std::vector<SampleRecord<T>> generate_pseudo_labels(const std::vector<BasicImage<T>>& inputs,
                                                    const Checkpoint<T>& ckpt,
                                                    const iqa::QualityScorer<T>& scorer,
                                                    const std::vector<SourceTag>& sources = {}, int workers = 1) {
  if (!sources.empty() && sources.size() != inputs.size())
    throw ShapeError("generate_pseudo_labels: one source tag per input required");
  std::vector<SampleRecord<T>> out(inputs.size());
  train_detail::parallel_for(static_cast<int>(inputs.size()), workers, [&](int i) {
    auto& r = out[static_cast<std::size_t>(i)];
    r.input = inputs[static_cast<std::size_t>(i)];
    r.pseudo_label = forward_enhance(r.input, ckpt.params, ckpt.network);
    r.q_reference = scorer.score(r.pseudo_label);
    if (!sources.empty()) r.source = sources[static_cast<std::size_t>(i)];
  });
  return out;
}

/// Fine-tunes the network towards its pseudo labels while raising the frozen
/// scorer's opinion of its outputs. Resuming is supported from a finetune
/// checkpoint; `stop_after` works as in pretrain.
template <class T>
FinetuneResult<T> finetune(const std::vector<SampleRecord<T>>& records, const Checkpoint<T>& ckpt,
                           const iqa::QualityScorer<T>& scorer, const FinetuneConfig& cfg,
                           const FeatureExtractor<T>& extractor, long stop_after = -1) {
  cfg.validate();
  if (!scorer.differentiable())
    throw CapabilityError("finetune: scorer '" + scorer.tag() + "' is not differentiable");
  if (records.empty()) throw RangeError("finetune: no records");
  const std::string scorer_digest = scorer.parameters().digest();
  const int align = ckpt.network.downsampling();

  FinetuneResult<T> res;
  res.checkpoint = ckpt;
  res.checkpoint.params.set_trainable(true);
  AdamW<T> opt(cfg.adamw);
  long start = 0;
  if (ckpt.stage == "finetune") {
    opt.restore(ckpt.optimizer_step, ckpt.moments);
    start = ckpt.step;
  }
  auto& params = res.checkpoint.params;
  const long end = stop_after >= 0 ? std::min(cfg.steps, stop_after) : cfg.steps;
  const std::size_t N = records.size();
  std::vector<double> history;

  long cached_epoch = -1;
  std::vector<std::size_t> order;
  long step = start;
  for (; step < end; ++step) {
    const double lr = cosine_lr(step, cfg.steps, cfg.lr, cfg.lr_min);
    const int B = cfg.batch;
    std::vector<std::size_t> idx(static_cast<std::size_t>(B));
    for (int j = 0; j < B; ++j) {
      const long k = step * B + j;
      const long epoch = k / static_cast<long>(N);
      if (epoch != cached_epoch) {
        order = train_detail::epoch_order(N, cfg.seed, epoch);
        cached_epoch = epoch;
      }
      idx[static_cast<std::size_t>(j)] = order[static_cast<std::size_t>(k % static_cast<long>(N))];
    }
    std::vector<GradientMap<T>> grads(static_cast<std::size_t>(B));
    std::vector<LossBreakdown> parts(static_cast<std::size_t>(B));
    std::vector<double> q(static_cast<std::size_t>(B));
    train_detail::parallel_for(B, cfg.workers, [&](int j) {
      const auto& rec = records[idx[static_cast<std::size_t>(j)]];
      const auto d = train_detail::draw(cfg.seed, step, j, cfg.augment);
      const auto sample = train_detail::prepare(BasicImagePair<T>{rec.input, rec.pseudo_label}, d, cfg.patch, align);
      grads[static_cast<std::size_t>(j)] = train_detail::network_gradient<T>(
          params, res.checkpoint.network, sample.input, [&](const BasicImage<T>& pred) {
            BasicImage<T> dq, dl;
            const bool need_q_grad = cfg.weights.lambda3 > 0;
            const double qp = need_q_grad ? scorer.score_grad(pred, dq) : scorer.score(pred);
            q[static_cast<std::size_t>(j)] = qp;
            parts[static_cast<std::size_t>(j)] = total_loss(pred, sample.target, qp, rec.q_reference, cfg.weights,
                                                           extractor, &dl, need_q_grad ? &dq : nullptr);
            for (std::size_t i = 0; i < dl.size(); ++i) dl[i] = static_cast<T>(dl[i] / B);
            return dl;
          });
    });
    GradientMap<T> sum = zero_gradients(params);
    for (const auto& g : grads) add_into(sum, g);

    FinetuneStepLog row;
    row.step = step;
    row.lr = lr;
    for (int j = 0; j < B; ++j) {
      const auto& p = parts[static_cast<std::size_t>(j)];
      row.loss.pixel += p.pixel / B;
      row.loss.perceptual += p.perceptual / B;
      row.loss.score_gap += p.score_gap / B;
      row.mean_q += q[static_cast<std::size_t>(j)] / B;
    }
    row.loss.score_term = cfg.weights.lambda3 == 0.0 ? 0.0 : cfg.weights.lambda3 * row.loss.score_gap;
    row.loss.total = row.loss.reconstruct(cfg.weights);
    train_detail::check_finite(row.loss.total, step, "loss");
    train_detail::check_finite(sum, step);
    opt.step(params, sum, lr);
    res.steps.push_back(row);
    history.push_back(row.mean_q);
    res.trailing_q.push_back(trailing_mean(history, history.size(), cfg.window));
    if (should_stop(history, cfg.desired_q, cfg.window)) {
      res.stopped_early = true;
      ++step;
      break;
    }
  }
  if (scorer.parameters().digest() != scorer_digest)
    throw TrainingError("finetune: scorer parameters changed during training");
  res.checkpoint.stage = "finetune";
  res.checkpoint.config_echo = cfg.to_kv().str();
  res.checkpoint.step = step;
  res.checkpoint.optimizer_step = opt.step_count();
  res.checkpoint.moments = opt.moments();
  return res;
}

}  // namespace uietl
