#include "deepsum/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include "deepsum/baselines.hpp"
#include "deepsum/errors.hpp"
#include "deepsum/metrics.hpp"
#include "deepsum/ops.hpp"

namespace deepsum {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

std::mt19937_64 epoch_rng(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{seed, static_cast<std::uint64_t>(epoch), std::uint64_t{0x5eed}};
  return std::mt19937_64(seq);
}

std::vector<std::vector<double>> snapshot(const ModelParams& params) {
  std::vector<std::vector<double>> out;
  for (const Tensor& t : params.tensors().tensors()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

void restore(ModelParams& params, const std::vector<std::vector<double>>& values) {
  const auto tensors = params.tensors().tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor t = tensors[i];
    auto dst = t.mutable_values();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

void clear_grads(const ModelParams& params) {
  for (Tensor t : params.tensors().tensors()) t.zero_grad();
}

void require_finite(double value, Stage stage, std::size_t epoch, std::size_t sample) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string("non-finite loss in ") + stage_name(stage) + " at epoch " + std::to_string(epoch) +
                       ", sample " + std::to_string(sample));
  }
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

void require_samples(const std::vector<PatchSample>& train, const ModelConfig& config) {
  if (train.empty()) throw DataError("no training samples");
  for (const auto& s : train) {
    if (s.ilr.size() != config.n_images) {
      throw ConfigError("sample has " + std::to_string(s.ilr.size()) + " images, model takes " +
                        std::to_string(config.n_images));
    }
  }
}

// Validation bookkeeping shared by the three stages: best snapshot and the
// consecutive-worse counter.
class Tracker {
 public:
  Tracker(ModelParams& params, const TrainConfig& cfg, const EpochSink& sink)
      : params_(params), cfg_(cfg), sink_(sink), start_(Clock::now()) {
    result_.best_validation = -std::numeric_limits<double>::infinity();
  }

  bool due(std::size_t epoch) const {
    const std::size_t last = cfg_.start_epoch + cfg_.epochs - 1;
    return (epoch + 1) % cfg_.validate_every == 0 || epoch == last;
  }

  // Returns false when training should stop.
  bool record(std::size_t epoch, double loss, double validation) {
    EpochRecord rec{epoch, cfg_.stage, loss, validation,
                    std::chrono::duration<double>(Clock::now() - start_).count()};
    result_.history.push_back(rec);
    if (sink_) sink_(rec);
    if (std::isnan(validation)) return true;
    if (validation > result_.best_validation) {
      result_.best_validation = validation;
      result_.best_epoch = epoch;
      best_ = snapshot(params_);
      worse_ = 0;
      return true;
    }
    if (++worse_ >= cfg_.patience) {
      result_.stopped_early = true;
      return false;
    }
    return true;
  }

  TrainResult finish() {
    if (!best_.empty()) restore(params_, best_);
    return std::move(result_);
  }

 private:
  ModelParams& params_;
  const TrainConfig& cfg_;
  const EpochSink& sink_;
  Clock::time_point start_;
  TrainResult result_;
  std::vector<std::vector<double>> best_;
  std::size_t worse_ = 0;
};

// Cosine decay from the configured rate to final_lr_fraction of it over the
// epochs of this run.
double scheduled_lr(const TrainConfig& cfg, std::size_t epoch) {
  const double pos = cfg.epochs > 1 ? double(epoch - cfg.start_epoch) / double(cfg.epochs - 1) : 0.0;
  const double f = cfg.final_lr_fraction;
  return cfg.adam.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * pos)));
}

Tensor sisr_output(const Tensor& input, const ModelParams& params) {
  return sisr_project(sisrnet_forward(input, params), input, params);
}

ForwardResult run_model(const PatchSample& s, const ModelParams& params, bool use_regnet) {
  const Tensor stack = stack_to_tensor(s.ilr);
  if (use_regnet) return deepsum_forward(stack, s.masks, params);
  return deepsum_forward_fixed(stack, s.masks, params, std::vector<Shift>(s.ilr.size() - 1));
}

}  // namespace

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::SisrPretrain:
      return "sisr_pretrain";
    case Stage::RegnetPretrain:
      return "regnet_pretrain";
    case Stage::EndToEnd:
      return "end_to_end";
  }
  return "unknown";
}

Stage parse_stage(const std::string& text) {
  if (text == "sisr" || text == "sisr_pretrain") return Stage::SisrPretrain;
  if (text == "regnet" || text == "regnet_pretrain") return Stage::RegnetPretrain;
  if (text == "e2e" || text == "end_to_end") return Stage::EndToEnd;
  throw ConfigError("unknown training stage '" + text + "' (expected sisr, regnet or e2e)");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (validate_every == 0) throw ConfigError("validate_every must be positive");
  if (patience == 0) throw ConfigError("patience must be positive");
  if (!(final_lr_fraction > 0.0) || final_lr_fraction > 1.0) throw ConfigError("final_lr_fraction must be in (0, 1]");
  if (d < 0) throw ConfigError("crop border d must be non-negative");
  if (!(adam.learning_rate > 0.0) || !(adam.eps > 0.0) || adam.beta1 < 0.0 || adam.beta1 >= 1.0 ||
      adam.beta2 < 0.0 || adam.beta2 >= 1.0) {
    throw ConfigError("invalid Adam settings");
  }
}

std::string log_line(const EpochRecord& r) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "epoch=%zu stage=%s loss=%.6f val=%.6f wall_s=%.3f", r.epoch, stage_name(r.stage),
                r.loss, r.validation, r.wall_seconds);
  return buf;
}

std::pair<double, double> residual_statistics(const std::vector<PatchSample>& samples) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    const Image avg = reliable_mean(s.ilr, s.masks);
    for (std::size_t p = 0; p < avg.size(); ++p) {
      if (!s.hr_mask.bits[p]) continue;
      const double v = s.hr.pixels[p] - avg.pixels[p];
      sum += v;
      sq += v * v;
      ++n;
    }
  }
  if (n == 0) throw DataError("no clear HR pixels for residual statistics");
  const double mean = sum / double(n);
  const double var = std::max(0.0, sq / double(n) - mean * mean);
  return {mean, var > 0.0 ? std::sqrt(var) : 1.0};
}

double sisr_validation_loss(const ModelParams& params, const std::vector<PatchSample>& samples, int d) {
  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    const Image sr = tensor_to_image(sisr_output(stack_to_tensor({s.ilr[0]}), params));
    try {
      total += corrected_mse(sr, s.hr, s.hr_mask, s.masks[0], d).value;
      ++n;
    } catch (const UnscorableSample&) {
    }
  }
  return n ? total / double(n) : kNan;
}

double sisr_validation_mpsnr(const ModelParams& params, const std::vector<PatchSample>& samples, int d) {
  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    const Image sr = tensor_to_image(sisr_output(stack_to_tensor({s.ilr[0]}), params));
    try {
      total += mpsnr(sr, s.hr, s.hr_mask, s.masks[0], d).value;
      ++n;
    } catch (const UnscorableSample&) {
    }
  }
  return n ? total / double(n) : kNan;
}

TrainResult pretrain_sisr(ModelParams& params, const std::vector<PatchSample>& train,
                          const std::vector<PatchSample>& validation, const TrainConfig& cfg, const EpochSink& sink) {
  cfg.validate();
  require_samples(train, params.config());
  if (cfg.start_epoch == 0) {
    const auto [mean, std] = residual_statistics(train);
    params.set_residual_stats(mean, std);
  }
  Adam adam(params.trainable("sisr/"), cfg.adam);
  Tracker tracker(params, cfg, sink);
  for (std::size_t epoch = cfg.start_epoch; epoch < cfg.start_epoch + cfg.epochs; ++epoch) {
    adam.set_learning_rate(scheduled_lr(cfg, epoch));
    auto rng = epoch_rng(cfg.seed, epoch);
    const auto order = shuffled(train.size(), rng);
    std::uniform_int_distribution<std::size_t> pick(0, params.config().n_images - 1);
    std::vector<std::size_t> image_of(train.size());
    for (auto& j : image_of) j = pick(rng);

    double epoch_loss = 0.0;
    std::size_t scored = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      std::vector<Image> inputs;
      for (std::size_t k = b0; k < b1; ++k) inputs.push_back(train[order[k]].ilr[image_of[order[k]]]);
      const Tensor out = sisr_output(stack_to_tensor(inputs), params);
      Tensor batch_loss;
      std::size_t batch_scored = 0;
      for (std::size_t k = b0; k < b1; ++k) {
        const PatchSample& s = train[order[k]];
        try {
          const Tensor l = corrected_loss(gather_rows(out, {k - b0}), s.hr, s.hr_mask, s.masks[image_of[order[k]]], cfg.d);
          require_finite(l.item(), cfg.stage, epoch, order[k]);
          batch_loss = batch_loss.defined() ? add(batch_loss, l) : l;
          epoch_loss += l.item();
          ++batch_scored;
        } catch (const UnscorableSample&) {
        }
      }
      if (batch_scored == 0) continue;
      scale(batch_loss, 1.0 / double(batch_scored)).backward();
      adam.step();
      clear_grads(params);
      scored += batch_scored;
    }
    const double val = tracker.due(epoch) && !validation.empty() ? sisr_validation_mpsnr(params, validation, cfg.d) : kNan;
    if (!tracker.record(epoch, scored ? epoch_loss / double(scored) : kNan, val)) break;
  }
  return tracker.finish();
}

std::vector<std::size_t> balanced_labels(std::size_t count, std::size_t classes, std::mt19937_64& rng) {
  std::vector<std::size_t> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = i % classes;
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

Tensor shifted_feature_stack(const Tensor& base, const std::vector<std::size_t>& labels, std::size_t k) {
  if (base.rank() != 4 || base.dim(0) != 1) throw ShapeError("base features must be [1,H,W,F], got " + shape_str(base.shape()));
  const std::size_t n = labels.size() + 1, h = base.dim(1), w = base.dim(2), f = base.dim(3);
  const std::size_t plane = h * w * f;
  const auto src = base.values();
  std::vector<double> out(n * plane);
  std::copy(src.begin(), src.end(), out.begin());
  for (std::size_t i = 1; i < n; ++i) {
    // The aligning filter at s undoes a displacement of -s.
    const Shift s = class_shift(labels[i - 1], k);
    const long dy = -s.dy, dx = -s.dx;
    for (long y = 0; y < long(h); ++y) {
      const long sy = std::clamp(y - dy, 0L, long(h) - 1);
      for (long x = 0; x < long(w); ++x) {
        const long sx = std::clamp(x - dx, 0L, long(w) - 1);
        const double* from = src.data() + (sy * w + sx) * f;
        std::copy(from, from + f, out.begin() + i * plane + (y * w + x) * f);
      }
    }
  }
  Shape shape = base.shape();
  shape[0] = n;
  return Tensor(std::move(shape), std::move(out));
}

double regnet_accuracy(const ModelParams& params, const std::vector<PatchSample>& samples, std::uint64_t seed) {
  if (samples.empty()) return kNan;
  NoGradGuard no_grad;
  const std::size_t k = params.config().filter_size, moving = params.config().n_images - 1;
  std::mt19937_64 rng(seed);
  const auto labels = balanced_labels(samples.size() * moving, k * k, rng);
  std::size_t correct = 0;
  for (std::size_t si = 0; si < samples.size(); ++si) {
    const std::vector<std::size_t> lab(labels.begin() + si * moving, labels.begin() + (si + 1) * moving);
    const Tensor base = sisrnet_forward(stack_to_tensor({samples[si].ilr[0]}), params);
    const Tensor logits = regnet_logits(shifted_feature_stack(base, lab, k), params);
    for (std::size_t i = 0; i < moving; ++i) {
      const auto row = logits.values().subspan(i * k * k, k * k);
      const std::size_t arg = std::size_t(std::max_element(row.begin(), row.end()) - row.begin());
      if (arg == lab[i]) ++correct;
    }
  }
  return double(correct) / double(labels.size());
}

TrainResult pretrain_regnet(ModelParams& params, const std::vector<PatchSample>& train,
                            const std::vector<PatchSample>& validation, const TrainConfig& cfg, const EpochSink& sink) {
  cfg.validate();
  require_samples(train, params.config());
  const std::size_t k = params.config().filter_size, moving = params.config().n_images - 1;
  Adam adam(params.trainable("regnet/"), cfg.adam);
  Tracker tracker(params, cfg, sink);
  for (std::size_t epoch = cfg.start_epoch; epoch < cfg.start_epoch + cfg.epochs; ++epoch) {
    adam.set_learning_rate(scheduled_lr(cfg, epoch));
    auto rng = epoch_rng(cfg.seed, epoch);
    const auto order = shuffled(train.size(), rng);
    const auto labels = balanced_labels(train.size() * moving, k * k, rng);
    std::uniform_int_distribution<std::size_t> pick(0, params.config().n_images - 1);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      for (std::size_t pos = b0; pos < b1; ++pos) {
        const std::vector<std::size_t> lab(labels.begin() + pos * moving, labels.begin() + (pos + 1) * moving);
        const Image& img = train[order[pos]].ilr[pick(rng)];
        Tensor feats;
        {
          NoGradGuard no_grad;
          feats = shifted_feature_stack(sisrnet_forward(stack_to_tensor({img}), params), lab, k);
        }
        const Tensor loss = softmax_cross_entropy(regnet_logits(feats, params), lab);
        require_finite(loss.item(), cfg.stage, epoch, order[pos]);
        epoch_loss += loss.item();
        scale(loss, 1.0 / double(b1 - b0)).backward();
      }
      adam.step();
      clear_grads(params);
    }
    const double val = tracker.due(epoch) && !validation.empty() ? regnet_accuracy(params, validation, cfg.seed + 7919)
                                                                   : kNan;
    if (!tracker.record(epoch, epoch_loss / double(train.size()), val)) break;
  }
  return tracker.finish();
}

double deepsum_validation_mpsnr(const ModelParams& params, const std::vector<PatchSample>& samples, int d,
                                bool use_regnet) {
  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    const ForwardResult fwd = run_model(s, params, use_regnet);
    try {
      total += mpsnr(tensor_to_image(fwd.sr), s.hr, s.hr_mask, joint_clear_mask(fwd.aligned_masks), d).value;
      ++n;
    } catch (const UnscorableSample&) {
    }
  }
  return n ? total / double(n) : kNan;
}

TrainResult train_end_to_end(ModelParams& params, const std::vector<PatchSample>& train,
                             const std::vector<PatchSample>& validation, const TrainConfig& cfg, const EpochSink& sink) {
  cfg.validate();
  require_samples(train, params.config());
  std::vector<Tensor> trainable = params.trainable("sisr/conv");
  for (const char* prefix : {"regnet/", "fusion/"}) {
    if (!cfg.use_regnet && std::string(prefix) == "regnet/") continue;
    const auto more = params.trainable(prefix);
    trainable.insert(trainable.end(), more.begin(), more.end());
  }
  Adam adam(trainable, cfg.adam);
  Tracker tracker(params, cfg, sink);
  for (std::size_t epoch = cfg.start_epoch; epoch < cfg.start_epoch + cfg.epochs; ++epoch) {
    adam.set_learning_rate(scheduled_lr(cfg, epoch));
    auto rng = epoch_rng(cfg.seed, epoch);
    const auto order = shuffled(train.size(), rng);
    double epoch_loss = 0.0;
    std::size_t scored = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      std::vector<Tensor> losses;
      for (std::size_t pos = b0; pos < b1; ++pos) {
        const PatchSample& s = train[order[pos]];
        const ForwardResult fwd = run_model(s, params, cfg.use_regnet);
        try {
          Tensor l = corrected_loss(fwd.sr, s.hr, s.hr_mask, joint_clear_mask(fwd.aligned_masks), cfg.d);
          require_finite(l.item(), cfg.stage, epoch, order[pos]);
          losses.push_back(std::move(l));
        } catch (const UnscorableSample&) {
        }
      }
      if (losses.empty()) continue;
      for (Tensor& l : losses) {
        epoch_loss += l.item();
        scale(l, 1.0 / double(losses.size())).backward();
      }
      scored += losses.size();
      adam.step();
      clear_grads(params);
    }
    const double val = tracker.due(epoch) && !validation.empty()
                           ? deepsum_validation_mpsnr(params, validation, cfg.d, cfg.use_regnet)
                           : kNan;
    if (!tracker.record(epoch, scored ? epoch_loss / double(scored) : kNan, val)) break;
  }
  return tracker.finish();
}

void SlidingConfig::validate() const {
  if (num_estimates == 0) throw ConfigError("num_estimates must be at least 1");
}

Image sliding_window_infer(const Scene& scene, const ModelParams& params, const SlidingConfig& cfg, bool use_regnet) {
  cfg.validate();
  const std::size_t n = params.config().n_images, m = scene.size();
  if (m < n) {
    throw DataError("scene " + scene.id + " has " + std::to_string(m) + " images, model needs " + std::to_string(n));
  }
  const RegisteredStack reg = prepare_ilr(scene, params.config().r, kPreRegistrationBound);
  const auto order = clearest_order(scene.lr_masks);
  const std::size_t windows = std::min(cfg.num_estimates, m - n + 1);
  NoGradGuard no_grad;
  Image total;
  for (std::size_t w = 0; w < windows; ++w) {
    PatchSample window;
    std::vector<std::size_t> idx{order[0]};
    for (std::size_t j = 0; j + 1 < n; ++j) idx.push_back(order[1 + w + j]);
    for (std::size_t i : idx) {
      window.ilr.push_back(reg.images[i]);
      window.masks.push_back(reg.masks[i]);
    }
    const Image sr = tensor_to_image(run_model(window, params, use_regnet).sr);
    if (w == 0) {
      total = sr;
    } else {
      for (std::size_t p = 0; p < total.size(); ++p) total.pixels[p] += sr.pixels[p];
    }
  }
  for (double& p : total.pixels) p /= double(windows);
  return total;
}

}  // namespace deepsum
