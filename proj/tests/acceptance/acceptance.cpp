// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status 0 only if every selected criterion passes.
//
//   deepsum_acceptance [--config FILE] [--work DIR] [--criteria 1,2,...]
//
// Criteria 4, 7, 8 and 9 share one desk-scale training run driven by the
// config (configs/default.cfg unless given).

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "deepsum/baselines.hpp"
#include "deepsum/checkpoint.hpp"
#include "deepsum/config.hpp"
#include "deepsum/datagen.hpp"
#include "deepsum/metrics.hpp"
#include "deepsum/model.hpp"
#include "deepsum/ops.hpp"
#include "deepsum/pipeline.hpp"
#include "deepsum/training.hpp"
#include "test_support.hpp"

using namespace deepsum;
using namespace deepsum::testing;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kOpGradTol = 1e-5;
constexpr double kGraphGradTol = 1e-4;
constexpr double kGradSuiteBudgetS = 120.0;
constexpr double kOracleTolDb = 1e-9;
constexpr double kRegnetAccuracy = 0.95;
constexpr double kHistogramTol = 0.05;
constexpr double kRegnetBudgetS = 600.0;
constexpr double kIbpFraction = 0.01;
constexpr std::size_t kIbpIterations = 30;
constexpr double kOutlierRate = 0.01;
constexpr std::size_t kMinTestScenes = 10;
constexpr double kDeepsumMarginDb = 0.5;
constexpr double kPipelineBudgetS = 1800.0;
constexpr std::size_t kSlidingSeeds = 10;
constexpr std::size_t kSlidingWins = 8;
constexpr std::size_t kSlidingImages = 13;
constexpr std::size_t kSlidingEstimates = 5;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

void progress(const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; }

// ---------------------------------------------------------------- criterion 1

struct GradCheck {
  std::string name;
  double worst = 0.0;
};

double grad_error(Tensor wrt, const std::function<Tensor()>& loss, double h = 1e-5) {
  return relative_error(analytic_gradient(wrt, loss), numeric_gradient(wrt, loss, h));
}

Tensor weighted(const Tensor& y, std::uint64_t seed) { return sum(mul(y, probe_weights(y.shape(), seed))); }

ModelConfig probe_model() {
  ModelConfig cfg;
  cfg.features = 4;
  cfg.regnet_first_channels = 6;
  cfg.sisr_layers = 2;
  cfg.regnet_2d_layers = 1;
  cfg.residual_mean = 40.0;
  cfg.residual_std = 250.0;
  return cfg;
}

Verdict criterion_gradients() {
  const auto t0 = Clock::now();
  std::vector<GradCheck> ops;
  auto check = [&](const std::string& name, std::initializer_list<Tensor> wrt, const std::function<Tensor()>& loss) {
    GradCheck g{name, 0.0};
    for (const Tensor& t : wrt) g.worst = std::max(g.worst, grad_error(t, loss));
    ops.push_back(g);
  };
  std::mt19937_64 rng(2024);
  {
    Tensor x = random_tensor({2, 5, 6, 2}, rng), k = random_tensor({3, 3, 2, 3}, rng), b = random_tensor({3}, rng);
    check("conv2d_reflect", {x, k, b}, [&] { return weighted(conv2d(x, k, b, Padding::Reflect), 1); });
    check("conv2d_valid", {x, k, b}, [&] { return weighted(conv2d(x, k, b, Padding::Valid), 2); });
  }
  {
    Tensor x = random_tensor({1, 5, 4, 4, 2}, rng), k = random_tensor({3, 3, 3, 2, 3}, rng), b = random_tensor({3}, rng);
    check("conv3d_stride1", {x, k, b}, [&] { return weighted(conv3d(x, k, b, 1), 3); });
    check("conv3d_stride2", {x, k, b}, [&] { return weighted(conv3d(x, k, b, 2), 4); });
  }
  {
    Tensor x = random_tensor({2, 4, 5, 3}, rng);
    check("instance_norm", {x}, [&] { return weighted(instance_norm(x), 5); });
    check("leaky_relu", {x}, [&] { return weighted(leaky_relu(x, 0.2), 6); });
    check("softmax", {x}, [&] { return weighted(softmax(x, 3), 7); });
    check("mean", {x}, [&] { return weighted(mean(x, {1, 2}), 8); });
    check("sum", {x}, [&] { return scale(sum(mul(x, x)), 0.5); });
    check("scale_add_scalar", {x}, [&] { return weighted(add_scalar(scale(x, -1.7), 0.3), 9); });
  }
  {
    Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({3, 1}, rng);
    check("add_sub_mul", {a, b}, [&] { return weighted(add(mul(a, b), sub(a, b)), 10); });
    check("reshape_gather_concat", {a}, [&] {
      return weighted(reshape(concat_rows({gather_rows(a, {1, 0, 1}), scale(a, 0.5)}), {5, 12}), 11);
    });
  }
  {
    Tensor logits = random_tensor({5, 49}, rng, -3, 3);
    check("softmax_cross_entropy", {logits}, [&] { return softmax_cross_entropy(logits, {0, 48, 24, 3, 24}); });
  }
  {
    Tensor x = random_tensor({3, 8, 9, 2}, rng), g = random_tensor({2, 7, 7}, rng, 0.0, 1.0);
    check("gdc_apply", {x, g}, [&] { return weighted(gdc_apply(x, g), 12); });
  }
  {
    Tensor x = random_tensor({3, 5, 5, 2}, rng);
    std::vector<Mask> masks(3, Mask(5, 5));
    for (auto& m : masks) {
      for (auto& b : m.bits) b = rng() % 3 != 0;
    }
    check("mutual_inpaint", {x}, [&] { return weighted(mutual_inpaint(x, masks), 13); });
  }
  {
    Tensor sr = random_tensor({1, 14, 15, 1}, rng);
    Image hr(14, 15);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& p : hr.pixels) p = u(rng);
    Mask hm(14, 15), jc(14, 15);
    for (auto& b : hm.bits) b = rng() % 5 != 0;
    for (auto& b : jc.bits) b = rng() % 7 != 0;
    check("corrected_loss", {sr}, [&] { return corrected_loss(sr, hr, hm, jc, 2); });
  }
  double worst_op = 0.0;
  std::string worst_name;
  for (const auto& g : ops) {
    if (g.worst >= worst_op) {
      worst_op = g.worst;
      worst_name = g.name;
    }
  }

  // Composed graph: corrected loss of the full forward pass.
  const ModelParams p = ModelParams::init(probe_model(), 10);
  std::vector<Image> frames;
  for (std::size_t i = 0; i < 9; ++i) frames.push_back(texture(12, 12, 80 + i));
  const Tensor stack = stack_to_tensor(frames);
  std::vector<Mask> masks(9, Mask(12, 12));
  masks[1].set(5, 5, false);
  masks[4].set(2, 7, false);
  const Image hr = texture(12, 12, 300);
  Mask hm(12, 12);
  hm.set(3, 3, false);
  auto loss = [&] { return scale(corrected_loss(deepsum_forward(stack, masks, p).sr, hr, hm, Mask(12, 12), 2), 1e-3); };
  double worst_graph = 0.0;
  for (const char* name : {"sisr/conv0/kernel", "sisr/conv1/bias", "regnet/pair/kernel", "regnet/out/bias",
                           "fusion/conv0/kernel", "fusion/out/kernel"}) {
    if (!p.tensors().contains(name)) continue;
    worst_graph = std::max(worst_graph, grad_error(p.at(name), loss));
  }
  // The loss removes the mean offset, so the output bias has no gradient.
  const double bias_grad = std::abs(analytic_gradient(p.at("fusion/out/bias"), loss)[0]);
  const double elapsed = seconds_since(t0);
  Verdict v;
  v.pass = worst_op < kOpGradTol && worst_graph < kGraphGradTol && bias_grad < 1e-12 && elapsed < kGradSuiteBudgetS;
  v.detail = fmt("%zu ops, worst %s rel err %.2e (< %.0e); composed graph %.2e (< %.0e), output bias grad %.1e; "
                 "%.1f s (< %.0f s)",
                 ops.size(), worst_name.c_str(), worst_op, kOpGradTol, worst_graph, kGraphGradTol, bias_grad, elapsed,
                 kGradSuiteBudgetS);
  return v;
}

// ---------------------------------------------------------------- criterion 2

double oracle_mpsnr(const Image& sr, const Image& hr, const Mask& hm, const Mask& jc, int d) {
  const int h = int(sr.height), w = int(sr.width);
  double best = std::numeric_limits<double>::infinity();
  for (int u = 0; u <= 2 * d; ++u) {
    for (int v = 0; v <= 2 * d; ++v) {
      std::vector<double> diff;
      for (int y = 0; y < h - 2 * d; ++y) {
        for (int x = 0; x < w - 2 * d; ++x) {
          if (hm.at(y + u, x + v) && jc.at(y + d, x + d)) diff.push_back(hr.at(y + u, x + v) - sr.at(y + d, x + d));
        }
      }
      if (diff.empty()) continue;
      double b = 0.0;
      for (double e : diff) b += e;
      b /= double(diff.size());
      double m = 0.0;
      for (double e : diff) m += (e - b) * (e - b);
      best = std::min(best, m / double(diff.size()));
    }
  }
  if (best < 1e-12) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(65535.0 * 65535.0 / best));
}

Image with_noise(const Image& img, std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  Image out = img;
  for (double& p : out.pixels) p += n(rng);
  return out;
}

Mask random_mask(std::size_t h, std::size_t w, std::uint64_t seed, double clear) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(clear);
  Mask m(h, w);
  for (auto& bit : m.bits) bit = b(rng);
  return m;
}

Verdict criterion_metrics() {
  const int d = kDefaultCropBorder;
  const Image hr = texture(36, 36, 3);
  const Mask clear(36, 36);
  std::size_t invariant = 0, cases = 0;
  for (int p = -3; p <= 3; ++p) {
    for (int q = -3; q <= 3; ++q) {
      for (double offset : {-2345.5, 0.0, 17.25, 4000.0}) {
        const Image sr = add_offset(apply_shift(hr, {p, q}), offset);
        const Tensor loss = corrected_loss(stack_to_tensor({sr}), hr, clear, clear, d);
        ++cases;
        if (mpsnr(sr, hr, clear, clear, d).value == kPsnrCapDb && loss.item() < 1e-12) ++invariant;
      }
    }
  }
  const double shifted4 = mpsnr(apply_shift(hr, {4, 0}), hr, clear, clear, d).value;

  // Masked-pixel corruption.
  std::size_t independent = 0, corruptions = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Image target = texture(30, 33, seed);
    const Image sr = with_noise(target, seed + 10, 60.0);
    const Mask hm = random_mask(30, 33, seed + 20, 0.8), jc = random_mask(30, 33, seed + 30, 0.85);
    const CorrectedScore base = mpsnr(sr, target, hm, jc, d);
    const double base_loss = corrected_loss(stack_to_tensor({sr}), target, hm, jc, d).item();
    Image hr_dirty = target, sr_dirty = sr;
    std::mt19937_64 rng(seed + 40);
    std::uniform_real_distribution<double> junk(0.0, 65535.0);
    for (std::size_t i = 0; i < hr_dirty.size(); ++i) {
      if (!hm.bits[i]) hr_dirty.pixels[i] = junk(rng);
      if (!jc.bits[i]) sr_dirty.pixels[i] = junk(rng);
    }
    const CorrectedScore dirty = mpsnr(sr_dirty, hr_dirty, hm, jc, d);
    const double dirty_loss = corrected_loss(stack_to_tensor({sr_dirty}), hr_dirty, hm, jc, d).item();
    ++corruptions;
    if (dirty.value == base.value && dirty.u == base.u && dirty.v == base.v && dirty_loss == base_loss) ++independent;
  }

  // Brute-force oracle.
  double worst = 0.0;
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const Image target = texture(27, 33, seed);
    const Image sr = with_noise(apply_shift(target, {int(seed % 5) - 2, int(seed % 3) - 1}), seed + 100, 60.0);
    const Mask hm = random_mask(27, 33, seed + 200, 0.8), jc = random_mask(27, 33, seed + 300, 0.9);
    for (int dd : {2, 3}) {
      worst = std::max(worst, std::abs(mpsnr(sr, target, hm, jc, dd).value - oracle_mpsnr(sr, target, hm, jc, dd)));
    }
  }
  Verdict v;
  v.pass = invariant == cases && independent == corruptions && shifted4 < kPsnrCapDb && worst <= kOracleTolDb;
  v.detail = fmt("shift/offset cases at cap %zu/%zu; masked corruption bit-identical %zu/%zu; 4 px shift %.2f dB "
                 "(< %.0f); oracle max diff %.1e dB (<= %.0e)",
                 invariant, cases, independent, corruptions, shifted4, kPsnrCapDb, worst, kOracleTolDb);
  return v;
}

// ---------------------------------------------------------------- criterion 3

Verdict criterion_gdc() {
  std::mt19937_64 rng(33);
  const std::size_t h = 17, w = 16;
  std::vector<Image> frames{texture(h, w, 1), texture(h, w, 2)};
  const Tensor stack = stack_to_tensor(frames);
  std::size_t matched = 0, inverted = 0, total = 0;
  for (int p = -3; p <= 3; ++p) {
    for (int q = -3; q <= 3; ++q) {
      ++total;
      const Tensor filt = delta_filters({{p, q}}, 7);
      const Tensor out = gdc_apply(stack, filt);
      const Image want = apply_shift(frames[1], {p, q});
      bool exact = true;
      for (std::size_t y = 3; y + 3 < h; ++y) {
        for (std::size_t x = 3; x + 3 < w; ++x) exact = exact && out[h * w + y * w + x] == want.at(y, x);
      }
      if (exact) ++matched;
      const auto f = filt.values();
      const Shift c = extract_shift(f, 7, MaskShiftRule::Centroid), a = extract_shift(f, 7, MaskShiftRule::Argmax);
      if (c.dy == p && c.dx == q && a.dy == p && a.dx == q && class_shift(shift_class({p, q}, 7), 7).dy == p) ++inverted;
    }
  }
  Verdict v;
  v.pass = matched == total && inverted == total;
  v.detail = fmt("delta filters matching apply_shift on the interior %zu/%zu; extract_shift inverting %zu/%zu", matched,
                 total, inverted, total);
  return v;
}

// ---------------------------------------------------------------- criterion 5

Verdict criterion_inpainting() {
  std::mt19937_64 rng(55);
  std::size_t violations = 0, donor_copies = 0, no_donor = 0, reliable = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 7, h = 6, w = 7, c = 3;
    const Tensor x = random_tensor({n, h, w, c}, rng, -5, 5, false);
    std::vector<Mask> masks(n, Mask(h, w));
    for (auto& m : masks) {
      for (auto& b : m.bits) b = rng() % 2 == 0;
    }
    const Tensor y = mutual_inpaint(x, masks);
    for (std::size_t pix = 0; pix < h * w; ++pix) {
      std::vector<std::size_t> donors;
      for (std::size_t i = 0; i < n; ++i) {
        if (masks[i].bits[pix]) donors.push_back(i);
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t at = (i * h * w + pix) * c + ch;
          if (masks[i].bits[pix]) {
            ++reliable;
            if (y[at] != x[at]) ++violations;
          } else if (donors.empty()) {
            ++no_donor;
            if (y[at] != x[at]) ++violations;
          } else if (donors.size() == 1) {
            ++donor_copies;
            if (y[at] != x[(donors[0] * h * w + pix) * c + ch]) ++violations;
          } else {
            double m = 0.0;
            for (std::size_t dnr : donors) m += x[(dnr * h * w + pix) * c + ch];
            m /= double(donors.size());
            if (std::abs(y[at] - m) > 1e-12) ++violations;
          }
        }
      }
    }
  }
  Verdict v;
  v.pass = violations == 0 && donor_copies > 0 && no_donor > 0 && reliable > 0;
  v.detail = fmt("%zu violations over %zu single-donor copies, %zu no-donor values, %zu reliable values", violations,
                 donor_copies, no_donor, reliable);
  return v;
}

// ---------------------------------------------------------------- criterion 6

constexpr std::size_t kR = 3;

Scene matched_scene(const Image& hr, const ForwardModel& model) {
  Scene s;
  s.id = "matched";
  for (std::size_t i = 0; i < model.shifts.size(); ++i) {
    s.lr.push_back(model.simulate(hr, i));
    s.lr_masks.emplace_back(hr.height / model.r, hr.width / model.r, true);
  }
  s.hr = hr;
  s.hr_mask = Mask(hr.height, hr.width, true);
  return s;
}

double distance(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.pixels[i] - b.pixels[i]) * (a.pixels[i] - b.pixels[i]);
  return std::sqrt(s);
}

Verdict criterion_solvers() {
  const std::vector<Shift> shifts = {{0, 0}, {1, -2}, {-3, 2}, {2, 2}, {-1, -1}, {3, 0}, {0, -3}, {-2, 1}, {1, 3}};
  const ForwardModel model = ForwardModel::gaussian(1.0, kR, shifts);
  const Scene matched = matched_scene(generate_hr_texture(48, 48, 5), model);
  const Image init = bicubic_mean(matched, kR, kPreRegistrationBound);
  const SolverResult res = ibp(matched, model, init, {kIbpIterations, true, 1.0});
  bool monotone = true;
  for (std::size_t k = 1; k < res.objective.size(); ++k) monotone = monotone && res.objective[k] < res.objective[k - 1];
  const double ratio = res.objective.back() / res.objective.front();

  std::size_t robust = 0, trials = 0;
  double ibp_sum = 0.0, btv_sum = 0.0;
  for (std::uint64_t seed = 11; seed < 14; ++seed) {
    DegradationConfig dc;
    dc.seed = seed;
    const Scene clean = synthesize_scene(generate_hr_texture(48, 48, 1000 + seed), dc, "o").scene;
    Scene flipped = clean;
    std::mt19937_64 rng(seed + 1);
    std::bernoulli_distribution flip(kOutlierRate);
    for (auto& img : flipped.lr) {
      for (double& p : img.pixels) {
        if (flip(rng)) p = p > 8000.0 ? 0.0 : 16383.0;
      }
    }
    const ForwardModel est = estimate_forward_model(clean, kR, kPreRegistrationBound, 1.0);
    const Image start = bicubic_mean(clean, kR, kPreRegistrationBound);
    const double di = distance(ibp(clean, est, start).image, ibp(flipped, est, start).image);
    const double db = distance(btv(clean, est, start).image, btv(flipped, est, start).image);
    ibp_sum += di;
    btv_sum += db;
    ++trials;
    if (db < di) ++robust;
  }
  Verdict v;
  v.pass = monotone && ratio < kIbpFraction && res.objective.size() == kIbpIterations + 1 && robust == trials;
  v.detail = fmt("IBP data-fidelity MSE monotone=%s, final/initial %.2e (< %.2f) in %zu iterations; outlier perturbation "
                 "BTV < IBP in %zu/%zu scenes (mean %.0f vs %.0f)",
                 monotone ? "yes" : "no", ratio, kIbpFraction, res.objective.size() - 1, robust, trials,
                 btv_sum / double(trials), ibp_sum / double(trials));
  return v;
}

// ------------------------------------------------------- criteria 4, 7, 8, 9

struct Trained {
  PipelineConfig config;
  std::vector<Scene> test;
  ModelParams sisr, full, ablation;
  double regnet_accuracy = 0.0;
  double histogram_deviation = 0.0;
  double regnet_seconds = 0.0;
  double pipeline_seconds = 0.0;
  std::string regnet_note;
};

EpochSink echo_sink() {
  return [](const EpochRecord& r) { progress(log_line(r)); };
}

Trained train_desk(const PipelineConfig& config) {
  Trained t;
  t.config = config;
  const auto start = Clock::now();
  const std::uint64_t seed = config.degradation.seed;
  const std::size_t r = config.model.r;
  const auto sizes = split_sizes(config.data);
  progress(fmt("synthesizing %zu scenes (%zu train, %zu val, %zu test)", config.data.scenes, sizes[0], sizes[1],
               sizes[2]));
  const auto train_scenes = synthesize_dataset(config, seed, 0, sizes[0]);
  const auto val_scenes = synthesize_dataset(config, seed, sizes[0], sizes[1]);
  t.test = synthesize_dataset(config, seed, sizes[0] + sizes[1], sizes[2]);
  const auto train = build_patches(train_scenes, config.patches, r, config.train.seed);
  const auto val = build_patches(val_scenes, config.patches, r, config.train.seed + 1);
  const auto held_out = build_patches(t.test, config.patches, r, config.train.seed + 2);
  progress(fmt("%zu train, %zu val, %zu held-out patches", train.size(), val.size(), held_out.size()));

  ModelParams params = ModelParams::init(config.model, config.train.seed);
  pretrain_sisr(params, train, val, config.stage_config(Stage::SisrPretrain), echo_sink());
  t.sisr = ModelParams::from_checkpoint(config.model, params.tensors());

  const auto regnet_start = Clock::now();
  pretrain_regnet(params, train, val, config.stage_config(Stage::RegnetPretrain), echo_sink());
  t.regnet_seconds = seconds_since(regnet_start);
  const std::uint64_t eval_seed = config.train.seed + 104729;
  t.regnet_accuracy = regnet_accuracy(params, held_out, eval_seed);
  {
    std::mt19937_64 rng(eval_seed);
    const std::size_t classes = config.model.classes();
    const auto labels = balanced_labels(held_out.size() * (config.model.n_images - 1), classes, rng);
    std::vector<double> hist(classes, 0.0);
    for (std::size_t l : labels) hist[l] += 1.0;
    const double expect = double(labels.size()) / double(classes);
    for (double hcount : hist) t.histogram_deviation = std::max(t.histogram_deviation, std::abs(hcount - expect) / expect);
    t.regnet_note = fmt("%zu held-out shift pairs", labels.size());
  }

  TrainConfig e2e = config.stage_config(Stage::EndToEnd);
  e2e.use_regnet = true;
  train_end_to_end(params, train, val, e2e, echo_sink());
  t.full = ModelParams::from_checkpoint(config.model, params.tensors());
  // Time to a trained model plus scoring it on the test set.
  t.pipeline_seconds = seconds_since(start);
  const auto eval_start = Clock::now();
  for (const Scene& s : t.test) {
    evaluate_scene(sliding_window_infer(s, t.full, {1}), s, config.model.n_images, r, config.train.d);
  }
  t.pipeline_seconds += seconds_since(eval_start);

  progress("training the no-RegNet ablation");
  ModelParams abl = ModelParams::from_checkpoint(config.model, t.sisr.tensors());
  e2e.use_regnet = false;
  train_end_to_end(abl, train, val, e2e, echo_sink());
  t.ablation = std::move(abl);
  return t;
}

Verdict criterion_regnet(const Trained& t) {
  Verdict v;
  v.pass = t.regnet_accuracy >= kRegnetAccuracy && t.histogram_deviation <= kHistogramTol &&
           t.regnet_seconds < kRegnetBudgetS;
  v.detail = fmt("held-out accuracy %.4f (>= %.2f) over %zu classes, %s; label histogram max deviation %.2f%% "
                 "(<= %.0f%%); %.0f s (< %.0f s)",
                 t.regnet_accuracy, kRegnetAccuracy, t.config.model.classes(), t.regnet_note.c_str(),
                 100.0 * t.histogram_deviation, 100.0 * kHistogramTol, t.regnet_seconds, kRegnetBudgetS);
  return v;
}

struct TableScores {
  double bicubic = 0, bicubic_mean = 0, ibp = 0, btv = 0, sisr = 0, sisr_mean = 0, deepsum = 0, no_regnet = 0;
};

TableScores score_test_set(const Trained& t) {
  TableScores s;
  const auto& c = t.config;
  const std::size_t n = c.model.n_images, r = c.model.r;
  const int d = c.train.d;
  auto score = [&](const Image& sr, const Scene& scene) { return evaluate_scene(sr, scene, n, r, d).mpsnr.value; };
  for (const Scene& scene : t.test) {
    s.bicubic += score(run_baseline(BaselineMethod::Bicubic, scene, c), scene);
    s.bicubic_mean += score(run_baseline(BaselineMethod::BicubicMean, scene, c), scene);
    s.ibp += score(run_baseline(BaselineMethod::Ibp, scene, c), scene);
    s.btv += score(run_baseline(BaselineMethod::Btv, scene, c), scene);
    s.sisr += score(run_baseline(BaselineMethod::Sisr, scene, c, &t.sisr), scene);
    s.sisr_mean += score(run_baseline(BaselineMethod::SisrMean, scene, c, &t.sisr), scene);
    s.deepsum += score(sliding_window_infer(scene, t.full, {1}, true), scene);
    s.no_regnet += score(sliding_window_infer(scene, t.ablation, {1}, false), scene);
  }
  const double k = double(t.test.size());
  for (double* v : {&s.bicubic, &s.bicubic_mean, &s.ibp, &s.btv, &s.sisr, &s.sisr_mean, &s.deepsum, &s.no_regnet}) {
    *v /= k;
  }
  return s;
}

Verdict criterion_ordering(const Trained& t, const TableScores& s) {
  const bool classical = s.bicubic < s.bicubic_mean && s.bicubic_mean <= s.ibp && s.bicubic_mean <= s.btv;
  const bool learned = s.sisr < s.sisr_mean && s.sisr_mean < s.deepsum;
  const double margin = s.deepsum - s.bicubic_mean;
  Verdict v;
  v.pass = t.test.size() >= kMinTestScenes && classical && learned && margin >= kDeepsumMarginDb &&
           t.pipeline_seconds <= kPipelineBudgetS;
  v.detail = fmt("mean mPSNR over %zu test scenes: bicubic %.3f, bicubic+mean %.3f, IBP %.3f, BTV %.3f, SISR %.3f, "
                 "SISR+mean %.3f, DeepSUM %.3f; DeepSUM - bicubic+mean %.3f dB (>= %.1f); pipeline %.0f s (<= %.0f s)",
                 t.test.size(), s.bicubic, s.bicubic_mean, s.ibp, s.btv, s.sisr, s.sisr_mean, s.deepsum, margin,
                 kDeepsumMarginDb, t.pipeline_seconds, kPipelineBudgetS);
  return v;
}

Verdict criterion_ablation(const TableScores& s) {
  Verdict v;
  v.pass = s.deepsum >= s.no_regnet;
  v.detail = fmt("full model %.3f dB vs no-RegNet %.3f dB (difference %+.3f)", s.deepsum, s.no_regnet,
                 s.deepsum - s.no_regnet);
  return v;
}

Verdict criterion_sliding(const Trained& t) {
  const auto& c = t.config;
  std::size_t wins = 0;
  double gain = 0.0;
  for (std::size_t k = 0; k < kSlidingSeeds; ++k) {
    DegradationConfig dc = c.degradation;
    dc.n_images = kSlidingImages;
    dc.n_images_max = kSlidingImages;
    dc.seed = 9000 + k;
    const Scene scene =
        synthesize_scene(generate_hr_texture(c.data.hr_size, c.data.hr_size, 7000 + k), dc, "sliding").scene;
    const double one = evaluate_scene(sliding_window_infer(scene, t.full, {1}), scene, c.model.n_images, c.model.r,
                                      c.train.d).mpsnr.value;
    const double five = evaluate_scene(sliding_window_infer(scene, t.full, {kSlidingEstimates}), scene,
                                       c.model.n_images, c.model.r, c.train.d).mpsnr.value;
    gain += five - one;
    if (five > one) ++wins;
  }
  Verdict v;
  v.pass = wins >= kSlidingWins;
  v.detail = fmt("%zu-estimate average beats the single estimate on %zu/%zu %zu-image scenes (>= %zu); mean gain %+.3f dB",
                 kSlidingEstimates, wins, kSlidingSeeds, kSlidingImages, kSlidingWins, gain / double(kSlidingSeeds));
  return v;
}

// --------------------------------------------------------------- criterion 10

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// A small end-to-end run through the command line: data, three stages,
// inference and evaluation.
bool cli_pipeline(const fs::path& dir, const fs::path& config) {
  const std::string c = config.string(), data = (dir / "data").string(), model = (dir / "model").string();
  const std::vector<std::vector<std::string>> steps = {
      {"gen-data", "--config", c, "--out", data, "--seed", "5"},
      {"train", "--stage", "sisr", "--data", data, "--config", c, "--out", model},
      {"train", "--stage", "regnet", "--data", data, "--config", c, "--out", model},
      {"train", "--stage", "e2e", "--data", data, "--config", c, "--out", model},
      {"infer", "--model", model + "/end_to_end.ckpt", "--scene", data, "--out", (dir / "pred").string(), "--sliding",
       "2", "--config", c},
      {"eval", "--pred", (dir / "pred").string(), "--truth", data, "--out", (dir / "report.txt").string(), "--config",
       c},
  };
  for (const auto& args : steps) {
    std::ostringstream out, err;
    if (cli::run(args, out, err) != cli::kExitOk) {
      progress("determinism run failed at " + args[0] + ": " + err.str());
      return false;
    }
  }
  return true;
}

Verdict criterion_determinism(const PipelineConfig& base, const fs::path& work) {
  PipelineConfig c = base;
  c.data.scenes = 6;
  c.data.val_fraction = 1.0 / 6.0;
  c.data.test_fraction = 2.0 / 6.0;
  c.degradation.n_images_max = 11;
  c.patches.patches_per_scene = 4;
  c.sisr.epochs = 2;
  c.regnet.epochs = 2;
  c.e2e.epochs = 2;
  c.train.validate_every = 1;
  const fs::path cfg = work / "determinism.cfg";
  fs::create_directories(work);
  to_config_file(c).save(cfg);
  std::vector<fs::path> runs = {work / "determinism_a", work / "determinism_b"};
  for (const auto& r : runs) {
    fs::remove_all(r);
    if (!cli_pipeline(r, cfg)) return {false, "command failed in " + r.string()};
  }
  std::size_t compared = 0, identical = 0;
  auto compare = [&](const fs::path& rel) {
    ++compared;
    const fs::path a = runs[0] / rel, b = runs[1] / rel;
    if (fs::exists(a) && fs::exists(b) && read_bytes(a) == read_bytes(b)) ++identical;
  };
  for (const char* ckpt : {"sisr_pretrain.ckpt", "regnet_pretrain.ckpt", "end_to_end.ckpt"}) compare(fs::path("model") / ckpt);
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(runs[0] / "pred")) {
    if (e.path().extension() == ".png") {
      compare(fs::path("pred") / e.path().filename());
      ++images;
    }
  }
  compare("report.txt");
  Verdict v;
  v.pass = identical == compared && images > 0;
  v.detail = fmt("%zu/%zu artifacts bit-identical across two runs (3 checkpoints, %zu SR images, 1 report)", identical,
                 compared, images);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeepSUM acceptance suite"};
  std::string config_path, work = "acceptance_work", criteria;
  app.add_option("--config", config_path, "Pipeline config (default: the shipped default.cfg)");
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  app.add_option("--criteria", criteria, "Comma-separated subset, e.g. 1,2,3 (default: all)");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  if (criteria.empty()) {
    for (int i = 1; i <= 10; ++i) selected.insert(i);
  } else {
    std::stringstream ss(criteria);
    for (std::string item; std::getline(ss, item, ',');) selected.insert(std::stoi(item));
  }
  const fs::path cfg_file = config_path.empty() ? default_config_path() : fs::path(config_path);
  const PipelineConfig config = pipeline_from(ConfigFile::load(cfg_file));
  progress("config " + cfg_file.string());

  const char* names[] = {"",
                         "gradient suite",
                         "metric invariance",
                         "GDC/shift convention",
                         "RegNet pretraining",
                         "mutual inpainting",
                         "classical solver oracles",
                         "ordering at desk scale",
                         "RegNet ablation ordering",
                         "sliding-window gain",
                         "determinism"};
  int failures = 0;
  auto report = [&](int id, const Verdict& v) {
    std::cout << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << " " << names[id] << ": " << v.detail
              << std::endl;
    if (!v.pass) ++failures;
  };
  auto guarded = [&](int id, const std::function<Verdict()>& f) {
    if (!selected.count(id)) return;
    progress(fmt("criterion %d: %s", id, names[id]));
    try {
      report(id, f());
    } catch (const std::exception& e) {
      report(id, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, criterion_gradients);
  guarded(2, criterion_metrics);
  guarded(3, criterion_gdc);
  guarded(5, criterion_inpainting);
  guarded(6, criterion_solvers);

  if (selected.count(4) || selected.count(7) || selected.count(8) || selected.count(9)) {
    std::optional<Trained> trained;
    std::string error;
    try {
      trained = train_desk(config);
    } catch (const std::exception& e) {
      error = std::string("training failed: ") + e.what();
    }
    std::optional<TableScores> scores;
    auto table = [&]() -> const TableScores& {
      if (!scores) scores = score_test_set(*trained);
      return *scores;
    };
    for (int id : {4, 7, 8, 9}) {
      if (!selected.count(id)) continue;
      if (!trained) {
        report(id, {false, error});
        continue;
      }
      guarded(id, [&]() -> Verdict {
        switch (id) {
          case 4:
            return criterion_regnet(*trained);
          case 7:
            return criterion_ordering(*trained, table());
          case 8:
            return criterion_ablation(table());
          default:
            return criterion_sliding(*trained);
        }
      });
    }
  }
  guarded(10, [&] { return criterion_determinism(config, work); });

  std::cout << "acceptance: " << selected.size() - failures << "/" << selected.size() << " PASS" << std::endl;
  return failures == 0 ? 0 : 1;
}
