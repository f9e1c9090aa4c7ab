// Corrected MSE / mPSNR against a brute-force oracle written independently,
// plus the invariance probes and the SSIM sanity properties.

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "deepsum/metrics.hpp"
#include "deepsum/model.hpp"
#include "deepsum/registration.hpp"
#include "test_support.hpp"

using namespace deepsum;
using deepsum::testing::texture;

namespace {

Mask all_clear(std::size_t h, std::size_t w) { return Mask(h, w, true); }

// Direct transcription: for each (u, v), collect residual pairs, solve b,
// take the mean square; report the minimum in dB.
double oracle_mpsnr(const Image& sr, const Image& hr, const Mask& hm, const Mask& jc, int d) {
  const int h = static_cast<int>(sr.height), w = static_cast<int>(sr.width);
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
  if (best < 1e-12) return 120.0;
  return std::min(120.0, 10.0 * std::log10(65535.0 * 65535.0 / best));
}

Image noisy(const Image& img, std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  Image out = img;
  for (double& p : out.pixels) p += n(rng);
  return out;
}

Mask random_mask(std::size_t h, std::size_t w, std::uint64_t seed, double p_clear) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p_clear);
  Mask m(h, w);
  for (auto& bit : m.bits) bit = b(rng) ? 1 : 0;
  return m;
}

}  // namespace

TEST(CorrectedScore, IdenticalImagesScoreCap) {
  const Image hr = texture(30, 30, 1);
  const auto s = mpsnr(hr, hr, all_clear(30, 30), all_clear(30, 30));
  EXPECT_DOUBLE_EQ(s.value, 120.0);
  EXPECT_EQ(s.u, 3);
  EXPECT_EQ(s.v, 3);
  EXPECT_NEAR(s.brightness_b, 0.0, 1e-12);
  EXPECT_EQ(s.clear_pixel_count, 24u * 24u);
}

TEST(CorrectedScore, FindsTranslation) {
  const Image hr = texture(30, 30, 2);
  // sr samples hr at +(1, 2): sr(y, x) = hr(y + 1, x + 2).
  const Image sr = apply_shift(hr, {-1, -2});
  const auto s = corrected_mse(sr, hr, all_clear(30, 30), all_clear(30, 30));
  EXPECT_LT(s.value, 1e-18);
  EXPECT_EQ(s.u, 4);
  EXPECT_EQ(s.v, 5);
}

TEST(CorrectedScore, InvariantToShiftAndBrightness) {
  const Image hr = texture(36, 36, 3);
  const Image base = noisy(hr, 4, 40.0);
  const Mask clear = all_clear(36, 36);
  const double ref = mpsnr(base, hr, clear, clear).value;
  for (int p = -3; p <= 3; ++p) {
    for (int q = -3; q <= 3; ++q) {
      // Shifting the prediction shifts which pixels are compared, so use a
      // shifted copy of an exact match plus constant offsets.
      Image moved = apply_shift(hr, {p, q});
      for (double& v : moved.pixels) v += 300.0;
      EXPECT_DOUBLE_EQ(mpsnr(moved, hr, clear, clear).value, 120.0) << p << "," << q;
    }
  }
  Image brighter = base;
  for (double& v : brighter.pixels) v -= 1234.5;
  EXPECT_NEAR(mpsnr(brighter, hr, clear, clear).value, ref, 1e-9);
}

TEST(CorrectedScore, OutsideSearchRangeDrops) {
  const Image hr = texture(36, 36, 5);
  const Mask clear = all_clear(36, 36);
  const Image sr = apply_shift(hr, {4, 0});
  EXPECT_LT(mpsnr(sr, hr, clear, clear).value, 120.0);
  EXPECT_LT(mpsnr(sr, hr, clear, clear, 3).value, mpsnr(sr, hr, clear, clear, 4).value);
}

TEST(CorrectedScore, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    const Image hr = texture(27, 33, seed);
    const Image sr = noisy(apply_shift(hr, {int(seed % 3) - 1, 1}), seed + 100, 60.0);
    const Mask hm = random_mask(27, 33, seed + 200, 0.8);
    const Mask jc = random_mask(27, 33, seed + 300, 0.9);
    EXPECT_NEAR(mpsnr(sr, hr, hm, jc).value, oracle_mpsnr(sr, hr, hm, jc, 3), 1e-9);
    EXPECT_NEAR(mpsnr(sr, hr, hm, jc, 2).value, oracle_mpsnr(sr, hr, hm, jc, 2), 1e-9);
  }
}

TEST(CorrectedScore, MaskedPixelsDoNotMatter) {
  const Image hr = texture(30, 30, 6);
  const Image sr = noisy(hr, 7, 50.0);
  Mask hm = all_clear(30, 30);
  for (std::size_t y = 8; y < 14; ++y) {
    for (std::size_t x = 0; x < 30; ++x) hm.set(y, x, false);
  }
  const Mask jc = all_clear(30, 30);
  const auto before = mpsnr(sr, hr, hm, jc);
  // Corrupt HR only where the HR mask is cloudy, far from every compared
  // window row so the chosen offset cannot pick them up either.
  Image hr2 = hr;
  for (std::size_t y = 8; y < 14; ++y) {
    for (std::size_t x = 0; x < 30; ++x) hr2.at(y, x) = 60000.0;
  }
  const auto after = mpsnr(sr, hr2, hm, jc);
  EXPECT_DOUBLE_EQ(before.value, after.value);
  EXPECT_EQ(before.u, after.u);
  EXPECT_EQ(before.v, after.v);

  // Same for SR pixels outside joint_clear.
  Mask jc2 = all_clear(30, 30);
  for (std::size_t x = 0; x < 30; ++x) jc2.set(15, x, false);
  Image sr2 = sr;
  for (std::size_t x = 0; x < 30; ++x) sr2.at(15, x) = -5000.0;
  EXPECT_DOUBLE_EQ(mpsnr(sr, hr, hm, jc2).value, mpsnr(sr2, hr, hm, jc2).value);
}

TEST(CorrectedScore, UnscorableAndBadInput) {
  const Image hr = texture(20, 20, 8);
  const Mask none(20, 20, false);
  EXPECT_THROW(mpsnr(hr, hr, none, all_clear(20, 20)), UnscorableSample);
  EXPECT_THROW(mpsnr(hr, texture(20, 21, 8), all_clear(20, 20), all_clear(20, 20)), std::invalid_argument);
  EXPECT_THROW(mpsnr(hr, hr, all_clear(20, 20), all_clear(20, 20), 10), std::invalid_argument);
}

TEST(CorrectedScore, TieGoesToCenter) {
  Image flat(20, 20);
  std::fill(flat.pixels.begin(), flat.pixels.end(), 500.0);
  const Mask clear = all_clear(20, 20);
  const auto s = corrected_mse(flat, flat, clear, clear);
  EXPECT_EQ(s.u, 3);
  EXPECT_EQ(s.v, 3);
}

TEST(CorrectedLoss, ValueAndGradient) {
  const Image hr = texture(21, 21, 9);
  const Mask hm = random_mask(21, 21, 10, 0.85);
  const Mask jc = random_mask(21, 21, 11, 0.9);
  Image sr_img = noisy(apply_shift(hr, {1, 0}), 12, 80.0);
  Tensor sr = Tensor::parameter(Shape{1, 21, 21, 1}, sr_img.pixels);
  CorrectedScore s;
  const Tensor loss = corrected_loss(sr, hr, hm, jc, 3, &s);
  EXPECT_NEAR(loss.item(), corrected_mse(sr_img, hr, hm, jc).value, 1e-9);
  EXPECT_EQ(s.u, 2);
  EXPECT_EQ(s.v, 3);

  const auto fn = [&] { return corrected_loss(sr, hr, hm, jc); };
  const auto analytic = deepsum::testing::analytic_gradient(sr, fn);
  const auto numeric = deepsum::testing::numeric_gradient(sr, fn, 1e-3);
  EXPECT_LT(deepsum::testing::relative_error(analytic, numeric), 1e-6);
  // Border pixels inside the crop margin receive no gradient.
  EXPECT_EQ(analytic[0], 0.0);
  EXPECT_EQ(analytic[20 * 21 + 20], 0.0);
}

TEST(CorrectedLoss, RejectsBadShape) {
  const Image hr = texture(12, 12, 13);
  Tensor t = Tensor::parameter(Shape{2, 12, 12, 1}, std::vector<double>(288, 0.0));
  EXPECT_THROW(corrected_loss(t, hr, all_clear(12, 12), all_clear(12, 12)), ShapeError);
}

TEST(Ssim, Properties) {
  const Image a = texture(32, 32, 14);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  const Image b = noisy(a, 15, 400.0);
  const double s = ssim(a, b);
  EXPECT_LT(s, 1.0);
  EXPECT_GT(s, 0.0);
  EXPECT_NEAR(ssim(b, a), s, 1e-12);

  Image c(32, 32), c2(32, 32);
  std::fill(c.pixels.begin(), c.pixels.end(), 4000.0);
  std::fill(c2.pixels.begin(), c2.pixels.end(), 14000.0);
  const auto t = ssim_terms(c, c2);
  EXPECT_LT(t.luminance, 1.0);
  // Exact in real arithmetic; the variance cancellation leaves ~1e-15.
  EXPECT_NEAR(t.structure, 1.0, 1e-12);
  EXPECT_NEAR(t.contrast, 1.0, 1e-12);

  // Small images shrink the window rather than fail.
  EXPECT_NEAR(ssim(texture(6, 8, 16), texture(6, 8, 16)), 1.0, 1e-12);
}

TEST(Report, LineFormat) {
  CorrectedScore s;
  s.value = 120.0;
  s.u = 3;
  s.v = 4;
  s.brightness_b = -1.5;
  s.clear_fraction = 0.25;
  EXPECT_EQ(report_line("imgset0001", s, 0.5),
            "scene=imgset0001 mpsnr_db=120.000000 ssim=0.500000 u=3 v=4 b=-1.500000 clear=0.250000");
}

TEST(Report, JointClearIsUnion) {
  Mask a(2, 2, false), b(2, 2, false);
  a.set(0, 0, true);
  b.set(1, 1, true);
  const Mask j = joint_clear_mask({a, b});
  EXPECT_EQ(j.count_clear(), 2u);
  EXPECT_THROW(joint_clear_mask({}), std::invalid_argument);
}
