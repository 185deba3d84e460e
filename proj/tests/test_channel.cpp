#include "oafel/channel.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace oafel;

TEST(SampleChannel, RayleighMoments) {
  RngStream rng(1, "channel", 0, 1);
  auto h = sample_channel(100000, 1.0, rng);
  double m1 = 0, m2 = 0;
  for (double g : h) {
    ASSERT_GT(g, 0.0);
    m1 += g;
    m2 += g * g;
  }
  m1 /= static_cast<double>(h.size());
  m2 /= static_cast<double>(h.size());
  EXPECT_NEAR(m1, std::sqrt(std::numbers::pi / 2), 0.02 * std::sqrt(std::numbers::pi / 2));
  EXPECT_NEAR(m2, 2.0, 0.04);
}

TEST(SampleChannel, ScaleMultipliesGains) {
  RngStream a(2, "channel", 0, 1), b(2, "channel", 0, 1);
  auto h1 = sample_channel(100, 1.0, a);
  auto h3 = sample_channel(100, 3.0, b);
  for (std::size_t i = 0; i < h1.size(); ++i) EXPECT_NEAR(h3[i], 3.0 * h1[i], 1e-12);
  EXPECT_THROW(RayleighSampler(0.0), Error);
}

TEST(SampleChannel, RoundsAreIndependentDraws) {
  RngStream a(3, "channel", 0, 1), b(3, "channel", 0, 2);
  EXPECT_NE(sample_channel(5, 1.0, a), sample_channel(5, 1.0, b));
}

TEST(ObserveChannel, ZeroErrorIsIdentity) {
  RngStream rng(4, "channel", 0, 1), obs(4, "observe", 0, 1);
  auto h = sample_channel(1000, 1.0, rng);
  EXPECT_EQ(observe_channel(h, 0.0, obs), h);
}

TEST(ObserveChannel, TwentyPercentStaysInBand) {
  RngStream obs(5, "observe", 0, 1);
  std::vector<double> ones(100000, 1.0);
  auto o = observe_channel(ones, 0.2, obs);
  double mean = 0;
  for (double x : o) {
    ASSERT_GE(x, 0.8);
    ASSERT_LE(x, 1.2);
    mean += x;
  }
  mean /= static_cast<double>(o.size());
  EXPECT_NEAR(mean, 1.0, 0.01);
}

TEST(ObserveChannel, PositiveAndValidated) {
  RngStream obs(6, "observe", 0, 1);
  std::vector<double> h{1e-3, 0.5, 4.0};
  for (double x : observe_channel(h, 0.99, obs)) EXPECT_GT(x, 0.0);
  EXPECT_THROW(observe_channel(h, 1.0, obs), Error);
  EXPECT_THROW(observe_channel(h, -0.1, obs), Error);
}

TEST(SampleNoise, PerEntryVariance) {
  RngStream rng(7, "noise", 0, 1);
  Vector z = sample_noise(100000, 1e-6, rng);
  const double mean = z.mean();
  const double var = (z.array() - mean).square().sum() / static_cast<double>(z.size() - 1);
  EXPECT_NEAR(var, 1e-6, 0.03e-6);
  EXPECT_NEAR(z.squaredNorm(), 1e-6 * 100000, 0.03 * 1e-6 * 100000);
}

TEST(SampleNoise, DeterministicPerStream) {
  RngStream a(8, "noise", 0, 3), b(8, "noise", 0, 3);
  EXPECT_EQ(sample_noise(50, 2.0, a), sample_noise(50, 2.0, b));
  RngStream c(8, "noise", 0, 3);
  EXPECT_THROW(sample_noise(5, 0.0, c), Error);
}

TEST(GainSampler, CustomModelsPlugIn) {
  struct Fixed final : GainSampler {
    std::vector<double> sample(int N, RngStream&) const override {
      return std::vector<double>(static_cast<std::size_t>(N), 0.7);
    }
  };
  Fixed f;
  const GainSampler& s = f;
  RngStream rng(9, "channel", 0, 1);
  EXPECT_EQ(s.sample(3, rng), std::vector<double>(3, 0.7));
}
