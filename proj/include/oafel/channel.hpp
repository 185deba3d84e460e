#pragma once

// Fading gains, imperfect gain observation and receiver noise.

#include "oafel/core.hpp"

#include <memory>
#include <random>
#include <vector>

namespace oafel {

struct ChannelRealization {
  std::vector<double> h;      // true gains used during transmission
  std::vector<double> h_obs;  // gains observed when scheduling
};

/// Source of per-round channel gains; gains are drawn independently each round.
class GainSampler {
 public:
  virtual ~GainSampler() = default;
  virtual std::vector<double> sample(int N, RngStream& rng) const = 0;
};

class RayleighSampler final : public GainSampler {
 public:
  explicit RayleighSampler(double scale = 1.0) : scale_(scale) {
    if (!(scale > 0.0)) throw Error(Errc::invalid_argument, "scale", "must be > 0");
  }

  double scale() const { return scale_; }

  std::vector<double> sample(int N, RngStream& rng) const override {
    // |h|^2 / (2 scale^2) ~ Exp(1)
    std::exponential_distribution<double> expo(1.0);
    std::vector<double> out(static_cast<std::size_t>(N));
    for (auto& g : out) {
      double e = expo(rng.engine());
      while (e <= 0.0) e = expo(rng.engine());
      g = scale_ * std::sqrt(2.0 * e);
    }
    return out;
  }

 private:
  double scale_;
};

inline std::vector<double> sample_channel(int N, double scale, RngStream& rng) {
  return RayleighSampler(scale).sample(N, rng);
}

/// Observed gain uniform in [(1 - e) h, (1 + e) h]; e = 0 returns h unchanged.
inline std::vector<double> observe_channel(const std::vector<double>& h, double error_fraction,
                                           RngStream& rng) {
  if (error_fraction < 0.0 || error_fraction >= 1.0)
    throw Error(Errc::invalid_argument, "error_fraction", "must lie in [0, 1)");
  if (error_fraction == 0.0) return h;
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i)
    out[i] = h[i] * rng.uniform(1.0 - error_fraction, 1.0 + error_fraction);
  return out;
}

inline Vector sample_noise(std::size_t s, double sigma0_sq, RngStream& rng) {
  if (!(sigma0_sq > 0.0)) throw Error(Errc::invalid_argument, "sigma0_sq", "must be > 0");
  std::normal_distribution<double> gauss(0.0, std::sqrt(sigma0_sq));
  Vector z(static_cast<Eigen::Index>(s));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = gauss(rng.engine());
  return z;
}

}  // namespace oafel
