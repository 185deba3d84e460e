#pragma once

// Over-the-air analog aggregation: power scalar, transmit energy,
// superposition with receiver noise and the noisy global update.

#include "oafel/core.hpp"

#include <cmath>
#include <map>
#include <vector>

namespace oafel {

enum class PowerMode {
  /// sigma_t = gamma0 * sigma0^2 * sqrt(s) / min_n ||g_n||
  paper_literal,
  /// sigma_t = sigma0 * sqrt(gamma0 * s) / min_n ||g_n||, which makes the
  /// expected received SNR of the weakest single device equal gamma0.
  snr_consistent,
};

inline const char* power_mode_name(PowerMode m) {
  return m == PowerMode::paper_literal ? "paper" : "snr_consistent";
}

/// `norm_sq_estimates` holds the predicted squared gradient norm of every device.
inline double power_scalar(const std::vector<double>& norm_sq_estimates, double gamma0,
                           double sigma0_sq, std::size_t s,
                           PowerMode mode = PowerMode::paper_literal) {
  if (norm_sq_estimates.empty())
    throw Error(Errc::invalid_argument, "norm_estimates", "must cover every device");
  double min_sq = norm_sq_estimates.front();
  for (std::size_t n = 0; n < norm_sq_estimates.size(); ++n) {
    if (!(norm_sq_estimates[n] > 0.0) || !std::isfinite(norm_sq_estimates[n]))
      throw Error(Errc::zero_norm_estimate, std::to_string(n));
    min_sq = std::min(min_sq, norm_sq_estimates[n]);
  }
  const double min_norm = std::sqrt(min_sq);
  const double dim = static_cast<double>(s);
  if (mode == PowerMode::paper_literal) return gamma0 * sigma0_sq * std::sqrt(dim) / min_norm;
  return std::sqrt(sigma0_sq * gamma0 * dim) / min_norm;
}

inline double transmit_energy(double sigma_t, double h, double norm_sq) {
  if (!(h > 0.0)) throw Error(Errc::invalid_argument, "h", "channel gain must be > 0");
  return sigma_t * sigma_t * norm_sq / (h * h);
}

/// One device's contribution to the superposed signal.
struct Transmission {
  int device = 0;
  const GradientVector* gradient = nullptr;
  double norm_sq = 0.0;
  double h = 1.0;  // true gain during transmission
};

struct AggregationOutcome {
  Vector y;
  ModelVector w_next;
  double snr = 0.0;
  std::map<int, double> per_device_E_tr;
};

/// y = sigma_t * sum g + z;  w_next = w_prev - eta * y / (sigma_t |B|).
inline AggregationOutcome aggregate(const ModelVector& w_prev,
                                    const std::vector<Transmission>& scheduled, double sigma_t,
                                    double eta_t, const Vector& noise) {
  if (scheduled.empty()) throw Error(Errc::empty_schedule, "", "no device transmits");
  if (!(sigma_t > 0.0)) throw Error(Errc::invalid_argument, "sigma_t", "must be > 0");
  if (noise.size() != w_prev.size())
    throw Error(Errc::invalid_argument, "noise", "dimension mismatch");

  Vector sum = Vector::Zero(w_prev.size());
  AggregationOutcome out;
  for (const auto& tx : scheduled) {
    if (tx.gradient == nullptr || tx.gradient->size() != w_prev.size())
      throw Error(Errc::invalid_argument, std::to_string(tx.device), "gradient dimension mismatch");
    sum += *tx.gradient;
    out.per_device_E_tr[tx.device] = transmit_energy(sigma_t, tx.h, tx.norm_sq);
  }
  const double count = static_cast<double>(scheduled.size());
  out.y = sigma_t * sum + noise;
  out.w_next = w_prev - eta_t * (sum / count + noise / (sigma_t * count));
  const double noise_power = noise.squaredNorm();
  const double signal_power = sigma_t * sigma_t * sum.squaredNorm();
  out.snr = noise_power > 0.0 ? signal_power / noise_power
                              : std::numeric_limits<double>::infinity();
  return out;
}

/// Per-entry variance of z / (sigma_t |B|).
inline double expected_update_noise_var(double sigma_t, int B_size, double sigma0_sq) {
  if (B_size < 1) throw Error(Errc::invalid_argument, "B_size", "must be >= 1");
  const double b = static_cast<double>(B_size);
  return sigma0_sq / (sigma_t * sigma_t * b * b);
}

}  // namespace oafel
