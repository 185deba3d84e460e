#pragma once

// Shared domain types, configuration validation and seeded random streams.

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace oafel {

using Vector = Eigen::VectorXd;
using ModelVector = Vector;
using GradientVector = Vector;

enum class Errc {
  missing_key,
  invalid_value,
  indivisible_dataset,
  infeasible_label_assignment,
  batch_too_large,
  insufficient_history,
  invalid_argument,
  zero_norm_estimate,
  empty_schedule,
  too_many_devices,
  missing_initial_report,
  learning_rate_too_large,
  incomplete_trace,
  bad_magic,
  count_mismatch,
  truncated_file,
  io_failure,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::missing_key: return "MissingKey";
    case Errc::invalid_value: return "InvalidValue";
    case Errc::indivisible_dataset: return "IndivisibleDataset";
    case Errc::infeasible_label_assignment: return "InfeasibleLabelAssignment";
    case Errc::batch_too_large: return "BatchTooLarge";
    case Errc::insufficient_history: return "InsufficientHistory";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::zero_norm_estimate: return "ZeroNormEstimate";
    case Errc::empty_schedule: return "EmptySchedule";
    case Errc::too_many_devices: return "TooManyDevices";
    case Errc::missing_initial_report: return "MissingInitialReport";
    case Errc::learning_rate_too_large: return "LearningRateTooLarge";
    case Errc::incomplete_trace: return "IncompleteTrace";
    case Errc::bad_magic: return "BadMagic";
    case Errc::count_mismatch: return "CountMismatch";
    case Errc::truncated_file: return "TruncatedFile";
    case Errc::io_failure: return "IoFailure";
  }
  return "Unknown";
}

/// Every failure raised by the library. `subject` names the offending key,
/// file or device where one exists.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string subject, const std::string& reason = {})
      : std::runtime_error(format(code, subject, reason)),
        code_(code),
        subject_(std::move(subject)) {}

  Errc code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  static std::string format(Errc code, const std::string& subject, const std::string& reason) {
    std::string msg = errc_name(code);
    if (!subject.empty()) msg += "(" + subject + ")";
    if (!reason.empty()) msg += ": " + reason;
    return msg;
  }

  Errc code_;
  std::string subject_;
};

// ---------------------------------------------------------------------------
// Random streams

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// A reproducible random stream addressed by (seed, purpose, device, round).
class RngStream {
 public:
  using engine_type = std::mt19937_64;

  RngStream(std::uint64_t master_seed, std::string purpose, std::uint64_t device,
            std::uint64_t round)
      : master_seed_(master_seed),
        purpose_(std::move(purpose)),
        device_(device),
        round_(round),
        engine_(mix(master_seed_, purpose_, device_, round_)) {}

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  const std::string& purpose() const noexcept { return purpose_; }
  std::uint64_t device() const noexcept { return device_; }
  std::uint64_t round() const noexcept { return round_; }

  engine_type& engine() noexcept { return engine_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::uint64_t next() { return engine_(); }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::string_view purpose, std::uint64_t device,
                           std::uint64_t round) {
    std::uint64_t h = detail::splitmix64(seed);
    h = detail::splitmix64(h ^ detail::fnv1a(purpose));
    h = detail::splitmix64(h ^ device);
    h = detail::splitmix64(h ^ (round * 0xd6e8feb86659fd93ULL));
    return h;
  }

  std::uint64_t master_seed_;
  std::string purpose_;
  std::uint64_t device_;
  std::uint64_t round_;
  engine_type engine_;
};

inline RngStream derive_stream(std::uint64_t master_seed, std::string purpose, std::uint64_t device,
                               std::uint64_t round) {
  return RngStream(master_seed, std::move(purpose), device, round);
}

// ---------------------------------------------------------------------------
// Configuration

struct Hyperparams {
  int T = 0;
  int N = 0;
  /// Model dimension; 0 until bound to a concrete model.
  std::size_t s = 0;
  int L_b = 0;
  int L_e = 0;
  std::vector<double> eta;  // one entry per round, eta[t - 1] for round t
  double momentum = 0.0;
  double l_smooth = std::numeric_limits<double>::quiet_NaN();
  double mu = std::numeric_limits<double>::quiet_NaN();
  double G_sq = std::numeric_limits<double>::quiet_NaN();
  double gamma0 = 0.0;
  double sigma0_sq = 0.0;
  double V = 0.0;
  double q_min = 0.1;
  /// Rescheduling tolerance as a fraction of the estimated round energy.
  double delta_h = 0.5;
  int K_local = 1;

  double eta_at(int t) const { return eta.at(static_cast<std::size_t>(t - 1)); }
  bool has_smoothness() const { return std::isfinite(l_smooth); }
  bool has_variance_bound() const { return std::isfinite(G_sq); }
  bool has_strong_convexity() const { return std::isfinite(mu); }
};

struct DeviceConfig {
  double e_n = 0.0;     // joules per sample per gradient pass
  double E_bar_n = 0.0; // total budget over T rounds, joules
};

struct ValidatedConfig {
  Hyperparams hp;
  std::vector<DeviceConfig> devices;
};

namespace detail {

using json = nlohmann::json;

inline const json& require(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) throw Error(Errc::missing_key, key);
  return *it;
}

inline double as_real(const json& v, const char* key) {
  if (!v.is_number()) throw Error(Errc::invalid_value, key, "must be a number");
  double x = v.get<double>();
  if (!std::isfinite(x)) throw Error(Errc::invalid_value, key, "must be finite");
  return x;
}

inline int as_count(const json& v, const char* key) {
  if (!v.is_number_integer()) throw Error(Errc::invalid_value, key, "must be an integer");
  auto x = v.get<long long>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw Error(Errc::invalid_value, key, "out of range");
  return static_cast<int>(x);
}

inline double optional_real(const json& doc, const char* key, double fallback) {
  auto it = doc.find(key);
  return (it == doc.end() || it->is_null()) ? fallback : as_real(*it, key);
}

inline int optional_count(const json& doc, const char* key, int fallback) {
  auto it = doc.find(key);
  return (it == doc.end() || it->is_null()) ? fallback : as_count(*it, key);
}

/// Scalar or per-device array of length N.
inline std::vector<double> per_device(const json& v, const char* key, int N) {
  if (v.is_array()) {
    if (static_cast<int>(v.size()) != N)
      throw Error(Errc::invalid_value, key, "array length must equal N");
    std::vector<double> out;
    for (const auto& x : v) out.push_back(as_real(x, key));
    return out;
  }
  return std::vector<double>(static_cast<std::size_t>(N), as_real(v, key));
}

}  // namespace detail

/// Validates a flat key/value configuration document and fills defaults
/// (q_min = 0.1, momentum = 0, K_local = 1, L_e = L_b, delta_h = 0.5).
///
/// Device energies come either as `e_n` (joules per sample) or as
/// `compute_energy_per_round`, from which e_n = budget / (L_b * K_local).
/// Budgets come as `E_bar_n` (total) or `E_bar_per_round` (times T).
inline ValidatedConfig validate_config(const nlohmann::json& doc) {
  using namespace detail;
  if (!doc.is_object()) throw Error(Errc::invalid_value, "<root>", "must be an object");

  ValidatedConfig cfg;
  Hyperparams& hp = cfg.hp;
  hp.T = as_count(require(doc, "T"), "T");
  hp.N = as_count(require(doc, "N"), "N");
  hp.L_b = as_count(require(doc, "L_b"), "L_b");
  hp.gamma0 = as_real(require(doc, "gamma0"), "gamma0");
  hp.sigma0_sq = as_real(require(doc, "sigma0_sq"), "sigma0_sq");
  hp.V = as_real(require(doc, "V"), "V");

  if (hp.T < 1) throw Error(Errc::invalid_value, "T", "must be >= 1");
  if (hp.N < 1) throw Error(Errc::invalid_value, "N", "must be >= 1");
  if (hp.L_b < 1) throw Error(Errc::invalid_value, "L_b", "must be >= 1");

  const json& eta = require(doc, "eta");
  if (eta.is_array()) {
    if (static_cast<int>(eta.size()) != hp.T)
      throw Error(Errc::invalid_value, "eta", "array length must equal T");
    for (const auto& x : eta) hp.eta.push_back(as_real(x, "eta"));
  } else {
    hp.eta.assign(static_cast<std::size_t>(hp.T), as_real(eta, "eta"));
  }
  for (double e : hp.eta)
    if (e <= 0.0) throw Error(Errc::invalid_value, "eta", "must be > 0");

  if (auto it = doc.find("s"); it != doc.end() && !it->is_null()) {
    int s = as_count(*it, "s");
    if (s < 1) throw Error(Errc::invalid_value, "s", "must be >= 1");
    hp.s = static_cast<std::size_t>(s);
  }

  hp.L_e = optional_count(doc, "L_e", hp.L_b);
  if (hp.L_e < 1) throw Error(Errc::invalid_value, "L_e", "must be >= 1");
  if (hp.L_e > hp.L_b) throw Error(Errc::invalid_value, "L_e", "must not exceed L_b");

  hp.momentum = optional_real(doc, "momentum", 0.0);
  if (hp.momentum < 0.0 || hp.momentum >= 1.0)
    throw Error(Errc::invalid_value, "momentum", "must lie in [0, 1)");
  hp.K_local = optional_count(doc, "K_local", 1);
  if (hp.K_local < 1) throw Error(Errc::invalid_value, "K_local", "must be >= 1");

  hp.l_smooth = optional_real(doc, "l_smooth", hp.l_smooth);
  hp.mu = optional_real(doc, "mu", hp.mu);
  hp.G_sq = optional_real(doc, "G_sq", hp.G_sq);
  if (hp.has_smoothness() && hp.l_smooth <= 0.0)
    throw Error(Errc::invalid_value, "l_smooth", "must be > 0");
  if (hp.has_strong_convexity() && hp.mu <= 0.0)
    throw Error(Errc::invalid_value, "mu", "must be > 0");
  if (hp.has_strong_convexity() && hp.has_smoothness() && hp.mu > hp.l_smooth)
    throw Error(Errc::invalid_value, "mu", "must not exceed l_smooth");
  if (hp.has_variance_bound() && hp.G_sq < 0.0)
    throw Error(Errc::invalid_value, "G_sq", "must be >= 0");

  if (hp.V <= 0.0) throw Error(Errc::invalid_value, "V", "must be > 0");
  if (hp.gamma0 <= 0.0) throw Error(Errc::invalid_value, "gamma0", "must be > 0");
  if (hp.sigma0_sq <= 0.0) throw Error(Errc::invalid_value, "sigma0_sq", "must be > 0");
  hp.q_min = optional_real(doc, "q_min", 0.1);
  if (hp.q_min < 0.0) throw Error(Errc::invalid_value, "q_min", "must be >= 0");
  hp.delta_h = optional_real(doc, "delta_h", 0.5);
  if (hp.delta_h < 0.0) throw Error(Errc::invalid_value, "delta_h", "must be >= 0");

  std::vector<double> e_n;
  if (auto it = doc.find("e_n"); it != doc.end() && !it->is_null()) {
    e_n = per_device(*it, "e_n", hp.N);
  } else if (auto jt = doc.find("compute_energy_per_round"); jt != doc.end() && !jt->is_null()) {
    e_n = per_device(*jt, "compute_energy_per_round", hp.N);
    for (double& e : e_n) e /= static_cast<double>(hp.L_b) * hp.K_local;
  } else {
    throw Error(Errc::missing_key, "e_n");
  }

  std::vector<double> budget;
  if (auto it = doc.find("E_bar_n"); it != doc.end() && !it->is_null()) {
    budget = per_device(*it, "E_bar_n", hp.N);
  } else if (auto jt = doc.find("E_bar_per_round"); jt != doc.end() && !jt->is_null()) {
    budget = per_device(*jt, "E_bar_per_round", hp.N);
    for (double& b : budget) b *= hp.T;
  } else {
    throw Error(Errc::missing_key, "E_bar_n");
  }

  for (int n = 0; n < hp.N; ++n) {
    DeviceConfig d{e_n[static_cast<std::size_t>(n)], budget[static_cast<std::size_t>(n)]};
    if (!(d.e_n > 0.0)) throw Error(Errc::invalid_value, "e_n", "must be > 0");
    if (!(d.E_bar_n > 0.0)) throw Error(Errc::invalid_value, "E_bar_n", "must be > 0");
    cfg.devices.push_back(d);
  }
  return cfg;
}

}  // namespace oafel
