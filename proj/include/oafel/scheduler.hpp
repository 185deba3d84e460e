#pragma once

// Energy-aware device scheduling: virtual queues, gradient-norm estimators,
// the per-round scheduler and its baselines, and the round loop that glues
// learner, channel and aggregation together.

#include "oafel/channel.hpp"
#include "oafel/core.hpp"
#include "oafel/learner.hpp"
#include "oafel/otaa.hpp"
#include "oafel/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace oafel {

// ---------------------------------------------------------------------------
// Virtual queues and energy accounting

/// q' = max{q + y, q_min} with y = beta * E - E_bar / T
inline double queue_update(double q, bool beta, double E_actual, double E_bar_over_T,
                           double q_min) {
  const double y = (beta ? E_actual : 0.0) - E_bar_over_T;
  return std::max(q + y, q_min);
}

struct VirtualQueue {
  std::vector<double> q;
  double q_min = 0.0;

  VirtualQueue() = default;
  VirtualQueue(int N, double q_min_) : q(static_cast<std::size_t>(N), q_min_), q_min(q_min_) {}
};

struct EnergyRecord {
  int t = 0;
  double E_cp = 0.0;
  double E_tr = 0.0;
  double E_est = 0.0;
  double total() const { return E_cp + E_tr; }
};

class EnergyLedger {
 public:
  EnergyLedger() = default;
  explicit EnergyLedger(std::vector<double> budgets)
      : spent_(budgets.size(), 0.0), budget_(std::move(budgets)), per_round_(budget_.size()) {}

  void charge(int device, const EnergyRecord& rec) {
    auto n = static_cast<std::size_t>(device);
    spent_.at(n) += rec.total();
    per_round_.at(n).push_back(rec);
  }

  double spent(int device) const { return spent_.at(static_cast<std::size_t>(device)); }
  double budget(int device) const { return budget_.at(static_cast<std::size_t>(device)); }
  const std::vector<double>& spent() const { return spent_; }
  const std::vector<double>& budgets() const { return budget_; }
  const std::vector<EnergyRecord>& records(int device) const {
    return per_round_.at(static_cast<std::size_t>(device));
  }
  int devices() const { return static_cast<int>(spent_.size()); }

  /// max_n spent_n / (t * E_bar_n / T)
  double unified_usage(int t, int T) const {
    double worst = 0.0;
    for (std::size_t n = 0; n < spent_.size(); ++n)
      worst = std::max(worst, spent_[n] / (static_cast<double>(t) * budget_[n] / T));
    return worst;
  }

 private:
  std::vector<double> spent_;
  std::vector<double> budget_;
  std::vector<std::vector<EnergyRecord>> per_round_;
};

// ---------------------------------------------------------------------------
// Gradient-norm estimation

/// Most recently reported squared norm of each device.
inline std::vector<double> est_p(const std::vector<std::optional<double>>& last_reported) {
  std::vector<double> out;
  out.reserve(last_reported.size());
  for (std::size_t n = 0; n < last_reported.size(); ++n) {
    if (!last_reported[n]) throw Error(Errc::missing_initial_report, std::to_string(n));
    out.push_back(*last_reported[n]);
  }
  return out;
}

struct EstCResult {
  double estimate = 0.0;    // squared norm of the probe gradient
  double E_cp_probe = 0.0;  // e_n * L_e
};

/// Squared norm of a gradient over an independent probe batch of L_e samples.
template <LossModel M>
EstCResult est_c(const M& model, const ModelVector& w, const Dataset& data, const IndexList& shard,
                 int L_e, double e_n, RngStream& rng) {
  if (L_e < 1) throw Error(Errc::invalid_argument, "L_e", "must be >= 1");
  LocalUpdateResult probe = local_gradient(model, w, data, shard, L_e, rng);
  return {probe.norm_sq, e_n * L_e};
}

/// sigma_t^2 / h_obs^2 * ||g||^2_est + e_n * L_b * K_local
inline double estimate_energy(double sigma_t, double h_obs, double norm_estimate, double e_n,
                              int L_b, int K_local = 1) {
  if (!(h_obs > 0.0)) throw Error(Errc::invalid_argument, "h_obs", "must be > 0");
  return sigma_t * sigma_t / (h_obs * h_obs) * norm_estimate +
         e_n * static_cast<double>(L_b) * K_local;
}

// ---------------------------------------------------------------------------
// Per-round scheduling

/// Inputs of the convergence penalty
/// U(k) = l eta^2 / 2 * (G^2 / (L_b k) + sigma0^2 s / (sigma_t^2 k^2)).
struct PenaltyCoeffs {
  double V = 1.0;
  double l = 1.0;
  double eta = 1.0;
  double G_sq = 0.0;
  int L_b = 1;
  double sigma0_sq = 0.0;
  std::size_t s = 1;
  double sigma_t = 1.0;

  double penalty(int k) const {
    const double kk = static_cast<double>(k);
    return l * eta * eta / 2.0 *
           (G_sq / (static_cast<double>(L_b) * kk) +
            sigma0_sq * static_cast<double>(s) / (sigma_t * sigma_t * kk * kk));
  }
};

struct RoundDecision {
  std::vector<int> beta;      // scheduled for computation
  std::vector<int> transmit;  // subset of beta that transmits after back-off
  std::vector<int> B;         // scheduled device ids, ascending
  double sigma_t = 0.0;
  std::vector<double> E_est;
  int k_star = 0;
  std::vector<double> v_values;  // v(1..N), dynamic policy only
  double objective = std::numeric_limits<double>::quiet_NaN();

  int scheduled_count() const { return static_cast<int>(B.size()); }
};

namespace detail {

inline RoundDecision decision_from_beta(std::vector<int> beta, double sigma_t,
                                        std::vector<double> E_est) {
  RoundDecision d;
  d.beta = std::move(beta);
  d.transmit = d.beta;
  for (std::size_t n = 0; n < d.beta.size(); ++n)
    if (d.beta[n]) d.B.push_back(static_cast<int>(n));
  d.k_star = static_cast<int>(d.B.size());
  d.sigma_t = sigma_t;
  d.E_est = std::move(E_est);
  return d;
}

inline void check_schedule_inputs(const std::vector<double>& queues,
                                  const std::vector<double>& E_est, const PenaltyCoeffs& c) {
  if (queues.empty()) throw Error(Errc::invalid_argument, "N", "need at least one device");
  if (queues.size() != E_est.size())
    throw Error(Errc::invalid_argument, "E_est", "length must equal number of queues");
  if (!(c.sigma_t > 0.0)) throw Error(Errc::invalid_argument, "sigma_t", "must be > 0");
}

}  // namespace detail

/// Optimal per-round schedule: devices sorted by drift q_n * E_n ascending,
/// the k* with minimum V * U(k) + (sum of the k smallest drifts) are scheduled.
/// Ties go to the lower device index and to the smaller k.
inline RoundDecision schedule_round(const std::vector<double>& queues,
                                    const std::vector<double>& E_est, const PenaltyCoeffs& coeffs) {
  detail::check_schedule_inputs(queues, E_est, coeffs);
  const std::size_t N = queues.size();
  std::vector<double> drift(N);
  for (std::size_t n = 0; n < N; ++n) drift[n] = queues[n] * E_est[n];

  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return drift[static_cast<std::size_t>(a)] <
                                              drift[static_cast<std::size_t>(b)]; });

  RoundDecision d;
  d.v_values.resize(N);
  double prefix = 0.0;
  int best_k = 1;
  for (std::size_t k = 1; k <= N; ++k) {
    prefix += drift[static_cast<std::size_t>(order[k - 1])];
    const double v = coeffs.V * coeffs.penalty(static_cast<int>(k)) + prefix;
    d.v_values[k - 1] = v;
    if (v < d.v_values[static_cast<std::size_t>(best_k - 1)]) best_k = static_cast<int>(k);
  }

  std::vector<int> beta(N, 0);
  for (int k = 0; k < best_k; ++k) beta[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;
  RoundDecision out = detail::decision_from_beta(std::move(beta), coeffs.sigma_t, E_est);
  out.v_values = std::move(d.v_values);
  out.objective = out.v_values[static_cast<std::size_t>(best_k - 1)];
  return out;
}

/// Exhaustive minimiser of V * U(|B|) + sum_{n in B} q_n E_n over non-empty B.
inline RoundDecision brute_force_schedule(const std::vector<double>& queues,
                                          const std::vector<double>& E_est,
                                          const PenaltyCoeffs& coeffs) {
  detail::check_schedule_inputs(queues, E_est, coeffs);
  const std::size_t N = queues.size();
  if (N > 20) throw Error(Errc::too_many_devices, std::to_string(N), "enumeration limited to 20");

  std::vector<double> penalty(N + 1, 0.0);
  for (std::size_t k = 1; k <= N; ++k) penalty[k] = coeffs.V * coeffs.penalty(static_cast<int>(k));

  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_mask = 1;
  const std::uint32_t end = std::uint32_t{1} << N;
  for (std::uint32_t mask = 1; mask < end; ++mask) {
    double obj = penalty[static_cast<std::size_t>(std::popcount(mask))];
    for (std::size_t n = 0; n < N; ++n)
      if (mask & (std::uint32_t{1} << n)) obj += queues[n] * E_est[n];
    if (obj < best) {
      best = obj;
      best_mask = mask;
    }
  }
  std::vector<int> beta(N, 0);
  for (std::size_t n = 0; n < N; ++n) beta[n] = (best_mask >> n) & 1u;
  RoundDecision out = detail::decision_from_beta(std::move(beta), coeffs.sigma_t, E_est);
  out.objective = best;
  return out;
}

/// Schedules device n iff E_est_n <= (E_bar_n - spent_n) / (T - t + 1).
/// The returned set may be empty.
inline RoundDecision myopic_schedule(const EnergyLedger& ledger, const std::vector<double>& E_est,
                                     int t, int T, double sigma_t) {
  if (t < 1 || t > T) throw Error(Errc::invalid_argument, "t", "must lie in [1, T]");
  if (static_cast<int>(E_est.size()) != ledger.devices())
    throw Error(Errc::invalid_argument, "E_est", "length must equal device count");
  std::vector<int> beta(E_est.size(), 0);
  for (int n = 0; n < ledger.devices(); ++n) {
    const double cap = (ledger.budget(n) - ledger.spent(n)) / static_cast<double>(T - t + 1);
    beta[static_cast<std::size_t>(n)] = E_est[static_cast<std::size_t>(n)] <= cap ? 1 : 0;
  }
  return detail::decision_from_beta(std::move(beta), sigma_t, E_est);
}

inline RoundDecision schedule_all(const std::vector<double>& E_est, double sigma_t) {
  return detail::decision_from_beta(std::vector<int>(E_est.size(), 1), sigma_t, E_est);
}

/// A scheduled device keeps its transmission slot iff E - E_est <= delta_h * E_est.
/// E_actual holds the realised energy of scheduled devices (others ignored).
inline RoundDecision reschedule_filter(RoundDecision decision, const std::vector<double>& E_actual,
                                       const std::vector<double>& E_est, double delta_h) {
  if (E_actual.size() != decision.beta.size() || E_est.size() != decision.beta.size())
    throw Error(Errc::invalid_argument, "E_actual", "length must equal device count");
  for (std::size_t n = 0; n < decision.beta.size(); ++n) {
    if (!decision.beta[n]) {
      decision.transmit[n] = 0;
      continue;
    }
    decision.transmit[n] = (E_actual[n] - E_est[n] <= delta_h * E_est[n]) ? 1 : 0;
  }
  return decision;
}

// ---------------------------------------------------------------------------
// Round loop

enum class Policy { dynamic, myopic, all };
enum class NormEstimator { est_p, est_c };

inline const char* policy_name(Policy p) {
  switch (p) {
    case Policy::dynamic: return "dynamic";
    case Policy::myopic: return "myopic";
    case Policy::all: return "all";
  }
  return "?";
}

inline Policy parse_policy(const std::string& s) {
  if (s == "dynamic") return Policy::dynamic;
  if (s == "myopic") return Policy::myopic;
  if (s == "all") return Policy::all;
  throw Error(Errc::invalid_value, "policy", "expected dynamic|myopic|all, got '" + s + "'");
}

struct DeviceRound {
  double q_before = 0.0;  // queue used for the decision
  double q = 0.0;         // queue after the update
  double h = 0.0;
  double h_obs = 0.0;
  double norm_sq_est = 0.0;
  double E_est = 0.0;
  double E_cp = 0.0;  // charged computation energy
  double E_tr = 0.0;  // charged transmit energy (0 when backed off)
  double norm_sq = std::numeric_limits<double>::quiet_NaN();  // realised, if computed
  bool scheduled = false;
  bool transmitted = false;
  bool backed_off = false;

  double E_charged() const { return E_cp + E_tr; }
};

struct RoundTrace {
  int t = 0;
  bool evaluated = false;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double sigma_t = 0.0;
  int k_star = 0;
  int transmitted = 0;
  std::vector<int> scheduled;
  double snr = 0.0;
  double unified_energy = 0.0;
  double penalty_U = std::numeric_limits<double>::quiet_NaN();  // U_t at k*, without V
  std::vector<DeviceRound> devices;
};

struct SimulationOptions {
  Policy policy = Policy::dynamic;
  PowerMode power_mode = PowerMode::paper_literal;
  NormEstimator estimator = NormEstimator::est_p;
  double obs_error = 0.0;
  double channel_scale = 1.0;
  bool reschedule = true;  // dynamic policy only
  std::uint64_t seed = 0;
  /// Evaluate loss/accuracy every this many rounds (and always at t = T).
  int eval_every = 1;
  bool track_smoothness = true;
};

/// One federated run: the global model, queues, ledger and norm reports.
/// Algorithm order per round: power scalar, energy estimates, schedule,
/// local updates, back-off, aggregation, ledger and queue updates.
template <LossModel M>
class Simulation {
 public:
  Simulation(const M& model, const Dataset& train, std::vector<IndexList> shards,
             const Dataset* test, ValidatedConfig cfg, SimulationOptions opt, ModelVector w0,
             std::shared_ptr<const GainSampler> sampler = nullptr)
      : model_(model),
        train_(train),
        shards_(std::move(shards)),
        test_(test),
        cfg_(std::move(cfg)),
        opt_(opt),
        w_(std::move(w0)),
        sampler_(sampler ? std::move(sampler)
                         : std::make_shared<RayleighSampler>(opt.channel_scale)) {
    const Hyperparams& hp = cfg_.hp;
    if (static_cast<int>(shards_.size()) != hp.N)
      throw Error(Errc::invalid_argument, "shards", "count must equal N");
    if (static_cast<int>(cfg_.devices.size()) != hp.N)
      throw Error(Errc::invalid_argument, "devices", "count must equal N");
    if (static_cast<std::size_t>(w_.size()) != model_.dimension())
      throw Error(Errc::invalid_argument, "w0", "dimension mismatch");
    if (cfg_.hp.s != 0 && cfg_.hp.s != model_.dimension())
      throw Error(Errc::invalid_value, "s", "does not match the model dimension");
    cfg_.hp.s = model_.dimension();
    if (opt_.policy == Policy::dynamic) {
      if (!hp.has_smoothness()) throw Error(Errc::missing_key, "l_smooth");
      if (!hp.has_variance_bound()) throw Error(Errc::missing_key, "G_sq");
    }
    if (opt_.eval_every < 1) opt_.eval_every = 1;
    std::vector<double> budgets;
    for (const auto& d : cfg_.devices) budgets.push_back(d.E_bar_n);
    ledger_ = EnergyLedger(std::move(budgets));
    queue_ = VirtualQueue(hp.N, hp.q_min);
    last_norm_sq_.assign(static_cast<std::size_t>(hp.N), std::nullopt);
  }

  /// Every device computes one local update at w0 and reports its norm.
  void initialize() {
    const Hyperparams& hp = cfg_.hp;
    std::vector<LocalUpdateResult> res(static_cast<std::size_t>(hp.N));
    parallel_for(res.size(), [&](std::size_t n) {
      RngStream rng = derive_stream(opt_.seed, "batch", n, 0);
      res[n] = local_update_multi(model_, w_, train_, shards_[n], hp.K_local, hp.L_b,
                                  hp.eta_at(1), hp.momentum, rng);
    });
    for (std::size_t n = 0; n < res.size(); ++n) last_norm_sq_[n] = res[n].norm_sq;
    initialized_ = true;
  }

  bool finished() const { return t_ > cfg_.hp.T; }
  int next_round() const { return t_; }
  const ModelVector& model() const { return w_; }
  const VirtualQueue& queues() const { return queue_; }
  const EnergyLedger& ledger() const { return ledger_; }
  const ValidatedConfig& config() const { return cfg_; }
  const SimulationOptions& options() const { return opt_; }
  const std::vector<std::optional<double>>& reported_norms() const { return last_norm_sq_; }
  const SmoothnessEstimator& smoothness() const { return smooth_; }

  PenaltyCoeffs penalty_coeffs(int t, double sigma_t) const {
    const Hyperparams& hp = cfg_.hp;
    return {hp.V, hp.l_smooth, hp.eta_at(t), hp.G_sq, hp.L_b, hp.sigma0_sq, hp.s, sigma_t};
  }

  RoundTrace run_round() {
    const Hyperparams& hp = cfg_.hp;
    if (!initialized_) throw Error(Errc::missing_initial_report, "", "initialize() not called");
    if (finished()) throw Error(Errc::invalid_argument, "t", "all rounds already executed");
    const int t = t_;
    const auto N = static_cast<std::size_t>(hp.N);
    const auto ut = static_cast<std::uint64_t>(t);

    RoundTrace tr;
    tr.t = t;
    tr.devices.resize(N);

    // Norm estimates.
    std::vector<double> norm_est;
    std::vector<double> probe_energy(N, 0.0);
    if (opt_.estimator == NormEstimator::est_p) {
      norm_est = est_p(last_norm_sq_);
    } else {
      norm_est.assign(N, 0.0);
      parallel_for(N, [&](std::size_t n) {
        RngStream rng = derive_stream(opt_.seed, "est_c", n, ut);
        EstCResult r = est_c(model_, w_, train_, shards_[n], hp.L_e, cfg_.devices[n].e_n, rng);
        norm_est[n] = r.estimate;
        probe_energy[n] = r.E_cp_probe;
      });
    }

    const double sigma_t = power_scalar(norm_est, hp.gamma0, hp.sigma0_sq, hp.s, opt_.power_mode);
    tr.sigma_t = sigma_t;

    RngStream ch_rng = derive_stream(opt_.seed, "channel", 0, ut);
    RngStream obs_rng = derive_stream(opt_.seed, "observe", 0, ut);
    ChannelRealization ch;
    ch.h = sampler_->sample(hp.N, ch_rng);
    ch.h_obs = observe_channel(ch.h, opt_.obs_error, obs_rng);

    std::vector<double> E_est(N);
    for (std::size_t n = 0; n < N; ++n)
      E_est[n] = estimate_energy(sigma_t, ch.h_obs[n], norm_est[n], cfg_.devices[n].e_n, hp.L_b,
                                 hp.K_local);

    RoundDecision decision;
    switch (opt_.policy) {
      case Policy::dynamic:
        decision = schedule_round(queue_.q, E_est, penalty_coeffs(t, sigma_t));
        break;
      case Policy::myopic:
        decision = myopic_schedule(ledger_, E_est, t, hp.T, sigma_t);
        break;
      case Policy::all:
        decision = schedule_all(E_est, sigma_t);
        break;
    }

    // Local computation on scheduled devices.
    std::vector<std::optional<LocalUpdateResult>> updates(N);
    parallel_for(decision.B.size(), [&](std::size_t i) {
      const auto n = static_cast<std::size_t>(decision.B[i]);
      RngStream rng = derive_stream(opt_.seed, "batch", n, ut);
      updates[n] = local_update_multi(model_, w_, train_, shards_[n], hp.K_local, hp.L_b,
                                      hp.eta_at(t), hp.momentum, rng);
    });

    std::vector<double> E_cp(N, 0.0), E_tr(N, 0.0), E_actual(N, 0.0);
    for (int id : decision.B) {
      const auto n = static_cast<std::size_t>(id);
      const double e_n = cfg_.devices[n].e_n;
      E_cp[n] = opt_.estimator == NormEstimator::est_c
                    ? e_n * (static_cast<double>(updates[n]->samples_used) - hp.L_e)
                    : e_n * static_cast<double>(updates[n]->samples_used);
      E_tr[n] = transmit_energy(sigma_t, ch.h[n], updates[n]->norm_sq);
      E_actual[n] = E_cp[n] + probe_energy[n] + E_tr[n];
    }

    if (opt_.policy == Policy::dynamic && opt_.reschedule)
      decision = reschedule_filter(std::move(decision), E_actual, E_est, hp.delta_h);

    std::vector<Transmission> txs;
    for (int n : decision.B)
      if (decision.transmit[static_cast<std::size_t>(n)]) {
        const auto& u = *updates[static_cast<std::size_t>(n)];
        txs.push_back({n, &u.effective_gradient, u.norm_sq, ch.h[static_cast<std::size_t>(n)]});
      }

    const ModelVector w_prev = w_;
    if (!txs.empty()) {
      RngStream noise_rng = derive_stream(opt_.seed, "noise", 0, ut);
      Vector z = sample_noise(hp.s, hp.sigma0_sq, noise_rng);
      AggregationOutcome agg = aggregate(w_, txs, sigma_t, hp.eta_at(t), z);
      w_ = std::move(agg.w_next);
      tr.snr = agg.snr;
      if (!w_.allFinite())
        throw Error(Errc::invalid_value, "w", "model diverged at round " + std::to_string(t));
    }
    tr.transmitted = static_cast<int>(txs.size());

    // Ledger and queues.
    for (std::size_t n = 0; n < N; ++n) {
      DeviceRound& d = tr.devices[n];
      d.q_before = queue_.q[n];
      d.h = ch.h[n];
      d.h_obs = ch.h_obs[n];
      d.norm_sq_est = norm_est[n];
      d.E_est = E_est[n];
      d.scheduled = decision.beta[n] != 0;
      d.transmitted = decision.transmit[n] != 0;
      d.backed_off = d.scheduled && !d.transmitted;
      d.E_cp = probe_energy[n] + (d.scheduled ? E_cp[n] : 0.0);
      d.E_tr = d.transmitted ? E_tr[n] : 0.0;
      if (updates[n]) d.norm_sq = updates[n]->norm_sq;

      const bool charged = d.E_charged() > 0.0;
      if (charged) ledger_.charge(static_cast<int>(n), {t, d.E_cp, d.E_tr, E_est[n]});
      const double share = cfg_.devices[n].E_bar_n / hp.T;
      queue_.q[n] = queue_update(queue_.q[n], charged, d.E_charged(), share, queue_.q_min);
      d.q = queue_.q[n];
      if (updates[n]) last_norm_sq_[n] = updates[n]->norm_sq;
    }

    if (opt_.track_smoothness) {
      GradientSnapshot snap;
      snap.w = w_prev;
      snap.grads.resize(N);
      for (std::size_t n = 0; n < N; ++n)
        if (updates[n]) snap.grads[n] = updates[n]->effective_gradient;
      smooth_.observe(snap);
    }

    tr.scheduled = decision.B;
    tr.k_star = decision.k_star;
    if (decision.k_star >= 1 && hp.has_smoothness() && hp.has_variance_bound())
      tr.penalty_U = penalty_coeffs(t, sigma_t).penalty(decision.k_star);
    tr.unified_energy = ledger_.unified_usage(t, hp.T);

    if (t % opt_.eval_every == 0 || t == hp.T) evaluate(tr);
    ++t_;
    return tr;
  }

 private:
  void evaluate(RoundTrace& tr) {
    if (!cache_ || cache_->first != w_) {
      double loss = global_loss(model_, shards_, train_, w_);
      double acc = std::numeric_limits<double>::quiet_NaN();
      if constexpr (Classifier<M>) {
        if (test_ != nullptr) {
          IndexList all(test_->size());
          std::iota(all.begin(), all.end(), std::size_t{0});
          acc = model_.accuracy(w_, *test_, all);
        }
      }
      cache_ = std::make_pair(w_, std::make_pair(loss, acc));
    }
    tr.evaluated = true;
    tr.loss = cache_->second.first;
    tr.accuracy = cache_->second.second;
  }

  const M& model_;
  const Dataset& train_;
  std::vector<IndexList> shards_;
  const Dataset* test_;
  ValidatedConfig cfg_;
  SimulationOptions opt_;
  ModelVector w_;
  std::shared_ptr<const GainSampler> sampler_;

  int t_ = 1;
  bool initialized_ = false;
  VirtualQueue queue_;
  EnergyLedger ledger_;
  std::vector<std::optional<double>> last_norm_sq_;
  SmoothnessEstimator smooth_;
  std::optional<std::pair<ModelVector, std::pair<double, double>>> cache_;
};

}  // namespace oafel
