#pragma once

// Convergence and energy certificates evaluated on simulated traces.

#include "oafel/core.hpp"
#include "oafel/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace oafel {

/// Upper bound on E[F(w_t)] - F(w_{t-1}) for a fixed model and schedule size.
inline double lemma1_bound(double eta, double l, double G_sq, int L_b, int B_size, double sigma_t,
                           double sigma0_sq, std::size_t s, double g_norm_sq) {
  if (B_size < 1) throw Error(Errc::invalid_argument, "B_size", "must be >= 1");
  if (!(sigma_t > 0.0)) throw Error(Errc::invalid_argument, "sigma_t", "must be > 0");
  const double b = static_cast<double>(B_size);
  return -eta * (1.0 - l * eta / 2.0) * g_norm_sq +
         l * eta * eta / 2.0 *
             (G_sq / (static_cast<double>(L_b) * b) +
              sigma0_sq * static_cast<double>(s) / (sigma_t * sigma_t * b * b));
}

/// A_t = eta_t / 2 * (G^2 / (L_b |B_t|) + sigma0^2 s / (sigma_t^2 |B_t|^2))
inline double theorem1_A(double eta, double G_sq, int L_b, int B_size, double sigma_t,
                         double sigma0_sq, std::size_t s) {
  if (B_size < 1) throw Error(Errc::invalid_argument, "B_size", "must be >= 1");
  const double b = static_cast<double>(B_size);
  return eta / 2.0 *
         (G_sq / (static_cast<double>(L_b) * b) +
          sigma0_sq * static_cast<double>(s) / (sigma_t * sigma_t * b * b));
}

/// F0_gap * prod_i (1 - mu eta_i) + sum_{i<T} A_i prod_{j>i} (1 - mu eta_j) + A_T,
/// valid when every eta_t <= min{1/l, 1}.
inline double theorem1_bound(double F0_gap, double mu, double l, std::span<const double> eta,
                             std::span<const double> A) {
  if (eta.size() != A.size() || eta.empty())
    throw Error(Errc::invalid_argument, "A", "need one A_t per learning rate");
  if (!(mu > 0.0)) throw Error(Errc::invalid_argument, "mu", "must be > 0");
  const double cap = std::min(1.0 / l, 1.0);
  for (std::size_t t = 0; t < eta.size(); ++t)
    if (eta[t] > cap)
      throw Error(Errc::learning_rate_too_large, std::to_string(t + 1),
                  "eta_t must not exceed min{1/l, 1}");
  double bound = F0_gap;
  for (std::size_t t = 0; t < eta.size(); ++t) bound = (1.0 - mu * eta[t]) * bound + A[t];
  return bound;
}

// ---------------------------------------------------------------------------
// Energy-deviation certificates

struct Theorem2Constants {
  double delta_0 = 0.0;          // max |E_est - E| over scheduled device-rounds
  std::vector<double> theta_n;   // max_t |beta E - E_bar_n / T|
  double theta_0 = 0.0;          // sum theta_n^2 / 2

  double theta_sum() const {
    double s = 0.0;
    for (double v : theta_n) s += v;
    return s;
  }
};

/// `share[n]` is E_bar_n / T. The trace must hold rounds 1..T in order.
inline Theorem2Constants theorem2_constants(std::span<const RoundTrace> trace,
                                            const std::vector<double>& share, int T) {
  if (static_cast<int>(trace.size()) != T)
    throw Error(Errc::incomplete_trace, std::to_string(trace.size()),
                "expected " + std::to_string(T) + " rounds");
  Theorem2Constants c;
  c.theta_n.assign(share.size(), 0.0);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const RoundTrace& r = trace[i];
    if (r.t != static_cast<int>(i) + 1 || r.devices.size() != share.size())
      throw Error(Errc::incomplete_trace, std::to_string(r.t), "rounds must run 1..T over N devices");
    for (std::size_t n = 0; n < share.size(); ++n) {
      const DeviceRound& d = r.devices[n];
      const double E = d.E_charged();
      if (d.scheduled) c.delta_0 = std::max(c.delta_0, std::abs(d.E_est - E));
      c.theta_n[n] = std::max(c.theta_n[n], std::abs(E - share[n]));
    }
  }
  for (double th : c.theta_n) c.theta_0 += th * th / 2.0;
  return c;
}

/// E_bar_n + sqrt(2 V sum U + 2 theta_0 T^2 + 2 T (T - 1) delta_0 sum theta_n)
inline double theorem2_energy_bound(const Theorem2Constants& c, double V, double U_sum, int T,
                                    double E_bar_n) {
  const double TT = static_cast<double>(T);
  const double inner = 2.0 * V * U_sum + 2.0 * c.theta_0 * TT * TT +
                       2.0 * TT * (TT - 1.0) * c.delta_0 * c.theta_sum();
  return E_bar_n + std::sqrt(std::max(inner, 0.0));
}

/// (theta_0 T^2 + T (T - 1) delta_0 sum theta_n) / V: the allowed excess of
/// the online cumulative penalty over the offline optimum.
inline double theorem2_loss_gap(const Theorem2Constants& c, double V, int T) {
  const double TT = static_cast<double>(T);
  return (c.theta_0 * TT * TT + TT * (TT - 1.0) * c.delta_0 * c.theta_sum()) / V;
}

inline double penalty_sum(std::span<const RoundTrace> trace) {
  double s = 0.0;
  for (const auto& r : trace)
    if (std::isfinite(r.penalty_U)) s += r.penalty_U;
  return s;
}

// ---------------------------------------------------------------------------
// Trace audits

struct QueueIdentityAudit {
  std::size_t checks = 0;
  std::size_t violations = 0;
  double worst_square = 0.0;  // max of q'^2 - (q + y)^2
  double worst_step = 0.0;    // max of (q + y) - q'
};

/// q_{t+1}^2 <= (q_t + y_t)^2 and y_t <= q_{t+1} - q_t with y = beta E - E_bar / T.
/// Holds by construction when q_min = 0.
inline QueueIdentityAudit audit_queue_identities(std::span<const RoundTrace> trace,
                                                 const std::vector<double>& share,
                                                 double tol = 1e-12) {
  QueueIdentityAudit a;
  a.worst_square = -std::numeric_limits<double>::infinity();
  a.worst_step = -std::numeric_limits<double>::infinity();
  for (const auto& r : trace)
    for (std::size_t n = 0; n < r.devices.size(); ++n) {
      const DeviceRound& d = r.devices[n];
      const double y = d.E_charged() - share[n];
      const double qy = d.q_before + y;
      const double sq = d.q * d.q - qy * qy;
      const double step = qy - d.q;  // y <= q' - q, rearranged
      a.worst_square = std::max(a.worst_square, sq);
      a.worst_step = std::max(a.worst_step, step);
      ++a.checks;
      if (sq > tol || step > tol) ++a.violations;
    }
  return a;
}

/// Largest |ledger spent_n - sum of per-round E_cp + E_tr| over devices.
inline double ledger_discrepancy(const EnergyLedger& ledger, std::span<const RoundTrace> trace) {
  std::vector<double> sums(static_cast<std::size_t>(ledger.devices()), 0.0);
  for (const auto& r : trace)
    for (std::size_t n = 0; n < sums.size() && n < r.devices.size(); ++n)
      sums[n] += r.devices[n].E_charged();
  double worst = 0.0;
  for (std::size_t n = 0; n < sums.size(); ++n)
    worst = std::max(worst, std::abs(ledger.spent(static_cast<int>(n)) - sums[n]));
  return worst;
}

// ---------------------------------------------------------------------------
// Inequality checks

/// ||g||^2 >= 2 mu (F(w) - F*)
inline bool pl_check(double g_norm_sq, double mu, double F_gap) {
  return g_norm_sq >= 2.0 * mu * F_gap - 1e-9;
}

/// F(v) - F(w) <= grad F(w)^T (v - w) + l/2 ||v - w||^2
inline bool smoothness_check(const Vector& w, const Vector& v, double F_w, double F_v,
                             const Vector& grad_w, double l) {
  const Vector d = v - w;
  return F_v - F_w <= grad_w.dot(d) + l / 2.0 * d.squaredNorm() + 1e-9;
}

// ---------------------------------------------------------------------------
// Offline optimum for tiny instances

struct OfflineSolution {
  double U_sum = 0.0;
  std::vector<std::vector<int>> beta;  // [t][n]
};

/// Exhaustive minimum of sum_t U_t(|B_t|) subject to sum_t beta E <= E_bar_n,
/// with exogenous energies E[t][n] and at least one device per round.
/// Returns nullopt when no feasible schedule exists. Limited to N <= 4, T <= 6.
inline std::optional<OfflineSolution> offline_optimum(
    const std::vector<std::vector<double>>& E, const std::vector<double>& budget,
    const std::function<double(int t, int k)>& penalty) {
  const int T = static_cast<int>(E.size());
  const int N = static_cast<int>(budget.size());
  if (N > 4 || T > 6) throw Error(Errc::too_many_devices, std::to_string(N), "N <= 4, T <= 6");
  for (const auto& row : E)
    if (static_cast<int>(row.size()) != N)
      throw Error(Errc::invalid_argument, "E", "row length must equal N");

  std::optional<OfflineSolution> best;
  std::vector<int> masks(static_cast<std::size_t>(T), 0);
  std::vector<double> spent(static_cast<std::size_t>(N), 0.0);

  std::function<void(int, double)> search = [&](int t, double acc) {
    if (best && acc >= best->U_sum) return;
    if (t == T) {
      OfflineSolution sol;
      sol.U_sum = acc;
      for (int m : masks) {
        std::vector<int> row(static_cast<std::size_t>(N));
        for (int n = 0; n < N; ++n) row[static_cast<std::size_t>(n)] = (m >> n) & 1;
        sol.beta.push_back(std::move(row));
      }
      best = std::move(sol);
      return;
    }
    for (int mask = 1; mask < (1 << N); ++mask) {
      bool ok = true;
      for (int n = 0; n < N && ok; ++n)
        if ((mask >> n) & 1)
          ok = spent[static_cast<std::size_t>(n)] + E[static_cast<std::size_t>(t)][static_cast<std::size_t>(n)] <=
               budget[static_cast<std::size_t>(n)] + 1e-12;
      if (!ok) continue;
      for (int n = 0; n < N; ++n)
        if ((mask >> n) & 1) spent[static_cast<std::size_t>(n)] += E[static_cast<std::size_t>(t)][static_cast<std::size_t>(n)];
      masks[static_cast<std::size_t>(t)] = mask;
      search(t + 1, acc + penalty(t + 1, std::popcount(static_cast<unsigned>(mask))));
      for (int n = 0; n < N; ++n)
        if ((mask >> n) & 1) spent[static_cast<std::size_t>(n)] -= E[static_cast<std::size_t>(t)][static_cast<std::size_t>(n)];
    }
  };
  search(0, 0.0);
  return best;
}

}  // namespace oafel
