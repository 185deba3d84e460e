#pragma once

#include "oafel/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <tuple>
#include <type_traits>
#include <vector>

namespace oafel {

using IndexList = std::vector<std::size_t>;

/// Samples stored column-wise: `features` is (feature_dim x count).
struct Dataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int class_count = 1;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features.rows()); }
};

struct PartitionMode {
  enum class Kind { iid, non_iid };
  Kind kind = Kind::iid;
  int labels_per_device = 0;  // m, non_iid only

  static PartitionMode iid() { return {}; }
  static PartitionMode non_iid(int m) { return {Kind::non_iid, m}; }
};

struct Partition {
  std::vector<IndexList> shards;
  PartitionMode mode;
};

struct LocalUpdateResult {
  GradientVector effective_gradient;
  double norm_sq = 0.0;
  std::size_t samples_used = 0;
};

// ---------------------------------------------------------------------------
// Models

/// Any differentiable per-sample loss usable by the local trainer.
/// `accumulate_gradient` adds the SUM of per-sample gradients over `batch`
/// into `grad` and returns the summed loss.
template <class M>
concept LossModel = requires(const M& m, const ModelVector& w, const Dataset& d,
                             std::span<const std::size_t> batch, GradientVector& grad) {
  { m.dimension() } -> std::convertible_to<std::size_t>;
  { m.accumulate_gradient(w, d, batch, grad) } -> std::convertible_to<double>;
  { m.loss(w, d, batch) } -> std::convertible_to<double>;
};

template <class M>
concept Classifier = LossModel<M> && requires(const M& m, const ModelVector& w, const Dataset& d,
                                              std::span<const std::size_t> batch) {
  { m.accuracy(w, d, batch) } -> std::convertible_to<double>;
};

/// f(w, x) = 1/2 (w - x)^T A (w - x) with a shared symmetric positive-definite A.
class QuadraticModel {
 public:
  explicit QuadraticModel(Eigen::MatrixXd curvature) : A_(std::move(curvature)) {
    if (A_.rows() != A_.cols() || A_.rows() == 0)
      throw Error(Errc::invalid_argument, "curvature", "must be square and non-empty");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A_, Eigen::EigenvaluesOnly);
    mu_ = eig.eigenvalues().minCoeff();
    l_ = eig.eigenvalues().maxCoeff();
    if (!(mu_ > 0.0)) throw Error(Errc::invalid_argument, "curvature", "must be positive definite");
  }

  static QuadraticModel identity(std::size_t s) {
    return QuadraticModel(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(s),
                                                    static_cast<Eigen::Index>(s)));
  }

  std::size_t dimension() const { return static_cast<std::size_t>(A_.rows()); }
  const Eigen::MatrixXd& curvature() const { return A_; }
  double smoothness() const { return l_; }
  double strong_convexity() const { return mu_; }

  double accumulate_gradient(const ModelVector& w, const Dataset& d,
                             std::span<const std::size_t> batch, GradientVector& grad) const {
    double total = 0.0;
    Vector r(w.size());
    for (std::size_t i : batch) {
      r = w - d.features.col(static_cast<Eigen::Index>(i));
      Vector Ar = A_ * r;
      grad += Ar;
      total += 0.5 * r.dot(Ar);
    }
    return total;
  }

  double loss(const ModelVector& w, const Dataset& d, std::span<const std::size_t> batch) const {
    if (batch.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i : batch) {
      Vector r = w - d.features.col(static_cast<Eigen::Index>(i));
      total += 0.5 * r.dot(A_ * r);
    }
    return total / static_cast<double>(batch.size());
  }

 private:
  Eigen::MatrixXd A_;
  double mu_ = 0.0;
  double l_ = 0.0;
};

/// Two-layer perceptron: input -> hidden (ReLU) -> softmax, cross-entropy loss.
/// Parameters are packed as [W1 (hidden x input, column-major), b1, W2
/// (classes x hidden, column-major), b2].
class MlpModel {
 public:
  MlpModel(int input = 784, int hidden = 64, int classes = 10)
      : in_(input), hid_(hidden), out_(classes) {
    if (input < 1 || hidden < 1 || classes < 2)
      throw Error(Errc::invalid_argument, "mlp", "bad layer sizes");
  }

  int input_size() const { return in_; }
  int hidden_size() const { return hid_; }
  int class_count() const { return out_; }

 private:
  template <class Vec>
  auto unpack(Vec& w) const {
    using Scalar = std::remove_reference_t<decltype(w[0])>;
    using MatMap = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const Eigen::MatrixXd,
                                                 Eigen::MatrixXd>>;
    using VecMap = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const Eigen::VectorXd,
                                                 Eigen::VectorXd>>;
    auto* p = w.data();
    MatMap W1(p, hid_, in_);
    p += static_cast<std::ptrdiff_t>(in_) * hid_;
    VecMap b1(p, hid_);
    p += hid_;
    MatMap W2(p, out_, hid_);
    p += static_cast<std::ptrdiff_t>(hid_) * out_;
    VecMap b2(p, out_);
    return std::tuple{W1, b1, W2, b2};
  }

 public:

  std::size_t dimension() const {
    return static_cast<std::size_t>(in_) * hid_ + hid_ + static_cast<std::size_t>(hid_) * out_ +
           out_;
  }

  /// Uniform Glorot initialisation, zero biases.
  ModelVector initial_weights(RngStream& rng) const {
    ModelVector w = ModelVector::Zero(static_cast<Eigen::Index>(dimension()));
    const double r1 = std::sqrt(6.0 / (in_ + hid_));
    const double r2 = std::sqrt(6.0 / (hid_ + out_));
    const Eigen::Index n1 = static_cast<Eigen::Index>(in_) * hid_;
    for (Eigen::Index i = 0; i < n1; ++i) w[i] = rng.uniform(-r1, r1);
    const Eigen::Index off2 = n1 + hid_;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(hid_) * out_; ++i)
      w[off2 + i] = rng.uniform(-r2, r2);
    return w;
  }

  double accumulate_gradient(const ModelVector& w, const Dataset& d,
                             std::span<const std::size_t> batch, GradientVector& grad) const {
    check(w, d);
    auto [W1, b1, W2, b2] = unpack(w);
    auto [gW1, gb1, gW2, gb2] = unpack(grad);
    double total = 0.0;
    for (std::size_t start = 0; start < batch.size(); start += kChunk) {
      const std::size_t len = std::min(kChunk, batch.size() - start);
      auto chunk = batch.subspan(start, len);
      Eigen::MatrixXd X = gather(d, chunk);
      Eigen::MatrixXd H = (W1 * X).colwise() + b1;
      H = H.cwiseMax(0.0);
      Eigen::MatrixXd P = (W2 * H).colwise() + b2;
      for (Eigen::Index c = 0; c < P.cols(); ++c) {
        const int y = d.labels[chunk[static_cast<std::size_t>(c)]];
        total += softmax_inplace(P.col(c), y);
        P(y, c) -= 1.0;
      }
      gW2.noalias() += P * H.transpose();
      gb2 += P.rowwise().sum();
      Eigen::MatrixXd dH = W2.transpose() * P;
      dH = dH.cwiseProduct((H.array() > 0.0).cast<double>().matrix());
      gW1.noalias() += dH * X.transpose();
      gb1 += dH.rowwise().sum();
    }
    return total;
  }

  double loss(const ModelVector& w, const Dataset& d, std::span<const std::size_t> batch) const {
    if (batch.empty()) return 0.0;
    double total = 0.0;
    forward_each(w, d, batch, [&](Eigen::Ref<Eigen::VectorXd> logits, int y) {
      total += softmax_inplace(logits, y);
    });
    return total / static_cast<double>(batch.size());
  }

  double accuracy(const ModelVector& w, const Dataset& d,
                  std::span<const std::size_t> batch) const {
    if (batch.empty()) return 0.0;
    std::size_t hits = 0;
    forward_each(w, d, batch, [&](Eigen::Ref<Eigen::VectorXd> logits, int y) {
      Eigen::Index arg = 0;
      logits.maxCoeff(&arg);
      if (arg == y) ++hits;
    });
    return static_cast<double>(hits) / static_cast<double>(batch.size());
  }

 private:
  static constexpr std::size_t kChunk = 256;


  void check(const ModelVector& w, const Dataset& d) const {
    if (static_cast<std::size_t>(w.size()) != dimension())
      throw Error(Errc::invalid_argument, "w", "dimension mismatch");
    if (d.features.rows() != in_)
      throw Error(Errc::invalid_argument, "dataset", "feature dimension mismatch");
  }

  static Eigen::MatrixXd gather(const Dataset& d, std::span<const std::size_t> idx) {
    Eigen::MatrixXd X(d.features.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j)
      X.col(static_cast<Eigen::Index>(j)) = d.features.col(static_cast<Eigen::Index>(idx[j]));
    return X;
  }

  /// Turns logits into probabilities; returns -log p_y.
  static double softmax_inplace(Eigen::Ref<Eigen::VectorXd> z, int y) {
    const double m = z.maxCoeff();
    z = (z.array() - m).exp();
    const double sum = z.sum();
    const double ly = std::log(z[y]) - std::log(sum);
    z /= sum;
    return -ly;
  }

  template <class Fn>
  void forward_each(const ModelVector& w, const Dataset& d, std::span<const std::size_t> batch,
                    Fn&& fn) const {
    check(w, d);
    auto [W1, b1, W2, b2] = unpack(w);
    for (std::size_t start = 0; start < batch.size(); start += kChunk) {
      const std::size_t len = std::min(kChunk, batch.size() - start);
      auto chunk = batch.subspan(start, len);
      Eigen::MatrixXd X = gather(d, chunk);
      Eigen::MatrixXd H = ((W1 * X).colwise() + b1).cwiseMax(0.0);
      Eigen::MatrixXd Z = (W2 * H).colwise() + b2;
      for (Eigen::Index c = 0; c < Z.cols(); ++c)
        fn(Z.col(c), d.labels[chunk[static_cast<std::size_t>(c)]]);
    }
  }

  int in_, hid_, out_;
};

// ---------------------------------------------------------------------------
// Partitioning

namespace detail {

inline std::set<int> labels_of(const Dataset& data, const IndexList& idx) {
  std::set<int> out;
  for (std::size_t i : idx) out.insert(data.labels[i]);
  return out;
}

// Assigns `per_device` pieces to each device so that every device's label
// union has at most `cap` labels. Depth-first over pieces in their given order.
inline bool assign_pieces(const std::vector<std::set<int>>& piece_labels, int per_device, int cap,
                          std::vector<bool>& used, std::vector<std::vector<std::size_t>>& out,
                          std::size_t device, std::set<int> current, long& budget) {
  if (device == out.size()) return true;
  if (static_cast<int>(out[device].size()) == per_device)
    return assign_pieces(piece_labels, per_device, cap, used, out, device + 1, {}, budget);
  for (std::size_t p = 0; p < piece_labels.size(); ++p) {
    if (used[p]) continue;
    if (--budget < 0) return false;
    std::set<int> merged = current;
    merged.insert(piece_labels[p].begin(), piece_labels[p].end());
    if (static_cast<int>(merged.size()) > cap) continue;
    used[p] = true;
    out[device].push_back(p);
    if (assign_pieces(piece_labels, per_device, cap, used, out, device, merged, budget)) return true;
    out[device].pop_back();
    used[p] = false;
    // Empty devices are interchangeable: the first free piece is pinned to
    // the first empty device.
    if (out[device].empty()) return false;
  }
  return false;
}

}  // namespace detail

/// Splits `data` into N disjoint equal shards.
///
/// iid: uniform random permutation cut into N pieces.
/// non_iid(m): samples sorted by label are cut into N*m contiguous pieces and
/// each device receives m pieces whose label union has at most m labels.
inline Partition partition_dataset(const Dataset& data, int N, PartitionMode mode, RngStream& rng) {
  if (N < 1) throw Error(Errc::invalid_argument, "N", "must be >= 1");
  const std::size_t total = data.size();
  if (total == 0 || total % static_cast<std::size_t>(N) != 0)
    throw Error(Errc::indivisible_dataset, std::to_string(total),
                "dataset size must be divisible by N");
  const std::size_t per_shard = total / static_cast<std::size_t>(N);

  Partition part;
  part.mode = mode;
  part.shards.resize(static_cast<std::size_t>(N));

  if (mode.kind == PartitionMode::Kind::iid) {
    IndexList perm(total);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    for (std::size_t n = 0; n < part.shards.size(); ++n)
      part.shards[n].assign(perm.begin() + static_cast<std::ptrdiff_t>(n * per_shard),
                            perm.begin() + static_cast<std::ptrdiff_t>((n + 1) * per_shard));
    return part;
  }

  const int m = mode.labels_per_device;
  if (m < 1) throw Error(Errc::invalid_argument, "m", "must be >= 1");
  const std::size_t pieces = static_cast<std::size_t>(N) * static_cast<std::size_t>(m);
  if (total % pieces != 0)
    throw Error(Errc::indivisible_dataset, std::to_string(total),
                "dataset size must be divisible by N*m");
  const std::size_t piece_size = total / pieces;

  IndexList sorted(total);
  std::iota(sorted.begin(), sorted.end(), std::size_t{0});
  std::stable_sort(sorted.begin(), sorted.end(),
                   [&](std::size_t a, std::size_t b) { return data.labels[a] < data.labels[b]; });

  std::vector<IndexList> piece(pieces);
  std::vector<std::set<int>> piece_labels(pieces);
  for (std::size_t p = 0; p < pieces; ++p) {
    piece[p].assign(sorted.begin() + static_cast<std::ptrdiff_t>(p * piece_size),
                    sorted.begin() + static_cast<std::ptrdiff_t>((p + 1) * piece_size));
    piece_labels[p] = detail::labels_of(data, piece[p]);
    if (static_cast<int>(piece_labels[p].size()) > m)
      throw Error(Errc::infeasible_label_assignment, std::to_string(m),
                  "a label-sorted piece already spans more than m labels");
  }

  std::vector<std::size_t> order(pieces);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::set<int>> shuffled_labels(pieces);
  for (std::size_t p = 0; p < pieces; ++p) shuffled_labels[p] = piece_labels[order[p]];

  std::vector<bool> used(pieces, false);
  std::vector<std::vector<std::size_t>> chosen(static_cast<std::size_t>(N));
  long budget = 2'000'000;
  if (!detail::assign_pieces(shuffled_labels, m, m, used, chosen, 0, {}, budget))
    throw Error(Errc::infeasible_label_assignment, std::to_string(m),
                "label multiplicities cannot support the shard cut");

  for (std::size_t n = 0; n < chosen.size(); ++n)
    for (std::size_t p : chosen[n]) {
      const IndexList& src = piece[order[p]];
      part.shards[n].insert(part.shards[n].end(), src.begin(), src.end());
    }
  return part;
}

// ---------------------------------------------------------------------------
// Local training

/// Uniform mini-batch of `size` shard entries drawn without replacement.
inline IndexList draw_batch(const IndexList& shard, std::size_t size, RngStream& rng) {
  if (size > shard.size())
    throw Error(Errc::batch_too_large, std::to_string(size),
                "batch exceeds shard size " + std::to_string(shard.size()));
  IndexList out;
  out.reserve(size);
  std::sample(shard.begin(), shard.end(), std::back_inserter(out), size, rng.engine());
  return out;
}

/// Mean gradient over `batch`.
template <LossModel M>
GradientVector batch_gradient(const M& model, const ModelVector& w, const Dataset& data,
                              std::span<const std::size_t> batch) {
  GradientVector g = GradientVector::Zero(w.size());
  model.accumulate_gradient(w, data, batch, g);
  if (!batch.empty()) g /= static_cast<double>(batch.size());
  return g;
}

/// One stochastic gradient over a uniformly drawn mini-batch of L_b samples.
template <LossModel M>
LocalUpdateResult local_gradient(const M& model, const ModelVector& w, const Dataset& data,
                                 const IndexList& shard, int L_b, RngStream& rng) {
  if (L_b < 1) throw Error(Errc::invalid_argument, "L_b", "must be >= 1");
  IndexList batch = draw_batch(shard, static_cast<std::size_t>(L_b), rng);
  LocalUpdateResult r;
  r.effective_gradient = batch_gradient(model, w, data, batch);
  r.norm_sq = r.effective_gradient.squaredNorm();
  r.samples_used = batch.size();
  return r;
}

/// K_local SGD steps with (heavy-ball) momentum starting from w. The
/// effective gradient is the accumulated step direction, i.e.
/// (w - w_final) / eta, so the server-side update is unchanged.
template <LossModel M>
LocalUpdateResult local_update_multi(const M& model, const ModelVector& w, const Dataset& data,
                                     const IndexList& shard, int K_local, int L_b, double eta,
                                     double momentum, RngStream& rng) {
  if (K_local < 1) throw Error(Errc::invalid_argument, "K_local", "must be >= 1");
  if (K_local == 1 && momentum == 0.0) return local_gradient(model, w, data, shard, L_b, rng);

  ModelVector local = w;
  GradientVector velocity = GradientVector::Zero(w.size());
  GradientVector direction = GradientVector::Zero(w.size());
  std::size_t used = 0;
  for (int k = 0; k < K_local; ++k) {
    LocalUpdateResult step = local_gradient(model, local, data, shard, L_b, rng);
    velocity = momentum * velocity + step.effective_gradient;
    direction += velocity;
    local -= eta * velocity;
    used += step.samples_used;
  }
  LocalUpdateResult r;
  r.effective_gradient = std::move(direction);
  r.norm_sq = r.effective_gradient.squaredNorm();
  r.samples_used = used;
  return r;
}

template <LossModel M>
GradientVector local_full_gradient(const M& model, const ModelVector& w, const Dataset& data,
                                   const IndexList& shard) {
  return batch_gradient(model, w, data, shard);
}

/// (1/N) sum_n of each shard's full gradient.
template <LossModel M>
GradientVector global_full_gradient(const M& model, const std::vector<IndexList>& shards,
                                    const Dataset& data, const ModelVector& w) {
  GradientVector g = GradientVector::Zero(w.size());
  for (const auto& shard : shards) g += local_full_gradient(model, w, data, shard);
  if (!shards.empty()) g /= static_cast<double>(shards.size());
  return g;
}

/// Mean loss over the union of all shards, weighting each shard equally.
template <LossModel M>
double global_loss(const M& model, const std::vector<IndexList>& shards, const Dataset& data,
                   const ModelVector& w) {
  double total = 0.0;
  for (const auto& shard : shards) total += model.loss(w, data, shard);
  return shards.empty() ? 0.0 : total / static_cast<double>(shards.size());
}

// ---------------------------------------------------------------------------
// Smoothness and variance estimators

/// Gradients reported in one round together with the model they were
/// computed at. Devices that did not report hold std::nullopt.
struct GradientSnapshot {
  ModelVector w;
  std::vector<std::optional<GradientVector>> grads;
};

/// Running maximum of ||g_{n,t} - g_{n,t-1}|| / ||w_{t-1} - w_{t-2}||.
class SmoothnessEstimator {
 public:
  void observe(const GradientSnapshot& snap) {
    if (prev_) {
      const double dw = (snap.w - prev_->w).norm();
      if (dw >= 1e-12) {
        const std::size_t n_dev = std::min(snap.grads.size(), prev_->grads.size());
        for (std::size_t n = 0; n < n_dev; ++n) {
          if (!snap.grads[n] || !prev_->grads[n]) continue;
          estimate_ = std::max(estimate_, (*snap.grads[n] - *prev_->grads[n]).norm() / dw);
        }
      }
    }
    prev_ = snap;
    ++rounds_;
  }

  std::size_t rounds() const { return rounds_; }
  double estimate() const { return estimate_; }

 private:
  std::optional<GradientSnapshot> prev_;
  std::size_t rounds_ = 0;
  double estimate_ = 0.0;
};

inline double estimate_smoothness(std::span<const GradientSnapshot> history) {
  if (history.size() < 2)
    throw Error(Errc::insufficient_history, std::to_string(history.size()),
                "need at least two rounds");
  SmoothnessEstimator est;
  for (const auto& snap : history) est.observe(snap);
  return est.estimate();
}

/// Empirical per-sample gradient variance at w, over `probe_count` samples
/// drawn uniformly (with replacement) from the shard.
template <LossModel M>
double estimate_variance_bound(const M& model, const Dataset& data, const IndexList& shard,
                               const ModelVector& w, int probe_count, RngStream& rng) {
  if (probe_count < 2) throw Error(Errc::invalid_argument, "probe_count", "must be >= 2");
  if (shard.empty()) throw Error(Errc::invalid_argument, "shard", "must be non-empty");
  std::uniform_int_distribution<std::size_t> pick(0, shard.size() - 1);
  std::vector<GradientVector> grads;
  grads.reserve(static_cast<std::size_t>(probe_count));
  GradientVector mean = GradientVector::Zero(w.size());
  for (int i = 0; i < probe_count; ++i) {
    const std::size_t idx = shard[pick(rng.engine())];
    GradientVector g = GradientVector::Zero(w.size());
    model.accumulate_gradient(w, data, std::span<const std::size_t>(&idx, 1), g);
    mean += g;
    grads.push_back(std::move(g));
  }
  mean /= static_cast<double>(probe_count);
  double acc = 0.0;
  for (const auto& g : grads) acc += (g - mean).squaredNorm();
  return acc / static_cast<double>(probe_count);
}

}  // namespace oafel
