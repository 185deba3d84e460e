#pragma once

// Experiment plumbing: dataset ingestion, the synthetic quadratic fixture,
// experiment specs, multi-seed runs and metric files.

#include "oafel/analysis.hpp"
#include "oafel/core.hpp"
#include "oafel/learner.hpp"
#include "oafel/parallel.hpp"
#include "oafel/scheduler.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace oafel {

// ---------------------------------------------------------------------------
// IDX files

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, path, "cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off,
                          const std::string& path) {
  if (off + 4 > b.size()) throw Error(Errc::truncated_file, path, "header too short");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

}  // namespace detail

/// Big-endian IDX image/label pair; pixels scaled to [0, 1].
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);

  if (detail::be32(img, 0, images_path) != 0x00000803u)
    throw Error(Errc::bad_magic, images_path, "expected 0x00000803");
  if (detail::be32(lab, 0, labels_path) != 0x00000801u)
    throw Error(Errc::bad_magic, labels_path, "expected 0x00000801");

  const std::size_t count = detail::be32(img, 4, images_path);
  const std::size_t rows = detail::be32(img, 8, images_path);
  const std::size_t cols = detail::be32(img, 12, images_path);
  const std::size_t label_count = detail::be32(lab, 4, labels_path);
  if (count != label_count)
    throw Error(Errc::count_mismatch, images_path,
                std::to_string(count) + " images vs " + std::to_string(label_count) + " labels");

  const std::size_t dim = rows * cols;
  if (img.size() < 16 + count * dim)
    throw Error(Errc::truncated_file, images_path, "image data ends early");
  if (lab.size() < 8 + count) throw Error(Errc::truncated_file, labels_path, "label data ends early");

  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(count));
  d.labels.resize(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* px = img.data() + 16 + i * dim;
    for (std::size_t j = 0; j < dim; ++j)
      d.features(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = px[j] / 255.0;
    d.labels[i] = lab[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.class_count = std::max(10, max_label + 1);
  return d;
}

/// First `count` samples (0 keeps everything).
inline Dataset head(const Dataset& d, std::size_t count) {
  if (count == 0 || count >= d.size()) return d;
  Dataset out;
  out.features = d.features.leftCols(static_cast<Eigen::Index>(count));
  out.labels.assign(d.labels.begin(), d.labels.begin() + static_cast<std::ptrdiff_t>(count));
  out.class_count = d.class_count;
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic quadratic problem

struct QuadraticSpec {
  int N = 4;
  std::size_t s = 10;
  int samples_per_device = 200;
  double center_scale = 1.0;   // spread of the common center around the origin
  double center_spread = 0.0;  // spread of device means around the common center
  double noise_spread = 1.0;   // spread of samples around their device mean
  double mu = 1.0;             // smallest curvature eigenvalue
  double l = 4.0;              // largest curvature eigenvalue
  std::optional<Eigen::MatrixXd> curvature;  // overrides mu / l when set
};

/// Shards hold samples x with per-sample loss 1/2 (w - x)^T A (w - x).
/// Each device's samples are re-centred so its empirical mean is exactly its
/// drawn center; with center_spread = 0 every device shares the same mean.
struct QuadraticFixture {
  std::shared_ptr<QuadraticModel> model;
  Dataset data;
  std::vector<IndexList> shards;
  double l = 0.0;
  double mu = 0.0;
  double G_sq = 0.0;                   // max_n tr(A Sigma_n A)
  std::vector<double> device_variance; // tr(A Sigma_n A)
  ModelVector w_star;
  double F_star = 0.0;

  double gap(const ModelVector& w) const { return global_loss(*model, shards, data, w) - F_star; }
};

inline QuadraticFixture synth_quadratic(const QuadraticSpec& spec, RngStream& rng) {
  if (spec.s < 1) throw Error(Errc::invalid_argument, "s", "must be >= 1");
  if (spec.N < 1) throw Error(Errc::invalid_argument, "N", "must be >= 1");
  if (spec.samples_per_device < 2)
    throw Error(Errc::invalid_argument, "samples_per_device", "must be >= 2");
  const auto s = static_cast<Eigen::Index>(spec.s);
  const int D = spec.samples_per_device;

  Eigen::MatrixXd A;
  if (spec.curvature) {
    A = *spec.curvature;
  } else {
    if (!(spec.mu > 0.0) || spec.l < spec.mu)
      throw Error(Errc::invalid_argument, "mu", "need 0 < mu <= l");
    Eigen::MatrixXd G(s, s);
    for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    Eigen::MatrixXd Q = qr.householderQ();
    Eigen::VectorXd lam(s);
    for (Eigen::Index i = 0; i < s; ++i)
      lam[i] = s == 1 ? spec.l : spec.mu + (spec.l - spec.mu) * static_cast<double>(i) / (s - 1);
    A = Q * lam.asDiagonal() * Q.transpose();
    A = 0.5 * (A + A.transpose());
  }
  if (A.rows() != s) throw Error(Errc::invalid_argument, "curvature", "dimension mismatch");

  QuadraticFixture f;
  f.model = std::make_shared<QuadraticModel>(A);
  f.l = f.model->smoothness();
  f.mu = f.model->strong_convexity();
  f.data.class_count = 1;
  f.data.features.resize(s, static_cast<Eigen::Index>(spec.N) * D);
  f.data.labels.assign(static_cast<std::size_t>(spec.N) * D, 0);

  Vector center(s);
  for (Eigen::Index i = 0; i < s; ++i) center[i] = spec.center_scale * rng.normal();

  for (int n = 0; n < spec.N; ++n) {
    Vector c_n = center;
    for (Eigen::Index i = 0; i < s; ++i) c_n[i] += spec.center_spread * rng.normal();
    Eigen::MatrixXd X(s, D);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = spec.noise_spread * rng.normal();
    const Vector m = X.rowwise().mean();
    X.colwise() -= m;
    // Sigma_n (population covariance of the device samples)
    const Eigen::MatrixXd Sigma = X * X.transpose() / static_cast<double>(D);
    f.device_variance.push_back((A * Sigma * A).trace());
    X.colwise() += c_n;

    IndexList shard;
    for (int j = 0; j < D; ++j) {
      const auto col = static_cast<Eigen::Index>(n) * D + j;
      f.data.features.col(col) = X.col(j);
      shard.push_back(static_cast<std::size_t>(col));
    }
    f.shards.push_back(std::move(shard));
  }
  f.G_sq = *std::max_element(f.device_variance.begin(), f.device_variance.end());
  f.w_star = f.data.features.rowwise().mean();
  f.F_star = global_loss(*f.model, f.shards, f.data, f.w_star);
  return f;
}

// ---------------------------------------------------------------------------
// Experiment definitions

struct ExperimentSpec {
  nlohmann::json raw;  // validated key/value document
  ValidatedConfig config;
  std::string dataset = "quadratic";  // quadratic | mnist

  // mnist
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t train_subset = 0;
  std::size_t test_subset = 0;
  int hidden = 64;

  QuadraticSpec quadratic;
  PartitionMode partition = PartitionMode::iid();
  SimulationOptions options;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "out";
  int eval_every = 0;  // 0 picks every round for T <= 500, else every 10
  int variance_probes = 256;
};

namespace detail {

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? p : (base / path).string();
}

inline std::string opt_string(const nlohmann::json& doc, const char* key, std::string fallback) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw Error(Errc::invalid_value, key, "must be a string");
  return it->get<std::string>();
}

}  // namespace detail

/// Builds a spec from the flat key/value document. Relative dataset paths
/// resolve against `base_dir`.
inline ExperimentSpec load_experiment_spec(const nlohmann::json& doc,
                                           const std::filesystem::path& base_dir = {}) {
  using detail::opt_string;
  ExperimentSpec spec;
  spec.raw = doc;
  spec.dataset = opt_string(doc, "dataset", "quadratic");
  if (spec.dataset != "quadratic" && spec.dataset != "mnist")
    throw Error(Errc::invalid_value, "dataset", "expected quadratic|mnist");

  // The quadratic's dimension comes from the fixture, so default s for validation.
  spec.config = validate_config(doc);
  const Hyperparams& hp = spec.config.hp;

  spec.options.policy = parse_policy(opt_string(doc, "policy", "dynamic"));
  const std::string mode = opt_string(doc, "sigma_mode", "paper");
  if (mode == "paper") spec.options.power_mode = PowerMode::paper_literal;
  else if (mode == "snr_consistent") spec.options.power_mode = PowerMode::snr_consistent;
  else throw Error(Errc::invalid_value, "sigma_mode", "expected paper|snr_consistent");
  const std::string est = opt_string(doc, "estimator", "est_p");
  if (est == "est_p") spec.options.estimator = NormEstimator::est_p;
  else if (est == "est_c") spec.options.estimator = NormEstimator::est_c;
  else throw Error(Errc::invalid_value, "estimator", "expected est_p|est_c");
  spec.options.obs_error = detail::optional_real(doc, "obs_error", 0.0);
  if (spec.options.obs_error < 0.0 || spec.options.obs_error >= 1.0)
    throw Error(Errc::invalid_value, "obs_error", "must lie in [0, 1)");
  spec.options.channel_scale = detail::optional_real(doc, "channel_scale", 1.0);
  if (!(spec.options.channel_scale > 0.0))
    throw Error(Errc::invalid_value, "channel_scale", "must be > 0");
  if (auto it = doc.find("reschedule"); it != doc.end() && !it->is_null()) {
    if (!it->is_boolean()) throw Error(Errc::invalid_value, "reschedule", "must be a boolean");
    spec.options.reschedule = it->get<bool>();
  }
  spec.eval_every = detail::optional_count(doc, "eval_every", 0);
  if (spec.eval_every < 0) throw Error(Errc::invalid_value, "eval_every", "must be >= 0");
  spec.variance_probes = detail::optional_count(doc, "variance_probes", 256);

  const std::string part = opt_string(doc, "partition", "iid");
  if (part == "iid") {
    spec.partition = PartitionMode::iid();
  } else if (part == "non_iid") {
    const int m = detail::optional_count(doc, "m", 1);
    if (m < 1) throw Error(Errc::invalid_value, "m", "must be >= 1");
    spec.partition = PartitionMode::non_iid(m);
  } else {
    throw Error(Errc::invalid_value, "partition", "expected iid|non_iid");
  }

  if (auto it = doc.find("seeds"); it != doc.end() && !it->is_null()) {
    if (!it->is_array() || it->empty()) throw Error(Errc::invalid_value, "seeds", "non-empty array");
    spec.seeds.clear();
    for (const auto& s : *it) {
      if (!s.is_number_integer() || s.get<long long>() < 0)
        throw Error(Errc::invalid_value, "seeds", "entries must be non-negative integers");
      spec.seeds.push_back(s.get<std::uint64_t>());
    }
  } else if (auto jt = doc.find("seed"); jt != doc.end() && !jt->is_null()) {
    if (!jt->is_number_integer() || jt->get<long long>() < 0)
      throw Error(Errc::invalid_value, "seed", "must be a non-negative integer");
    spec.seeds = {jt->get<std::uint64_t>()};
  }
  spec.out_dir = opt_string(doc, "out", "out");

  if (spec.dataset == "quadratic") {
    QuadraticSpec& q = spec.quadratic;
    q.N = hp.N;
    q.s = hp.s != 0 ? hp.s : 10;
    q.samples_per_device = detail::optional_count(doc, "samples_per_device", 200);
    q.center_spread = detail::optional_real(doc, "center_spread", 0.0);
    q.noise_spread = detail::optional_real(doc, "noise_spread", 1.0);
    q.mu = detail::optional_real(doc, "curvature_min", 1.0);
    q.l = detail::optional_real(doc, "curvature_max", 4.0);
    if (hp.L_b > q.samples_per_device)
      throw Error(Errc::batch_too_large, std::to_string(hp.L_b), "L_b exceeds samples_per_device");
  } else {
    const std::string dir = opt_string(doc, "mnist_dir", "");
    auto in_dir = [&](const char* key, const char* file) {
      std::string p = opt_string(doc, key, dir.empty() ? std::string() : dir + "/" + file);
      if (p.empty()) throw Error(Errc::missing_key, key);
      return detail::resolve(base_dir, p);
    };
    spec.train_images = in_dir("train_images", "train-images-idx3-ubyte");
    spec.train_labels = in_dir("train_labels", "train-labels-idx1-ubyte");
    spec.test_images = in_dir("test_images", "t10k-images-idx3-ubyte");
    spec.test_labels = in_dir("test_labels", "t10k-labels-idx1-ubyte");
    spec.train_subset = static_cast<std::size_t>(detail::optional_count(doc, "train_subset", 0));
    spec.test_subset = static_cast<std::size_t>(detail::optional_count(doc, "test_subset", 0));
    spec.hidden = detail::optional_count(doc, "hidden", 64);
  }
  return spec;
}

inline ExperimentSpec load_experiment_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, path, "cannot open");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::invalid_value, path, e.what());
  }
  return load_experiment_spec(doc, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Runs and reports

struct BoundReport {
  Theorem2Constants constants;
  double V = 0.0;
  double U_sum = 0.0;               // sum of U_t at the chosen k*, this run
  std::vector<double> energy_cap;   // per device
  std::vector<double> spent;        // per device
  std::vector<double> budget;       // per device
  std::vector<bool> cap_violated;
  double min_slack = 0.0;           // min_n (cap_n - spent_n)
  double cap_slack = 0.0;           // max_n (cap_n - E_bar_n) / E_bar_n
  double loss_gap = 0.0;            // allowed excess of sum U over the offline optimum
  QueueIdentityAudit queues;
  double ledger_error = 0.0;

  bool any_violation() const {
    for (bool v : cap_violated)
      if (v) return true;
    return false;
  }
};

inline BoundReport bound_report(std::span<const RoundTrace> trace, const EnergyLedger& ledger,
                                const ValidatedConfig& cfg) {
  const Hyperparams& hp = cfg.hp;
  std::vector<double> share;
  for (const auto& d : cfg.devices) share.push_back(d.E_bar_n / hp.T);
  BoundReport r;
  r.constants = theorem2_constants(trace, share, hp.T);
  r.V = hp.V;
  r.U_sum = penalty_sum(trace);
  r.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < cfg.devices.size(); ++n) {
    const double Eb = cfg.devices[n].E_bar_n;
    const double cap = theorem2_energy_bound(r.constants, hp.V, r.U_sum, hp.T, Eb);
    r.energy_cap.push_back(cap);
    r.spent.push_back(ledger.spent(static_cast<int>(n)));
    r.budget.push_back(Eb);
    r.cap_violated.push_back(r.spent.back() > cap);
    r.min_slack = std::min(r.min_slack, cap - r.spent.back());
    r.cap_slack = std::max(r.cap_slack, (cap - Eb) / Eb);
  }
  r.loss_gap = theorem2_loss_gap(r.constants, hp.V, hp.T);
  r.queues = audit_queue_identities(trace, share);
  r.ledger_error = ledger_discrepancy(ledger, trace);
  return r;
}

struct RunResult {
  std::uint64_t seed = 0;
  ValidatedConfig config;  // with s bound and any estimated constants filled in
  SimulationOptions options;
  std::vector<RoundTrace> trace;
  EnergyLedger ledger;
  BoundReport bounds;
  double smoothness_estimate = 0.0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double final_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> final_gap;  // F(w_T) - F*, quadratic only
  double scheduled_fraction = 0.0;  // scheduled device-rounds / (N T)
};

namespace detail {

template <LossModel M>
RunResult simulate(const M& model, const Dataset& train, std::vector<IndexList> shards,
                   const Dataset* test, ValidatedConfig cfg, SimulationOptions opt,
                   ModelVector w0) {
  Simulation<M> sim(model, train, std::move(shards), test, std::move(cfg), opt, std::move(w0));
  sim.initialize();
  RunResult r;
  r.seed = opt.seed;
  while (!sim.finished()) r.trace.push_back(sim.run_round());
  r.config = sim.config();
  r.options = sim.options();
  r.ledger = sim.ledger();
  r.bounds = bound_report(r.trace, r.ledger, r.config);
  r.smoothness_estimate = sim.smoothness().estimate();
  r.final_loss = r.trace.back().loss;
  r.final_accuracy = r.trace.back().accuracy;
  std::size_t sched = 0;
  for (const auto& t : r.trace) sched += t.scheduled.size();
  r.scheduled_fraction =
      static_cast<double>(sched) / (static_cast<double>(r.config.hp.N) * r.config.hp.T);
  return r;
}

}  // namespace detail

/// Loaded datasets shared by every seed of an MNIST experiment.
struct MnistData {
  Dataset train;
  Dataset test;
};

inline MnistData load_mnist(const ExperimentSpec& spec) {
  return {head(load_mnist_idx(spec.train_images, spec.train_labels), spec.train_subset),
          head(load_mnist_idx(spec.test_images, spec.test_labels), spec.test_subset)};
}

/// One seed. Quadratic runs build their fixture from the seed; MNIST runs use
/// `mnist` (loaded once by the caller). Missing l_smooth / G_sq are filled
/// analytically on quadratics and by the estimators on MNIST.
inline RunResult run_seed(const ExperimentSpec& spec, std::uint64_t seed,
                          const MnistData* mnist = nullptr) {
  ValidatedConfig cfg = spec.config;
  SimulationOptions opt = spec.options;
  opt.seed = seed;
  opt.eval_every = spec.eval_every > 0 ? spec.eval_every : (cfg.hp.T <= 500 ? 1 : 10);

  if (spec.dataset == "quadratic") {
    RngStream data_rng = derive_stream(seed, "data", 0, 0);
    QuadraticFixture fx = synth_quadratic(spec.quadratic, data_rng);
    if (!cfg.hp.has_smoothness()) cfg.hp.l_smooth = fx.l;
    if (!cfg.hp.has_strong_convexity()) cfg.hp.mu = fx.mu;
    if (!cfg.hp.has_variance_bound()) cfg.hp.G_sq = fx.G_sq;
    cfg.hp.s = fx.model->dimension();
    RngStream init_rng = derive_stream(seed, "init", 0, 0);
    ModelVector w0(static_cast<Eigen::Index>(cfg.hp.s));
    for (Eigen::Index i = 0; i < w0.size(); ++i) w0[i] = fx.w_star[i] + 3.0 * init_rng.normal();
    RunResult r = detail::simulate(*fx.model, fx.data, fx.shards, nullptr, cfg, opt, w0);
    r.final_gap = r.final_loss - fx.F_star;
    return r;
  }

  std::optional<MnistData> owned;
  if (mnist == nullptr) {
    owned = load_mnist(spec);
    mnist = &*owned;
  }
  MlpModel model(static_cast<int>(mnist->train.feature_dim()), spec.hidden,
                 std::max(2, mnist->train.class_count));
  RngStream part_rng = derive_stream(seed, "partition", 0, 0);
  Partition part = partition_dataset(mnist->train, cfg.hp.N, spec.partition, part_rng);
  RngStream init_rng = derive_stream(seed, "init", 0, 0);
  ModelVector w0 = model.initial_weights(init_rng);

  if (!cfg.hp.has_variance_bound()) {
    double G = 0.0;
    for (std::size_t n = 0; n < part.shards.size(); ++n) {
      RngStream rng = derive_stream(seed, "probe", n, 0);
      G = std::max(G, estimate_variance_bound(model, mnist->train, part.shards[n], w0,
                                              spec.variance_probes, rng));
    }
    cfg.hp.G_sq = G;
  }
  if (!cfg.hp.has_smoothness()) {
    // Two full-shard gradients per device, one plain gradient step apart.
    GradientSnapshot a{w0, {}}, b{};
    GradientVector g0 = global_full_gradient(model, part.shards, mnist->train, w0);
    b.w = w0 - cfg.hp.eta_at(1) * g0;
    for (const auto& shard : part.shards) {
      a.grads.emplace_back(local_full_gradient(model, a.w, mnist->train, shard));
      b.grads.emplace_back(local_full_gradient(model, b.w, mnist->train, shard));
    }
    const std::vector<GradientSnapshot> hist{a, b};
    cfg.hp.l_smooth = std::max(estimate_smoothness(hist), 1e-6);
  }
  return detail::simulate(model, mnist->train, std::move(part.shards), &mnist->test, cfg, opt, w0);
}

/// Every seed of the spec, in seed-list order.
inline std::vector<RunResult> run_experiment(const ExperimentSpec& spec) {
  if (spec.seeds.empty()) throw Error(Errc::invalid_value, "seeds", "must be non-empty");
  std::optional<MnistData> mnist;
  if (spec.dataset == "mnist") mnist = load_mnist(spec);
  std::vector<RunResult> out(spec.seeds.size());
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = run_seed(spec, spec.seeds[i], mnist ? &*mnist : nullptr);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Metric files

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string metrics_csv(const RunResult& r) {
  const std::size_t N = r.trace.empty() ? 0 : r.trace.front().devices.size();
  std::ostringstream os;
  os << "t,loss,accuracy,sigma_t,k_star,snr,unified_energy";
  for (std::size_t n = 0; n < N; ++n)
    os << ",q_" << n << ",E_est_" << n << ",E_cp_" << n << ",E_tr_" << n << ",sched_" << n;
  os << '\n';
  for (const auto& tr : r.trace) {
    os << tr.t << ',' << fmt17(tr.loss) << ',' << fmt17(tr.accuracy) << ',' << fmt17(tr.sigma_t)
       << ',' << tr.k_star << ',' << fmt17(tr.snr) << ',' << fmt17(tr.unified_energy);
    for (const auto& d : tr.devices)
      os << ',' << fmt17(d.q) << ',' << fmt17(d.E_est) << ',' << fmt17(d.E_cp) << ','
         << fmt17(d.E_tr) << ',' << (d.scheduled ? 1 : 0);
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json summary_json(const RunResult& r) {
  using nlohmann::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  const BoundReport& b = r.bounds;
  json j;
  j["seed"] = r.seed;
  j["policy"] = policy_name(r.options.policy);
  j["sigma_mode"] = power_mode_name(r.options.power_mode);
  j["estimator"] = r.options.estimator == NormEstimator::est_p ? "est_p" : "est_c";
  j["T"] = r.config.hp.T;
  j["N"] = r.config.hp.N;
  j["s"] = r.config.hp.s;
  j["l_smooth"] = num(r.config.hp.l_smooth);
  j["G_sq"] = num(r.config.hp.G_sq);
  j["smoothness_estimate"] = num(r.smoothness_estimate);
  j["final_loss"] = num(r.final_loss);
  j["final_accuracy"] = num(r.final_accuracy);
  j["final_gap"] = r.final_gap ? num(*r.final_gap) : json(nullptr);
  j["scheduled_fraction"] = r.scheduled_fraction;
  j["unified_energy"] = r.trace.empty() ? json(nullptr) : num(r.trace.back().unified_energy);
  j["total_energy"] = b.spent;
  j["budget"] = b.budget;
  j["theorem2"] = {{"delta_0", b.constants.delta_0},
                   {"theta_n", b.constants.theta_n},
                   {"theta_0", b.constants.theta_0},
                   {"V", b.V},
                   {"U_sum", b.U_sum},
                   {"energy_cap", b.energy_cap},
                   {"cap_slack", b.cap_slack},
                   {"loss_gap", b.loss_gap}};
  json flags = json::array();
  for (bool v : b.cap_violated) flags.push_back(v);
  j["violations"] = {{"energy_cap", flags},
                     {"queue_identities", b.queues.violations},
                     {"ledger_error", b.ledger_error}};
  return j;
}

/// Writes `<stem>.csv` and `<stem>.summary.json` under `dir`.
inline void emit_metrics(const RunResult& r, const std::filesystem::path& dir,
                         const std::string& stem) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::io_failure, dir.string(), ec.message());
  auto write = [](const std::filesystem::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_failure, p.string(), "cannot open for writing");
    out << body;
    if (!out) throw Error(Errc::io_failure, p.string(), "write failed");
  };
  write(dir / (stem + ".csv"), metrics_csv(r));
  write(dir / (stem + ".summary.json"), summary_json(r).dump(2) + "\n");
}

}  // namespace oafel
