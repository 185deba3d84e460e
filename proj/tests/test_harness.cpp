#include "oafel/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>

using namespace oafel;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "oafel_test_harness" / name;
  fs::create_directories(p);
  return p;
}

void put32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

// count images of rows x cols; truncate_to drops trailing pixel bytes.
std::string write_images(const fs::path& dir, std::uint32_t magic, std::uint32_t count,
                         std::uint32_t rows, std::uint32_t cols, std::size_t drop = 0) {
  const std::string p = (dir / "img").string();
  std::ofstream out(p, std::ios::binary);
  put32(out, magic);
  put32(out, count);
  put32(out, rows);
  put32(out, cols);
  std::vector<char> px(count * rows * cols - drop);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<char>(i % 256);
  out.write(px.data(), static_cast<std::streamsize>(px.size()));
  return p;
}

std::string write_labels(const fs::path& dir, std::uint32_t magic, std::uint32_t count) {
  const std::string p = (dir / "lab").string();
  std::ofstream out(p, std::ios::binary);
  put32(out, magic);
  put32(out, count);
  for (std::uint32_t i = 0; i < count; ++i) out.put(static_cast<char>(i % 10));
  return p;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::invalid_argument;  // sentinel; callers never expect it
}

nlohmann::json quad_doc(int T = 40) {
  return {{"dataset", "quadratic"}, {"T", T},
          {"N", 4},                 {"s", 6},
          {"samples_per_device", 100}, {"center_spread", 0.5},
          {"L_b", 16},              {"eta", 0.05},
          {"gamma0", 5.0},          {"sigma0_sq", 0.1},
          {"V", 500.0},             {"q_min", 0.0},
          {"compute_energy_per_round", 1.0}, {"E_bar_per_round", 3.0},
          {"obs_error", 0.2},       {"seeds", nlohmann::json::array({7})}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

// --- IDX ------------------------------------------------------------------

TEST(LoadMnistIdx, SubsetFiles) {
  const std::string dir = std::string(OAFEL_SOURCE_DIR) + "/data/mnist_subset/";
  Dataset d = load_mnist_idx(dir + "train-images-idx3-ubyte", dir + "train-labels-idx1-ubyte");
  EXPECT_EQ(d.size(), 6000u);
  EXPECT_EQ(d.feature_dim(), 784u);
  EXPECT_EQ(d.class_count, 10);
  EXPECT_GE(d.features.minCoeff(), 0.0);
  EXPECT_LE(d.features.maxCoeff(), 1.0);
  EXPECT_GT(d.features.maxCoeff(), 0.99);
}

TEST(LoadMnistIdx, FullTrainingSetWhenPresent) {
  const char* dir = std::getenv("OAFEL_MNIST_DIR");
  if (dir == nullptr) GTEST_SKIP() << "set OAFEL_MNIST_DIR to the full IDX files";
  const std::string base = std::string(dir) + "/";
  Dataset d = load_mnist_idx(base + "train-images-idx3-ubyte", base + "train-labels-idx1-ubyte");
  EXPECT_EQ(d.size(), 60000u);
  EXPECT_EQ(d.feature_dim(), 784u);
  EXPECT_EQ(d.class_count, 10);
}

TEST(LoadMnistIdx, TinyFileRoundTrip) {
  auto dir = scratch("tiny");
  auto img = write_images(dir, 0x803, 3, 2, 2);
  auto lab = write_labels(dir, 0x801, 3);
  Dataset d = load_mnist_idx(img, lab);
  ASSERT_EQ(d.size(), 3u);
  ASSERT_EQ(d.feature_dim(), 4u);
  EXPECT_DOUBLE_EQ(d.features(1, 2), 9.0 / 255.0);
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 2}));
}

TEST(LoadMnistIdx, LabelsWithImageMagic) {
  auto dir = scratch("badmagic");
  auto img = write_images(dir, 0x803, 3, 2, 2);
  auto lab = write_labels(dir, 0x803, 3);
  EXPECT_EQ(code_of([&] { load_mnist_idx(img, lab); }), Errc::bad_magic);
}

TEST(LoadMnistIdx, TruncatedMidRecord) {
  auto dir = scratch("trunc");
  auto img = write_images(dir, 0x803, 3, 2, 2, 2);
  auto lab = write_labels(dir, 0x801, 3);
  EXPECT_EQ(code_of([&] { load_mnist_idx(img, lab); }), Errc::truncated_file);
}

TEST(LoadMnistIdx, CountMismatchAndMissingFile) {
  auto dir = scratch("mismatch");
  auto img = write_images(dir, 0x803, 3, 2, 2);
  auto lab = write_labels(dir, 0x801, 4);
  EXPECT_EQ(code_of([&] { load_mnist_idx(img, lab); }), Errc::count_mismatch);
  EXPECT_EQ(code_of([&] { load_mnist_idx((dir / "nope").string(), lab); }), Errc::io_failure);
}

// --- quadratic fixture ------------------------------------------------------

TEST(SynthQuadratic, IdentityAtOrigin) {
  QuadraticSpec q;
  q.N = 3;
  q.s = 4;
  q.center_scale = 0.0;
  q.noise_spread = 0.0;
  q.curvature = Eigen::MatrixXd::Identity(4, 4);
  RngStream rng(1, "data", 0, 0);
  auto f = synth_quadratic(q, rng);
  EXPECT_EQ(f.data.features.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(f.w_star.norm(), 0.0);
  EXPECT_EQ(f.F_star, 0.0);
  EXPECT_DOUBLE_EQ(f.l, 1.0);
  EXPECT_DOUBLE_EQ(f.mu, 1.0);
  EXPECT_EQ(f.G_sq, 0.0);
}

TEST(SynthQuadratic, DiagonalCurvature) {
  QuadraticSpec q;
  q.s = 2;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
  A(0, 0) = 1;
  A(1, 1) = 4;
  q.curvature = A;
  RngStream rng(2, "data", 0, 0);
  auto f = synth_quadratic(q, rng);
  EXPECT_NEAR(f.l, 4.0, 1e-12);
  EXPECT_NEAR(f.mu, 1.0, 1e-12);
}

TEST(SynthQuadratic, RandomRotationKeepsSpectrumAndOptimum) {
  QuadraticSpec q;
  q.s = 7;
  q.mu = 0.5;
  q.l = 3.0;
  q.center_spread = 1.0;
  RngStream rng(3, "data", 0, 0);
  auto f = synth_quadratic(q, rng);
  EXPECT_NEAR(f.l, 3.0, 1e-10);
  EXPECT_NEAR(f.mu, 0.5, 1e-10);
  // w* minimizes: the full gradient vanishes there, and F rises elsewhere.
  EXPECT_LT(global_full_gradient(*f.model, f.shards, f.data, f.w_star).norm(), 1e-10);
  EXPECT_GT(f.gap(f.w_star + Vector::Constant(7, 0.1)), 0.0);
  EXPECT_NEAR(f.gap(f.w_star), 0.0, 1e-12);
}

TEST(SynthQuadratic, VarianceEstimateMatchesAnalyticTrace) {
  QuadraticSpec q;
  q.s = 5;
  q.samples_per_device = 400;
  q.center_spread = 0.3;
  RngStream rng(4, "data", 0, 0);
  auto f = synth_quadratic(q, rng);
  const Vector w = Vector::Constant(5, 0.7);
  for (int n = 0; n < q.N; ++n) {
    RngStream probe(4, "probe", static_cast<std::uint64_t>(n), 0);
    const double est = estimate_variance_bound(*f.model, f.data, f.shards[static_cast<std::size_t>(n)],
                                               w, 4000, probe);
    EXPECT_NEAR(est, f.device_variance[static_cast<std::size_t>(n)],
                0.1 * f.device_variance[static_cast<std::size_t>(n)]);
  }
}

TEST(SynthQuadratic, RejectsEmptyDimension) {
  QuadraticSpec q;
  q.s = 0;
  RngStream rng(5, "data", 0, 0);
  EXPECT_THROW(synth_quadratic(q, rng), Error);
}

// --- specs -----------------------------------------------------------------

TEST(ExperimentSpec, DeskConfigsLoad) {
  const std::string dir = std::string(OAFEL_SOURCE_DIR) + "/configs/";
  auto q = load_experiment_spec_file(dir + "quadratic_desk.json");
  EXPECT_EQ(q.dataset, "quadratic");
  EXPECT_EQ(q.seeds.size(), 10u);
  EXPECT_EQ(q.options.power_mode, PowerMode::paper_literal);
  EXPECT_DOUBLE_EQ(q.options.obs_error, 0.2);
  auto m = load_experiment_spec_file(dir + "mnist_desk.json");
  EXPECT_EQ(m.dataset, "mnist");
  EXPECT_TRUE(fs::exists(m.train_images)) << m.train_images;
  EXPECT_EQ(m.train_subset, 6000u);
}

TEST(ExperimentSpec, Rejections) {
  auto with = [](const char* key, nlohmann::json v) {
    auto d = quad_doc();
    d[key] = std::move(v);
    return d;
  };
  EXPECT_EQ(code_of([&] { load_experiment_spec(with("policy", "greedy")); }), Errc::invalid_value);
  EXPECT_EQ(code_of([&] { load_experiment_spec(with("seeds", nlohmann::json::array())); }),
            Errc::invalid_value);
  EXPECT_EQ(code_of([&] { load_experiment_spec(with("dataset", "cifar")); }), Errc::invalid_value);
  EXPECT_EQ(code_of([&] { load_experiment_spec(with("obs_error", 1.0)); }), Errc::invalid_value);
  EXPECT_EQ(code_of([&] { load_experiment_spec(with("L_b", 500)); }), Errc::batch_too_large);
  EXPECT_EQ(code_of([&] { load_experiment_spec({{"dataset", "mnist"}, {"T", 5}}); }),
            Errc::missing_key);
  EXPECT_EQ(code_of([&] { load_experiment_spec_file("/nonexistent/x.json"); }), Errc::io_failure);
}

// --- runs ------------------------------------------------------------------

TEST(RunExperiment, AllPolicySchedulesEveryone) {
  auto doc = quad_doc();
  doc["policy"] = "all";
  auto runs = run_experiment(load_experiment_spec(doc));
  ASSERT_EQ(runs.size(), 1u);
  ASSERT_EQ(runs[0].trace.size(), 40u);
  for (std::size_t i = 0; i < runs[0].trace.size(); ++i) {
    EXPECT_EQ(runs[0].trace[i].t, static_cast<int>(i) + 1);
    EXPECT_EQ(runs[0].trace[i].scheduled, (std::vector<int>{0, 1, 2, 3}));
  }
  EXPECT_DOUBLE_EQ(runs[0].scheduled_fraction, 1.0);
}

TEST(RunExperiment, SeedsRunInListOrder) {
  auto doc = quad_doc(10);
  doc["seeds"] = {5, 3, 9};
  auto spec = load_experiment_spec(doc);
  auto runs = run_experiment(spec);
  ASSERT_EQ(runs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(runs[i].seed, spec.seeds[i]);
    EXPECT_EQ(metrics_csv(runs[i]), metrics_csv(run_seed(spec, spec.seeds[i])));
  }
}

TEST(RunExperiment, QuadraticLearns) {
  auto r = run_seed(load_experiment_spec(quad_doc()), 7);
  ASSERT_TRUE(r.final_gap.has_value());
  const double start = r.trace.front().loss;
  EXPECT_LT(r.final_loss, start);
  EXPECT_GE(*r.final_gap, -1e-12);
  EXPECT_FALSE(r.bounds.any_violation());
  EXPECT_EQ(r.bounds.queues.violations, 0);
  EXPECT_LE(r.bounds.ledger_error, 1e-12);
}

TEST(EmitMetrics, FortyRoundCsvShape) {
  auto r = run_seed(load_experiment_spec(quad_doc()), 7);
  auto dir = scratch("shape");
  emit_metrics(r, dir, "run");
  std::ifstream in(dir / "run.csv");
  std::string line;
  int lines = 0;
  std::getline(in, line);
  ++lines;
  EXPECT_EQ(line.rfind("t,loss,accuracy,sigma_t,k_star,snr,unified_energy,q_0,E_est_0,E_cp_0,E_tr_0,"
                       "sched_0,q_1",
                       0),
            0u);
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 41);
  EXPECT_TRUE(fs::exists(dir / "run.summary.json"));
}

TEST(EmitMetrics, RepeatRunsAreByteIdentical) {
  auto spec = load_experiment_spec(quad_doc());
  auto a = scratch("repeat_a"), b = scratch("repeat_b");
  emit_metrics(run_seed(spec, 11), a, "run");
  emit_metrics(run_seed(spec, 11), b, "run");
  EXPECT_EQ(slurp(a / "run.csv"), slurp(b / "run.csv"));
  EXPECT_EQ(slurp(a / "run.summary.json"), slurp(b / "run.summary.json"));
  EXPECT_FALSE(slurp(a / "run.csv").empty());
}

TEST(EmitMetrics, SummaryTotalsMatchCsvColumns) {
  auto r = run_seed(load_experiment_spec(quad_doc()), 13);
  auto dir = scratch("totals");
  emit_metrics(r, dir, "run");

  std::ifstream in(dir / "run.csv");
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<double> sums(4, 0.0);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t c = 0; std::getline(ss, cell, ','); ++c) {
      const std::string& h = header.at(c);
      if (h.rfind("E_cp_", 0) == 0 || h.rfind("E_tr_", 0) == 0)
        sums.at(static_cast<std::size_t>(std::stoi(h.substr(5)))) += std::stod(cell);
    }
  }
  auto summary = nlohmann::json::parse(slurp(dir / "run.summary.json"));
  ASSERT_EQ(summary["total_energy"].size(), 4u);
  for (std::size_t n = 0; n < 4; ++n)
    EXPECT_NEAR(summary["total_energy"][n].get<double>(), sums[n], 1e-9 * (1.0 + sums[n]));
  EXPECT_EQ(summary["violations"]["queue_identities"].get<int>(), 0);
  EXPECT_EQ(summary["T"].get<int>(), 40);
}

TEST(EmitMetrics, UnwritableDirectory) {
  auto r = run_seed(load_experiment_spec(quad_doc(3)), 1);
  auto dir = scratch("unwritable");
  { std::ofstream(dir / "blocker") << "x"; }
  EXPECT_EQ(code_of([&] { emit_metrics(r, dir / "blocker" / "sub", "run"); }), Errc::io_failure);
}

TEST(RunExperiment, MnistSubsetSmoke) {
  nlohmann::json doc = {{"dataset", "mnist"},
                        {"mnist_dir", std::string(OAFEL_SOURCE_DIR) + "/data/mnist_subset"},
                        {"train_subset", 6000},
                        {"test_subset", 200},
                        {"hidden", 16},
                        {"T", 3},
                        {"N", 10},
                        {"L_b", 16},
                        {"eta", 0.05},
                        {"gamma0", 5.0},
                        {"sigma0_sq", 1e-6},
                        {"V", 100.0},
                        {"compute_energy_per_round", 1.0},
                        {"E_bar_per_round", 1.0},
                        {"partition", "non_iid"},
                        {"m", 1},
                        {"variance_probes", 16},
                        {"sigma_mode", "snr_consistent"},
                        {"seeds", nlohmann::json::array({1})}};
  auto r = run_experiment(load_experiment_spec(doc)).at(0);
  ASSERT_EQ(r.trace.size(), 3u);
  EXPECT_GT(r.config.hp.G_sq, 0.0);
  EXPECT_GT(r.config.hp.l_smooth, 0.0);
  EXPECT_GE(r.final_accuracy, 0.0);
  EXPECT_LE(r.final_accuracy, 1.0);
  EXPECT_FALSE(r.final_gap.has_value());
}
