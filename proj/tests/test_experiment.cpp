// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "mmfl/errors.hpp"
#include "mmfl/experiment.hpp"
#include "test_util.hpp"

using namespace mmfl;

namespace {

/// Small, fast configuration used by most cases here.
SimConfig tiny_config() {
  SimConfig cfg;
  cfg.num_devices = 4;
  cfg.num_models = 2;
  cfg.num_antennas = 4;
  cfg.rounds = 4;
  cfg.local_iterations = 3;
  cfg.batch_size = 5;
  cfg.realizations = 2;
  cfg.classes = 3;
  cfg.model_kinds = {"logistic", "logistic"};
  cfg.feature_dims = {5, 7};
  cfg.hidden_units = {0, 0};
  cfg.synth_train = 200;
  cfg.synth_test = 90;
  cfg.threads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("config text round-trips into a validated SimConfig") {
  const std::string text = R"(
# comment line
scheme = seqnmodel
seed = 99
K = 6
M = 3
N = 8
rounds = 9            # trailing comment
J = 4
batch_size = 10
eta = 0.1, 0.05, 0.025, 0.0125, 0.01, 0.008, 0.007, 0.006, 0.005
classes = 3
model_kinds = logistic, logistic, mlp
feature_dims = 4, 5, 6
hidden_units = 0, 0, 3
synth_train = 240
synth_test = 60
device_power_dbm = 23
)";
  const SimConfig cfg = parse_config(text);
  CHECK(cfg.scheme == "seqnmodel");
  CHECK(cfg.seed == 99);
  CHECK(cfg.num_devices == 6);
  CHECK(cfg.eta.size() == 9);
  CHECK(cfg.model_kinds[2] == "mlp");
  CHECK(cfg.model(3).kind == ModelKind::kMlp);
  CHECK(cfg.model(1).dim() == 3 * 5);
  CHECK(cfg.frames() == 3);
  CHECK(cfg.d_max() == std::max({3 * 5, 3 * 6, 3 * 7 + 3 * 4}));
}

TEST_CASE("config rejects unknown keys, duplicates and bad combinations") {
  CHECK_THROWS_AS(parse_config("nonsense_key = 3"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed = 1\nseed = 2"), ConfigError);
  CHECK_THROWS_AS(parse_config("K = 7\nM = 3"), ConfigError);
  CHECK_THROWS_AS(parse_config("bcd_tol = 0"), ConfigError);
  CHECK_THROWS_AS(parse_config("scheme = other"), ConfigError);
  CHECK_THROWS_AS(parse_config("eta = 0.1, 0.2"), ConfigError);  // < frames
  CHECK_THROWS_AS(parse_config("rounds = nope"), ConfigError);
  CHECK_THROWS_AS(parse_config("dataset = mnist"), ConfigError);  // no paths
  CHECK_THROWS_AS(parse_config("model_kinds = logistic"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch_size = 1000"), ConfigError);
}

TEST_CASE("derived link-budget quantities") {
  SimConfig cfg;
  CHECK(cfg.sigma2_ul_effective() ==
        doctest::Approx(std::pow(10.0, -14.2)).epsilon(1e-12));
  CHECK(cfg.sigma2_dl_effective() ==
        doctest::Approx(std::pow(10.0, -12.6)).epsilon(1e-12));
  cfg.sigma2_ul = 0.5;
  CHECK(cfg.sigma2_ul_effective() == 0.5);
  // Caps: D_max * P_ul with 2 P_ul = 23 dBm linear.
  const double p_ul = std::pow(10.0, (23.0 - 30.0) / 10.0) / 2.0;
  CHECK(cfg.power_caps()(0) ==
        doctest::Approx(cfg.d_max() * p_ul).epsilon(1e-12));
}

TEST_CASE("runs are deterministic and byte-identical per seed") {
  SimConfig cfg = tiny_config();
  for (const char* scheme : {"multimodel", "ideal", "seqnmodel"}) {
    cfg.scheme = scheme;
    const std::string a = metrics_to_csv(run_scheme(cfg).records);
    const std::string b = metrics_to_csv(run_scheme(cfg).records);
    CHECK(a == b);
    SimConfig other = cfg;
    other.seed = cfg.seed + 1;
    CHECK(metrics_to_csv(run_scheme(other).records) != a);
  }
}

TEST_CASE("thread count does not change the output") {
  SimConfig cfg = tiny_config();
  cfg.realizations = 3;
  cfg.threads = 1;
  const std::string serial = metrics_to_csv(run_multimodel(cfg).records);
  cfg.threads = 3;
  CHECK(metrics_to_csv(run_multimodel(cfg).records) == serial);
}

TEST_CASE("ideal runs ignore the noise parameters") {
  SimConfig cfg = tiny_config();
  const std::string base = metrics_to_csv(run_ideal(cfg).records);
  cfg.sigma2_ul = 123.0;
  cfg.sigma2_dl = 7.0;
  CHECK(metrics_to_csv(run_ideal(cfg).records) == base);
}

TEST_CASE("noise-free interference-free rounds reproduce the ideal update") {
  // Orthogonal per-group channels, equal channels inside each group, full
  // batches and shared shards make every device of a group identical, so the
  // OAA weights collapse to the uniform ideal weights exactly.
  SimConfig cfg = tiny_config();
  cfg.sigma2_ul = 0.0;
  cfg.sigma2_dl = 0.0;
  cfg.batch_size = 50;  // exactly one shard: every step is a full batch
  cfg.local_iterations = 2;
  const TrainingData base = build_training_data(cfg);
  TrainingData data = base;
  for (int m = 0; m < 2; ++m) {
    std::vector<int> shared = data.partitions[static_cast<std::size_t>(m)][0];
    for (auto& shard : data.partitions[static_cast<std::size_t>(m)]) {
      shard = shared;
    }
  }

  ChannelSet cs;
  cs.sigma2_ul = 0.0;
  cs.sigma2_dl = 0.0;
  for (int k = 0; k < 4; ++k) {
    Eigen::VectorXcd h = Eigen::VectorXcd::Zero(4);
    const int base_antenna = k < 2 ? 0 : 2;
    h(base_antenna) = std::complex<double>(1.2, 0.4);
    h(base_antenna + 1) = std::complex<double>(-0.3, 0.9);
    cs.h.push_back(h);
  }
  Schedule sched;
  sched.num_devices = 4;
  sched.num_models = 2;
  sched.groups = {{0, 1}, {2, 3}};
  BeamformerState st;
  st.p = cfg.power_caps();
  Eigen::VectorXcd w1 = Eigen::VectorXcd::Zero(4);
  w1(0) = 1.0;
  Eigen::VectorXcd w2 = Eigen::VectorXcd::Zero(4);
  w2(2) = 1.0;
  st.w = {w1, w2};

  std::vector<Eigen::VectorXd> globals = {
      Eigen::VectorXd::Zero(data.models[0].dim()),
      Eigen::VectorXd::Zero(data.models[1].dim())};
  std::vector<Eigen::VectorXd> ideal_globals = globals;
  for (int t = 0; t < 4; ++t) {
    globals = run_round(cfg, data, globals, sched, &cs, &st, cfg.d_max(),
                        /*ideal=*/false, 0, t);
    ideal_globals = run_round(cfg, data, ideal_globals, sched, nullptr,
                              nullptr, cfg.d_max(), /*ideal=*/true, 0, t);
    for (int m = 0; m < 2; ++m) {
      CHECK((globals[static_cast<std::size_t>(m)] -
             ideal_globals[static_cast<std::size_t>(m)])
                .lpNorm<Eigen::Infinity>() < 1e-9);
    }
  }
}

TEST_CASE("sequential baseline budgets cover the round budget exactly") {
  SimConfig cfg = tiny_config();
  cfg.num_devices = 6;
  cfg.num_models = 3;
  cfg.model_kinds = {"logistic", "logistic", "logistic"};
  cfg.feature_dims = {5, 5, 5};
  cfg.hidden_units = {0, 0, 0};
  cfg.synth_train = 240;
  cfg.realizations = 1;

  SUBCASE("divisible budget") {
    cfg.rounds = 9;
    const auto records = run_seqnmodel(cfg).records;
    std::vector<int> training_rounds(3, 0);
    for (const auto& rec : records) {
      if (!std::isnan(rec.obj_p3)) {
        training_rounds[static_cast<std::size_t>(rec.model - 1)]++;
      }
    }
    CHECK(training_rounds == std::vector<int>{3, 3, 3});
  }
  SUBCASE("uneven budget is split as evenly as possible") {
    cfg.rounds = 10;
    const auto records = run_seqnmodel(cfg).records;
    std::vector<int> training_rounds(3, 0);
    int total = 0;
    std::set<int> rounds_seen;
    for (const auto& rec : records) {
      rounds_seen.insert(rec.round);
      if (!std::isnan(rec.obj_p3)) {
        training_rounds[static_cast<std::size_t>(rec.model - 1)]++;
        ++total;
      }
    }
    CHECK(training_rounds == std::vector<int>{4, 3, 3});
    CHECK(total == 10);
    CHECK(rounds_seen.size() == 10);
  }
}

TEST_CASE("single-model multimodel run equals the sequential baseline") {
  // With M = 1 the BCD solution collapses to the aggregated-SNR maximizer at
  // full power, so the two pipelines produce the same accuracy trajectory.
  SimConfig cfg = tiny_config();
  cfg.num_models = 1;
  cfg.model_kinds = {"logistic"};
  cfg.feature_dims = {5};
  cfg.hidden_units = {0};
  cfg.realizations = 2;
  cfg.rounds = 5;
  const auto multi = run_multimodel(cfg).records;
  const auto seqn = run_seqnmodel(cfg).records;
  REQUIRE(multi.size() == seqn.size());
  for (std::size_t i = 0; i < multi.size(); ++i) {
    CHECK(multi[i].accuracy == seqn[i].accuracy);
    CHECK(multi[i].best_accuracy == seqn[i].best_accuracy);
    CHECK(multi[i].round == seqn[i].round);
  }
}

TEST_CASE("best-so-far accuracy is non-decreasing and frames share a solve") {
  SimConfig cfg = tiny_config();
  cfg.rounds = 6;
  const auto records = run_multimodel(cfg).records;
  std::map<std::pair<int, int>, double> best;
  std::map<std::pair<int, int>, double> frame_obj;  // (realization, frame)
  for (const auto& rec : records) {
    const auto key = std::make_pair(rec.realization, rec.model);
    if (best.count(key) != 0U) CHECK(rec.best_accuracy >= best[key]);
    best[key] = rec.best_accuracy;
    CHECK(rec.best_accuracy >= rec.accuracy - 1e-15);

    const auto fkey = std::make_pair(rec.realization, rec.frame);
    if (frame_obj.count(fkey) != 0U) {
      CHECK(rec.obj_p3 == frame_obj[fkey]);  // one solve per frame
    }
    frame_obj[fkey] = rec.obj_p3;
    CHECK(rec.frame == rec.round / cfg.num_models);
  }
}

TEST_CASE("metrics CSV schema and round trip") {
  SimConfig cfg = tiny_config();
  cfg.realizations = 1;
  const auto artifacts = run_multimodel(cfg);
  const std::string csv = metrics_to_csv(artifacts.records);
  CHECK(csv.rfind("scheme,realization,frame,round,model,accuracy,"
                  "best_accuracy,obj_p3,h_term,gap_bound,elapsed_ms\n",
                  0) == 0);
  // elapsed_ms is blank unless timing is enabled.
  const auto first_newline = csv.find('\n');
  const auto second_newline = csv.find('\n', first_newline + 1);
  const std::string first_row =
      csv.substr(first_newline + 1, second_newline - first_newline - 1);
  CHECK(first_row.back() == ',');

  const std::string path = "/tmp/mmfl_metrics_test.csv";
  write_metrics_csv(path, artifacts.records);
  const auto back = read_metrics_csv(path);
  REQUIRE(back.size() == artifacts.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].scheme == artifacts.records[i].scheme);
    CHECK(back[i].round == artifacts.records[i].round);
    CHECK(back[i].best_accuracy ==
          doctest::Approx(artifacts.records[i].best_accuracy).epsilon(1e-10));
    CHECK(std::isnan(back[i].elapsed_ms));
  }
  std::filesystem::remove(path);
}

TEST_CASE("aggregate_metrics means and confidence intervals") {
  SUBCASE("constant records collapse to zero width") {
    std::vector<MetricsRecord> records;
    for (int r = 0; r < 5; ++r) {
      records.push_back({"ideal", r, 0, 0, 1, 0.8, 0.8, kMissing, kMissing,
                         kMissing, kMissing});
    }
    const auto rows = aggregate_metrics(records);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].count == 5);
    CHECK(rows[0].mean_best_accuracy == doctest::Approx(0.8));
    CHECK(rows[0].ci90_halfwidth == 0.0);
    CHECK(!rows[0].single_realization);
  }
  SUBCASE("single realization is flagged with zero width") {
    std::vector<MetricsRecord> records = {{"ideal", 0, 0, 0, 1, 0.5, 0.5,
                                           kMissing, kMissing, kMissing,
                                           kMissing}};
    const auto rows = aggregate_metrics(records);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].single_realization);
    CHECK(rows[0].ci90_halfwidth == 0.0);
  }
  SUBCASE("half-width follows the closed form") {
    std::vector<MetricsRecord> records;
    const std::vector<double> values = {0.7, 0.8, 0.9, 0.6, 0.75};
    for (std::size_t r = 0; r < values.size(); ++r) {
      records.push_back({"multimodel", static_cast<int>(r), 0, 3, 2, values[r],
                         values[r], kMissing, kMissing, kMissing, kMissing});
    }
    const auto rows = aggregate_metrics(records);
    REQUIRE(rows.size() == 1);
    const double mean = (0.7 + 0.8 + 0.9 + 0.6 + 0.75) / 5.0;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / 4.0);
    CHECK(rows[0].mean_best_accuracy == doctest::Approx(mean).epsilon(1e-12));
    CHECK(rows[0].ci90_halfwidth ==
          doctest::Approx(1.645 * sd / std::sqrt(5.0)).epsilon(1e-9));
  }
}

TEST_CASE("gap-bound diagnostics appear on complete frames of multimodel runs") {
  SimConfig cfg = tiny_config();
  cfg.realizations = 1;
  cfg.rounds = 4;
  cfg.compute_gap_bound = true;
  cfg.l2_reg = 0.05;
  cfg.bound_r = 0.0;     // calibrate
  cfg.bound_phi = -1.0;  // estimate
  cfg.bound_delta = -1.0;
  const auto records = run_multimodel(cfg).records;
  int with_gap = 0;
  for (const auto& rec : records) {
    const bool frame_final = (rec.round + 1) % cfg.num_models == 0;
    if (frame_final) {
      CHECK(!std::isnan(rec.gap_bound));
      CHECK(rec.gap_bound > 0.0);
      ++with_gap;
    } else {
      CHECK(std::isnan(rec.gap_bound));
    }
    CHECK(!std::isnan(rec.h_term));
    CHECK(rec.h_term > 0.0);
  }
  CHECK(with_gap == 4);  // 2 frame-final rounds x 2 models
}

TEST_CASE("audit and trace sinks fill when enabled") {
  SimConfig cfg = tiny_config();
  cfg.realizations = 1;
  cfg.solver_trace = true;
  cfg.audit = true;
  const auto artifacts = run_multimodel(cfg);
  CHECK(!artifacts.trace.empty());
  CHECK(artifacts.audit.size() ==
        static_cast<std::size_t>(cfg.rounds * cfg.num_models));
  for (const auto& row : artifacts.audit) {
    CHECK(row.signal_power > 0.0);
    CHECK(row.interference_power >= 0.0);
    CHECK(row.noise_power >= 0.0);
  }
  // The last trace row of each frame carries the recorded frame objective.
  for (const auto& rec : artifacts.records) {
    double final_obj = kMissing;
    for (const auto& it : artifacts.trace) {
      if (it.realization == rec.realization && it.frame == rec.frame) {
        final_obj = it.obj_p3;
      }
    }
    CHECK(rec.obj_p3 == final_obj);
  }
}
