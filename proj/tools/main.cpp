// SPDX-License-Identifier: Apache-2.0
//
// mmfl command line: run experiments, validate configuration files and
// summarize metric CSVs.
#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "mmfl/bound.hpp"
#include "mmfl/config.hpp"
#include "mmfl/errors.hpp"
#include "mmfl/experiment.hpp"

namespace {

int run_command(const std::string& config_path, const std::string& scheme,
                long long seed, const std::string& out_dir_arg) {
  mmfl::SimConfig cfg = mmfl::load_config(config_path);
  if (!scheme.empty()) cfg.scheme = scheme;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  mmfl::validate(cfg);

  // The output directory is the only setting an environment variable may
  // override.
  std::string out_dir = out_dir_arg;
  if (const char* env = std::getenv("MMFL_OUT_DIR"); env != nullptr) {
    out_dir = env;
  }
  std::filesystem::create_directories(out_dir);
  const auto path = [&](const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  const mmfl::RunArtifacts artifacts = mmfl::run_scheme(cfg);
  mmfl::write_metrics_csv(path("metrics.csv"), artifacts.records);
  std::cout << "wrote " << artifacts.records.size() << " records to "
            << path("metrics.csv") << "\n";
  if (cfg.solver_trace) {
    mmfl::write_trace_csv(path("trace.csv"), artifacts.trace);
    std::cout << "wrote solver trace to " << path("trace.csv") << "\n";
  }
  if (cfg.audit) {
    mmfl::write_audit_csv(path("audit.csv"), artifacts.audit);
    std::cout << "wrote aggregation audit to " << path("audit.csv") << "\n";
  }
  if (cfg.compute_gap_bound && cfg.scheme == "multimodel") {
    // Per-frame bound diagnostics from realization 0.
    const mmfl::TrainingData data = mmfl::build_training_data(cfg);
    const mmfl::BoundConstants consts = mmfl::build_bound_constants(cfg, data);
    std::vector<double> h_values;
    for (const auto& rec : artifacts.records) {
      if (rec.realization != 0 || rec.model != 1) continue;
      if (h_values.size() == static_cast<std::size_t>(rec.frame)) {
        h_values.push_back(rec.h_term);
      }
    }
    mmfl::write_bound_csv(path("bound.csv"), h_values, consts);
    std::cout << "wrote bound diagnostics to " << path("bound.csv") << "\n";
  }
  return 0;
}

int validate_command(const std::string& config_path) {
  const mmfl::SimConfig cfg = mmfl::load_config(config_path);
  std::cout << "config ok\n"
            << "  scheme        " << cfg.scheme << "\n"
            << "  K / M / N     " << cfg.num_devices << " / " << cfg.num_models
            << " / " << cfg.num_antennas << "\n"
            << "  rounds        " << cfg.rounds << " (" << cfg.frames()
            << " frames)\n"
            << "  D_max         " << cfg.d_max() << "\n"
            << "  sigma2_ul     " << cfg.sigma2_ul_effective() << " W\n"
            << "  sigma2_dl     " << cfg.sigma2_dl_effective() << " W\n"
            << "  realizations  " << cfg.realizations << "\n";
  return 0;
}

int summarize_command(const std::string& in_path, const std::string& csv_out,
                      bool final_only) {
  const auto records = mmfl::read_metrics_csv(in_path);
  auto rows = mmfl::aggregate_metrics(records);
  if (final_only && !rows.empty()) {
    int last_round = 0;
    for (const auto& r : rows) last_round = std::max(last_round, r.round);
    std::erase_if(rows, [&](const auto& r) { return r.round != last_round; });
  }
  std::cout << mmfl::summary_to_string(rows);
  if (!csv_out.empty()) {
    mmfl::write_summary_csv(csv_out, rows);
    std::cout << "wrote summary to " << csv_out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-model wireless federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string scheme;
  long long seed = -1;
  std::string out_dir = "out";
  auto* run = app.add_subcommand("run", "run an experiment");
  run->add_option("--config", config_path, "configuration file")->required();
  run->add_option("--scheme", scheme,
                  "override scheme (multimodel | ideal | seqnmodel)");
  run->add_option("--seed", seed, "override seed");
  run->add_option("--out", out_dir,
                  "output directory (env MMFL_OUT_DIR overrides)");

  std::string validate_path;
  auto* validate =
      app.add_subcommand("validate-config", "parse and validate a config");
  validate->add_option("--config", validate_path, "configuration file")
      ->required();

  std::string in_path;
  std::string csv_out;
  bool final_only = false;
  auto* summarize =
      app.add_subcommand("summarize", "summarize a metrics CSV");
  summarize->add_option("--in", in_path, "metrics.csv produced by run")
      ->required();
  summarize->add_option("--csv", csv_out, "also write the summary as CSV");
  summarize->add_flag("--final-only", final_only,
                      "only report the final round");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(config_path, scheme, seed, out_dir);
    if (validate->parsed()) return validate_command(validate_path);
    if (summarize->parsed()) {
      return summarize_command(in_path, csv_out, final_only);
    }
  } catch (const mmfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mmfl::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const mmfl::DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return 4;
  } catch (const mmfl::DegenerateError& e) {
    std::cerr << "degenerate state: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
