// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: builds datasets, runs the MultiModel / Ideal /
// SeqnModel pipelines over independent channel realizations, records metrics
// per round and emits CSV. Realizations run concurrently and are merged in
// realization order, so output is independent of the thread count.
#pragma once

#include <Eigen/Dense>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mmfl/beamform.hpp"
#include "mmfl/bound.hpp"
#include "mmfl/channel.hpp"
#include "mmfl/config.hpp"
#include "mmfl/learning.hpp"
#include "mmfl/oaa.hpp"
#include "mmfl/scheduler.hpp"

namespace mmfl {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct MetricsRecord {
  std::string scheme;
  int realization = 0;
  int frame = 0;
  int round = 0;
  int model = 0;  // 1-based
  double accuracy = 0.0;
  double best_accuracy = 0.0;
  double obj_p3 = kMissing;
  double h_term = kMissing;
  double gap_bound = kMissing;
  double elapsed_ms = kMissing;
};

struct TraceRow {
  int realization = 0;
  int frame = 0;
  int iteration = 0;
  double obj_p3 = 0.0;
  double obj_p2 = 0.0;
};

struct AuditRow {
  int realization = 0;
  int frame = 0;
  int round = 0;
  int group = 0;
  int model = 0;
  double signal_power = 0.0;
  double interference_power = 0.0;
  double noise_power = 0.0;
};

struct RunArtifacts {
  std::vector<MetricsRecord> records;
  std::vector<TraceRow> trace;  // when cfg.solver_trace
  std::vector<AuditRow> audit;  // when cfg.audit
};

/// Fixed per-run training material shared by all realizations. Datasets are
/// shared pointers so the M models can reference one loaded corpus.
struct TrainingData {
  std::vector<Model> models;                          // M
  std::vector<std::shared_ptr<const Dataset>> train;  // M
  std::vector<std::shared_ptr<const Dataset>> test;   // M
  std::vector<std::vector<std::vector<int>>> partitions;  // M x K index sets
};
TrainingData build_training_data(const SimConfig& cfg);

/// One communication round for all the models covered by `schedule`:
/// downlink broadcast, J local SGD steps per device, uplink aggregation.
/// ideal = true uses a noiseless downlink and the error-free average, in
/// which case channels/state may be null. Exposed so tests can drive rounds
/// with constructed channels and beamformers.
std::vector<Eigen::VectorXd> run_round(
    const SimConfig& cfg, const TrainingData& data,
    const std::vector<Eigen::VectorXd>& globals, const Schedule& schedule,
    const ChannelSet* channels, const BeamformerState* state, int d_max,
    bool ideal, int realization, int round_t,
    std::vector<AuditRow>* audit_sink = nullptr);

RunArtifacts run_multimodel(const SimConfig& cfg);
RunArtifacts run_ideal(const SimConfig& cfg);
RunArtifacts run_seqnmodel(const SimConfig& cfg);
/// Dispatch on cfg.scheme.
RunArtifacts run_scheme(const SimConfig& cfg);

/// Mean and 90% normal-approximation confidence interval of the best-so-far
/// accuracy per (scheme, round, model) across realizations.
struct SummaryRow {
  std::string scheme;
  int round = 0;
  int model = 0;
  int count = 0;
  double mean_best_accuracy = 0.0;
  double ci90_halfwidth = 0.0;
  bool single_realization = false;  // width-0 interval by convention
};
std::vector<SummaryRow> aggregate_metrics(
    const std::vector<MetricsRecord>& records);

std::string metrics_to_csv(const std::vector<MetricsRecord>& records);
void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

void write_trace_csv(const std::string& path,
                     const std::vector<TraceRow>& rows);
void write_audit_csv(const std::string& path,
                     const std::vector<AuditRow>& rows);
std::string summary_to_string(const std::vector<SummaryRow>& rows);
void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRow>& rows);

/// Constants for the optimality-gap diagnostics. Reference optima are found
/// by a deterministic full-batch run; r / phi / delta are taken from the
/// config or estimated by sampling when requested.
BoundConstants build_bound_constants(const SimConfig& cfg,
                                     const TrainingData& data);

}  // namespace mmfl
