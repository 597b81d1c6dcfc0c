// SPDX-License-Identifier: Apache-2.0
#include "mmfl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include "mmfl/errors.hpp"

namespace mmfl {

namespace {

constexpr char kMetricsHeader[] =
    "scheme,realization,frame,round,model,accuracy,best_accuracy,obj_p3,"
    "h_term,gap_bound,elapsed_ms";

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void append_field(std::string& line, double v) {
  line.push_back(',');
  if (!std::isnan(v)) line += format_double(v);
}

Geometry make_geometry(const SimConfig& cfg, int realization) {
  Geometry g;
  g.shadow_std_db = cfg.shadow_std_db;
  if (!cfg.distances_km.empty()) {
    g.distances_km = cfg.distances_km;
  } else {
    Rng rng = Rng::stream(cfg.seed, StreamId::kDistances,
                          static_cast<std::uint64_t>(realization));
    g.distances_km = sample_distances_km(cfg.num_devices, cfg.distance_min_km,
                                         cfg.distance_max_km, rng);
  }
  return g;
}

std::vector<double> make_shadowing(const SimConfig& cfg, int realization) {
  Rng rng = Rng::stream(cfg.seed, StreamId::kShadowing,
                        static_cast<std::uint64_t>(realization));
  return sample_shadowing_db(cfg.num_devices, cfg.shadow_std_db, rng);
}

/// Minimal constants for reporting H_n when the full gap-bound machinery is
/// off. Uses the configured r directly.
BoundConstants reporting_consts(const SimConfig& cfg) {
  BoundConstants c;
  c.model_norm_bound = cfg.bound_r > 0.0 ? cfg.bound_r : 1.0;
  c.num_models = cfg.num_models;
  c.num_devices = cfg.num_devices;
  c.sigma2_u_tilde =
      cfg.sigma2_ul_effective() * static_cast<double>(cfg.d_max()) / 2.0;
  return c;
}

struct RealizationOutput {
  std::vector<MetricsRecord> records;
  std::vector<TraceRow> trace;
  std::vector<AuditRow> audit;
};

/// One communication round with an explicit slot -> data-model mapping.
/// Slots are the schedule's model indices; `active[slot-1]` names the data
/// model each slot trains (identity for the multimodel pipeline, a single
/// entry for the sequential baseline).
std::vector<Eigen::VectorXd> run_round_mapped(
    const SimConfig& cfg, const TrainingData& data,
    const std::vector<Eigen::VectorXd>& globals, const Schedule& schedule,
    const ChannelSet* channels, const BeamformerState* state, int d_max,
    bool ideal, int realization, int round_t, const std::vector<int>& active,
    std::vector<AuditRow>* audit_sink) {
  const int slots = schedule.num_models;
  std::vector<int> slot_dims(static_cast<std::size_t>(slots));
  for (int s = 1; s <= slots; ++s) {
    slot_dims[static_cast<std::size_t>(s - 1)] =
        data.models[static_cast<std::size_t>(active[static_cast<std::size_t>(s - 1)] - 1)]
            .dim();
  }

  Rng rng_place = Rng::stream(cfg.seed, StreamId::kPlacement,
                              static_cast<std::uint64_t>(realization),
                              static_cast<std::uint64_t>(round_t));
  const std::vector<int> offsets =
      place_models(schedule, round_t, slot_dims, d_max, rng_place);

  // Downlink broadcast, group by group in order.
  Rng rng_dl = Rng::stream(cfg.seed, StreamId::kDownlinkNoise,
                           static_cast<std::uint64_t>(realization),
                           static_cast<std::uint64_t>(round_t));
  const double sigma2_dl = cfg.sigma2_dl_effective();
  std::vector<Eigen::VectorXd> locals(
      static_cast<std::size_t>(schedule.num_devices));
  for (int i = 1; i <= slots; ++i) {
    const int slot = schedule.assigned_model(i, round_t);
    const int model_id = active[static_cast<std::size_t>(slot - 1)];
    const Model& model = data.models[static_cast<std::size_t>(model_id - 1)];
    const Dataset& train = *data.train[static_cast<std::size_t>(model_id - 1)];
    const auto& shards = data.partitions[static_cast<std::size_t>(model_id - 1)];
    const auto& members = schedule.group(i);

    std::vector<Eigen::VectorXd> received;
    if (ideal) {
      received.assign(members.size(),
                      globals[static_cast<std::size_t>(slot - 1)]);
    } else {
      received = downlink_broadcast(globals[static_cast<std::size_t>(slot - 1)],
                                    sigma2_dl,
                                    static_cast<int>(members.size()), rng_dl);
    }
    for (std::size_t idx = 0; idx < members.size(); ++idx) {
      const int device = members[idx];
      Rng rng_sgd = Rng::stream(cfg.seed, StreamId::kMinibatch,
                                static_cast<std::uint64_t>(realization),
                                static_cast<std::uint64_t>(round_t),
                                static_cast<std::uint64_t>(device));
      locals[static_cast<std::size_t>(device)] = local_sgd(
          model, received[idx], train,
          shards[static_cast<std::size_t>(device)], cfg.local_iterations,
          cfg.batch_size, cfg.eta_for_round(round_t, slots), rng_sgd);
    }
  }

  AggregationResult agg;
  if (ideal) {
    agg = ideal_aggregate(locals, schedule, round_t, slot_dims);
  } else {
    Rng rng_ul = Rng::stream(cfg.seed, StreamId::kUplinkNoise,
                             static_cast<std::uint64_t>(realization),
                             static_cast<std::uint64_t>(round_t));
    agg = uplink_aggregate(locals, *state, *channels, schedule, round_t,
                           offsets, slot_dims, d_max,
                           cfg.sigma2_ul_effective(), rng_ul);
  }

  if (audit_sink != nullptr) {
    const int frame = channels != nullptr ? channels->frame_index
                                          : round_t / std::max(slots, 1);
    for (int i = 1; i <= slots; ++i) {
      const int slot = schedule.assigned_model(i, round_t);
      const auto& diag = agg.diagnostics[static_cast<std::size_t>(i - 1)];
      audit_sink->push_back({realization, frame, round_t, i,
                             active[static_cast<std::size_t>(slot - 1)],
                             diag.signal_power, diag.interference_power,
                             diag.noise_power});
    }
  }
  return agg.global_models;
}

double elapsed_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

/// Reruns a failing step's exception with (frame, round) context, preserving
/// the error category.
template <typename Fn>
auto with_context(int frame, int round, Fn&& fn) {
  const auto where = [&] {
    return "frame " + std::to_string(frame) + " round " +
           std::to_string(round) + ": ";
  };
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(where() + e.what());
  } catch (const FormatError& e) {
    throw FormatError(where() + e.what());
  } catch (const DomainError& e) {
    throw DomainError(where() + e.what());
  } catch (const DegenerateError& e) {
    throw DegenerateError(where() + e.what());
  }
}

/// Shared realization loop for the multimodel and ideal pipelines.
RealizationOutput run_realization_multimodel(const SimConfig& cfg,
                                             const TrainingData& data,
                                             const BoundConstants* consts,
                                             int realization, bool ideal) {
  const auto start = std::chrono::steady_clock::now();
  const int m = cfg.num_models;
  const int d_max = cfg.d_max();
  const Eigen::VectorXd caps = cfg.power_caps();
  const BoundConstants report = reporting_consts(cfg);

  Geometry geometry;
  std::vector<double> shadowing;
  if (!ideal) {
    geometry = make_geometry(cfg, realization);
    shadowing = make_shadowing(cfg, realization);
  }

  std::vector<Eigen::VectorXd> globals;
  for (int mm = 1; mm <= m; ++mm) {
    globals.push_back(Eigen::VectorXd::Zero(
        data.models[static_cast<std::size_t>(mm - 1)].dim()));
  }
  std::vector<int> active(static_cast<std::size_t>(m));
  std::iota(active.begin(), active.end(), 1);
  std::vector<double> best(static_cast<std::size_t>(m), -1.0);
  std::vector<double> h_values;

  RealizationOutput out;
  const int frames = cfg.frames();
  for (int frame = 0; frame < frames; ++frame) {
    const int first_round = frame * m;
    const int last_round = std::min((frame + 1) * m, cfg.rounds);

    Rng rng_part = Rng::stream(cfg.seed, StreamId::kPartition,
                               static_cast<std::uint64_t>(realization),
                               static_cast<std::uint64_t>(frame));
    const Schedule schedule =
        partition_devices(cfg.num_devices, m, rng_part, frame);

    ChannelSet channels;
    BeamformerState state;
    double obj_p3 = kMissing;
    double h_n = kMissing;
    if (!ideal) {
      Rng rng_chan = Rng::stream(cfg.seed, StreamId::kChannels,
                                 static_cast<std::uint64_t>(realization),
                                 static_cast<std::uint64_t>(frame));
      channels = sample_channels(geometry, shadowing, cfg.num_antennas, frame,
                                 cfg.sigma2_ul_effective(),
                                 cfg.sigma2_dl_effective(), rng_chan);
      BcdResult bcd = with_context(frame, first_round, [&] {
        return bcd_solve(channels, schedule, caps, d_max, std::nullopt,
                         {cfg.bcd_tol, cfg.bcd_max_iter});
      });
      state = std::move(bcd.state);
      obj_p3 = bcd.trace.back().obj_p3;
      h_n = h_term(state, channels, schedule,
                   consts != nullptr ? *consts : report);
      h_values.push_back(h_n);
      if (cfg.solver_trace) {
        for (const auto& it : bcd.trace) {
          out.trace.push_back(
              {realization, frame, it.iteration, it.obj_p3, it.obj_p2});
        }
      }
    }

    for (int t = first_round; t < last_round; ++t) {
      globals = with_context(frame, t, [&] {
        return run_round_mapped(cfg, data, globals, schedule,
                                ideal ? nullptr : &channels,
                                ideal ? nullptr : &state, d_max, ideal,
                                realization, t, active,
                                cfg.audit ? &out.audit : nullptr);
      });
      const bool frame_complete = t == (frame + 1) * m - 1;
      const double ms = cfg.timing ? elapsed_since(start) : kMissing;
      for (int mm = 1; mm <= m; ++mm) {
        const double acc = test_accuracy(
            data.models[static_cast<std::size_t>(mm - 1)],
            globals[static_cast<std::size_t>(mm - 1)],
            *data.test[static_cast<std::size_t>(mm - 1)]);
        best[static_cast<std::size_t>(mm - 1)] =
            std::max(best[static_cast<std::size_t>(mm - 1)], acc);
        double gap = kMissing;
        if (!ideal && consts != nullptr && frame_complete) {
          gap = gap_bound(h_values, *consts, frame + 1, mm);
        }
        out.records.push_back({cfg.scheme, realization, frame, t, mm, acc,
                               best[static_cast<std::size_t>(mm - 1)], obj_p3,
                               h_n, gap, ms});
      }
    }
  }
  return out;
}

RealizationOutput run_realization_seqn(const SimConfig& cfg,
                                       const TrainingData& data,
                                       int realization) {
  const auto start = std::chrono::steady_clock::now();
  const int m = cfg.num_models;
  const int d_max = cfg.d_max();
  const Eigen::VectorXd caps = cfg.power_caps();

  const Geometry geometry = make_geometry(cfg, realization);
  const std::vector<double> shadowing = make_shadowing(cfg, realization);

  std::vector<Eigen::VectorXd> globals;
  std::vector<double> last_acc(static_cast<std::size_t>(m), 0.0);
  std::vector<double> best(static_cast<std::size_t>(m), -1.0);
  for (int mm = 1; mm <= m; ++mm) {
    globals.push_back(Eigen::VectorXd::Zero(
        data.models[static_cast<std::size_t>(mm - 1)].dim()));
    last_acc[static_cast<std::size_t>(mm - 1)] = test_accuracy(
        data.models[static_cast<std::size_t>(mm - 1)],
        globals[static_cast<std::size_t>(mm - 1)],
        *data.test[static_cast<std::size_t>(mm - 1)]);
  }

  // Round budgets per model, as even as the total allows (ceil first).
  const int base = cfg.rounds / m;
  const int extra = cfg.rounds % m;

  RealizationOutput out;
  int t = 0;
  for (int phase = 1; phase <= m; ++phase) {
    const int budget = base + (phase <= extra ? 1 : 0);
    for (int step = 0; step < budget; ++step, ++t) {
      // Single-model FL: every round is its own frame with all K devices.
      Rng rng_part = Rng::stream(cfg.seed, StreamId::kPartition,
                                 static_cast<std::uint64_t>(realization),
                                 static_cast<std::uint64_t>(t));
      const Schedule schedule =
          partition_devices(cfg.num_devices, 1, rng_part, t);
      Rng rng_chan = Rng::stream(cfg.seed, StreamId::kChannels,
                                 static_cast<std::uint64_t>(realization),
                                 static_cast<std::uint64_t>(t));
      const ChannelSet channels = sample_channels(
          geometry, shadowing, cfg.num_antennas, t, cfg.sigma2_ul_effective(),
          cfg.sigma2_dl_effective(), rng_chan);
      const BeamformerState state = snr_max_beamformer(channels, caps, d_max);
      const NormalizedChannels nch = NormalizedChannels::build(channels, d_max);
      const double obj_p3 = objective_p3(state, nch, schedule);

      std::vector<Eigen::VectorXd> phase_globals = {
          globals[static_cast<std::size_t>(phase - 1)]};
      phase_globals = run_round_mapped(cfg, data, phase_globals, schedule,
                                       &channels, &state, d_max, false,
                                       realization, t, {phase},
                                       cfg.audit ? &out.audit : nullptr);
      globals[static_cast<std::size_t>(phase - 1)] = phase_globals.front();
      last_acc[static_cast<std::size_t>(phase - 1)] = test_accuracy(
          data.models[static_cast<std::size_t>(phase - 1)],
          globals[static_cast<std::size_t>(phase - 1)],
          *data.test[static_cast<std::size_t>(phase - 1)]);

      const double ms = cfg.timing ? elapsed_since(start) : kMissing;
      for (int mm = 1; mm <= m; ++mm) {
        const double acc = last_acc[static_cast<std::size_t>(mm - 1)];
        best[static_cast<std::size_t>(mm - 1)] =
            std::max(best[static_cast<std::size_t>(mm - 1)], acc);
        out.records.push_back({cfg.scheme, realization, t, t, mm, acc,
                               best[static_cast<std::size_t>(mm - 1)],
                               mm == phase ? obj_p3 : kMissing, kMissing,
                               kMissing, ms});
      }
    }
  }
  return out;
}

RunArtifacts run_parallel(
    const SimConfig& cfg,
    const std::function<RealizationOutput(int)>& runner) {
  const int n = cfg.realizations;
  std::vector<RealizationOutput> results(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  int workers = cfg.threads > 0
                    ? cfg.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, n);

  auto work = [&] {
    while (true) {
      const int r = next.fetch_add(1);
      if (r >= n) return;
      try {
        results[static_cast<std::size_t>(r)] = runner(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  RunArtifacts merged;
  for (auto& r : results) {
    merged.records.insert(merged.records.end(), r.records.begin(),
                          r.records.end());
    merged.trace.insert(merged.trace.end(), r.trace.begin(), r.trace.end());
    merged.audit.insert(merged.audit.end(), r.audit.begin(), r.audit.end());
  }
  return merged;
}

}  // namespace

std::vector<Eigen::VectorXd> run_round(
    const SimConfig& cfg, const TrainingData& data,
    const std::vector<Eigen::VectorXd>& globals, const Schedule& schedule,
    const ChannelSet* channels, const BeamformerState* state, int d_max,
    bool ideal, int realization, int round_t,
    std::vector<AuditRow>* audit_sink) {
  std::vector<int> active(static_cast<std::size_t>(schedule.num_models));
  std::iota(active.begin(), active.end(), 1);
  return run_round_mapped(cfg, data, globals, schedule, channels, state, d_max,
                          ideal, realization, round_t, active, audit_sink);
}

TrainingData build_training_data(const SimConfig& cfg) {
  TrainingData data;
  for (int m = 1; m <= cfg.num_models; ++m) {
    data.models.push_back(cfg.model(m));
  }
  if (cfg.dataset == "synthetic") {
    for (int m = 1; m <= cfg.num_models; ++m) {
      Rng rng = Rng::stream(cfg.seed, StreamId::kDataset,
                            static_cast<std::uint64_t>(m));
      // Train and test come from one draw so both halves share class means.
      const Dataset combined = make_synthetic(
          cfg.classes, cfg.feature_dims[static_cast<std::size_t>(m - 1)],
          cfg.synth_train + cfg.synth_test, cfg.synth_margin, rng);
      auto train = std::make_shared<Dataset>();
      train->num_classes = cfg.classes;
      train->features = combined.features.topRows(cfg.synth_train);
      train->labels.assign(combined.labels.begin(),
                           combined.labels.begin() + cfg.synth_train);
      auto test = std::make_shared<Dataset>();
      test->num_classes = cfg.classes;
      test->features = combined.features.bottomRows(cfg.synth_test);
      test->labels.assign(combined.labels.begin() + cfg.synth_train,
                          combined.labels.end());
      data.train.push_back(std::move(train));
      data.test.push_back(std::move(test));
    }
  } else {
    auto train = std::make_shared<Dataset>(
        load_mnist_idx(cfg.mnist_train_images, cfg.mnist_train_labels));
    auto test = std::make_shared<Dataset>(
        load_mnist_idx(cfg.mnist_test_images, cfg.mnist_test_labels));
    for (int m = 1; m <= cfg.num_models; ++m) {
      data.train.push_back(train);
      data.test.push_back(test);
    }
  }
  for (int m = 1; m <= cfg.num_models; ++m) {
    Rng rng = Rng::stream(cfg.seed, StreamId::kDataSplit,
                          static_cast<std::uint64_t>(m));
    data.partitions.push_back(partition_evenly(
        data.train[static_cast<std::size_t>(m - 1)]->num_samples(),
        cfg.num_devices, rng));
  }
  return data;
}

RunArtifacts run_multimodel(const SimConfig& cfg) {
  SimConfig local = cfg;
  local.scheme = "multimodel";
  const TrainingData data = build_training_data(local);
  BoundConstants consts;
  const bool with_bound = local.compute_gap_bound;
  if (with_bound) consts = build_bound_constants(local, data);
  return run_parallel(local, [&](int r) {
    return run_realization_multimodel(local, data,
                                      with_bound ? &consts : nullptr, r,
                                      /*ideal=*/false);
  });
}

RunArtifacts run_ideal(const SimConfig& cfg) {
  SimConfig local = cfg;
  local.scheme = "ideal";
  const TrainingData data = build_training_data(local);
  return run_parallel(local, [&](int r) {
    return run_realization_multimodel(local, data, nullptr, r, /*ideal=*/true);
  });
}

RunArtifacts run_seqnmodel(const SimConfig& cfg) {
  SimConfig local = cfg;
  local.scheme = "seqnmodel";
  const TrainingData data = build_training_data(local);
  return run_parallel(
      local, [&](int r) { return run_realization_seqn(local, data, r); });
}

RunArtifacts run_scheme(const SimConfig& cfg) {
  if (cfg.scheme == "multimodel") return run_multimodel(cfg);
  if (cfg.scheme == "ideal") return run_ideal(cfg);
  if (cfg.scheme == "seqnmodel") return run_seqnmodel(cfg);
  throw ConfigError("unknown scheme '" + cfg.scheme + "'");
}

std::vector<SummaryRow> aggregate_metrics(
    const std::vector<MetricsRecord>& records) {
  std::map<std::tuple<std::string, int, int>, std::vector<double>> groups;
  for (const auto& rec : records) {
    groups[{rec.scheme, rec.round, rec.model}].push_back(rec.best_accuracy);
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, values] : groups) {
    SummaryRow row;
    row.scheme = std::get<0>(key);
    row.round = std::get<1>(key);
    row.model = std::get<2>(key);
    row.count = static_cast<int>(values.size());
    const double mean =
        std::accumulate(values.begin(), values.end(), 0.0) /
        static_cast<double>(values.size());
    row.mean_best_accuracy = mean;
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
      row.ci90_halfwidth =
          1.645 * sd / std::sqrt(static_cast<double>(values.size()));
    } else {
      row.ci90_halfwidth = 0.0;
      row.single_realization = true;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
  std::string out(kMetricsHeader);
  out.push_back('\n');
  for (const auto& rec : records) {
    std::string line = rec.scheme;
    line += ',' + std::to_string(rec.realization);
    line += ',' + std::to_string(rec.frame);
    line += ',' + std::to_string(rec.round);
    line += ',' + std::to_string(rec.model);
    append_field(line, rec.accuracy);
    append_field(line, rec.best_accuracy);
    append_field(line, rec.obj_p3);
    append_field(line, rec.h_term);
    append_field(line, rec.gap_bound);
    append_field(line, rec.elapsed_ms);
    line.push_back('\n');
    out += line;
  }
  return out;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << metrics_to_csv(records);
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw FormatError("'" + path + "': unexpected header, want '" +
                      kMetricsHeader + "'");
  }
  std::vector<MetricsRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    // A row ending in ',' loses exactly one trailing empty field.
    if (fields.size() == 10 && !line.empty() && line.back() == ',') {
      fields.emplace_back();
    }
    if (fields.size() != 11) {
      throw FormatError("'" + path + "' line " + std::to_string(line_no) +
                        ": expected 11 fields, got " +
                        std::to_string(fields.size()));
    }
    auto num = [&](const std::string& f) {
      return f.empty() ? kMissing : std::strtod(f.c_str(), nullptr);
    };
    MetricsRecord rec;
    rec.scheme = fields[0];
    rec.realization = std::atoi(fields[1].c_str());
    rec.frame = std::atoi(fields[2].c_str());
    rec.round = std::atoi(fields[3].c_str());
    rec.model = std::atoi(fields[4].c_str());
    rec.accuracy = num(fields[5]);
    rec.best_accuracy = num(fields[6]);
    rec.obj_p3 = num(fields[7]);
    rec.h_term = num(fields[8]);
    rec.gap_bound = num(fields[9]);
    rec.elapsed_ms = num(fields[10]);
    records.push_back(std::move(rec));
  }
  return records;
}

void write_trace_csv(const std::string& path,
                     const std::vector<TraceRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << "realization,frame,iteration,objective_p3,objective_p2\n";
  for (const auto& r : rows) {
    out << r.realization << ',' << r.frame << ',' << r.iteration << ','
        << format_double(r.obj_p3) << ',' << format_double(r.obj_p2) << '\n';
  }
}

void write_audit_csv(const std::string& path,
                     const std::vector<AuditRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << "realization,frame,round,group,model,signal_power,"
         "interference_power,noise_power\n";
  for (const auto& r : rows) {
    out << r.realization << ',' << r.frame << ',' << r.round << ',' << r.group
        << ',' << r.model << ',' << format_double(r.signal_power) << ','
        << format_double(r.interference_power) << ','
        << format_double(r.noise_power) << '\n';
  }
}

std::string summary_to_string(const std::vector<SummaryRow>& rows) {
  std::string out =
      "scheme       round model     n  mean_best_acc  ci90_halfwidth\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-12s %5d %5d %5d %14.4f %15.4f%s\n",
                  r.scheme.c_str(), r.round, r.model, r.count,
                  r.mean_best_accuracy, r.ci90_halfwidth,
                  r.single_realization ? "  (single realization)" : "");
    out += buf;
  }
  return out;
}

void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << "scheme,round,model,n,mean_best_accuracy,ci90_halfwidth\n";
  for (const auto& r : rows) {
    out << r.scheme << ',' << r.round << ',' << r.model << ',' << r.count
        << ',' << format_double(r.mean_best_accuracy) << ','
        << format_double(r.ci90_halfwidth) << '\n';
  }
}

BoundConstants build_bound_constants(const SimConfig& cfg,
                                     const TrainingData& data) {
  BoundConstants consts;
  consts.local_iterations = cfg.local_iterations;
  consts.num_models = cfg.num_models;
  consts.num_devices = cfg.num_devices;
  consts.eta = cfg.eta;
  consts.device_weights.assign(static_cast<std::size_t>(cfg.num_devices),
                               1.0 / static_cast<double>(cfg.num_devices));
  const double d_max = static_cast<double>(cfg.d_max());
  consts.sigma2_d_tilde = cfg.sigma2_dl_effective() * d_max / 2.0;
  consts.sigma2_u_tilde = cfg.sigma2_ul_effective() * d_max / 2.0;

  // One (L, lambda) pair covering every model: the largest smoothness and the
  // shared regularization strength.
  consts.strong_convexity = cfg.l2_reg;
  for (int m = 1; m <= cfg.num_models; ++m) {
    const auto k = logistic_constants(
        data.models[static_cast<std::size_t>(m - 1)],
        *data.train[static_cast<std::size_t>(m - 1)]);
    consts.smoothness = std::max(consts.smoothness, k.smoothness);
  }

  // Reference optima by a deterministic full-batch run; the initial gap is
  // measured from the zero initialization.
  for (int m = 1; m <= cfg.num_models; ++m) {
    const Eigen::VectorXd star = minimize_full_batch(
        data.models[static_cast<std::size_t>(m - 1)],
        *data.train[static_cast<std::size_t>(m - 1)]);
    consts.initial_gap.push_back(star.squaredNorm());
  }

  const bool need_r = !(cfg.bound_r > 0.0);
  const bool need_phi = cfg.bound_phi < 0.0;
  const bool need_delta = cfg.bound_delta < 0.0;
  consts.model_norm_bound = need_r ? 0.0 : cfg.bound_r;
  consts.gradient_divergence = need_phi ? 0.0 : cfg.bound_phi;
  consts.minibatch_variance = need_delta ? 0.0 : cfg.bound_delta;
  if (!need_r && !need_phi && !need_delta) return consts;

  // Calibration pass: an error-free training run on realization-0 streams,
  // sampling model norms and gradient divergences along the way.
  double max_norm2 = 0.0;
  double max_phi = 0.0;
  double max_delta = 0.0;
  std::vector<Eigen::VectorXd> globals;
  for (int m = 1; m <= cfg.num_models; ++m) {
    globals.push_back(Eigen::VectorXd::Zero(
        data.models[static_cast<std::size_t>(m - 1)].dim()));
  }
  const int frames = cfg.frames();
  for (int frame = 0; frame < frames; ++frame) {
    Rng rng_part = Rng::stream(cfg.seed, StreamId::kPartition, 0,
                               static_cast<std::uint64_t>(frame));
    const Schedule schedule =
        partition_devices(cfg.num_devices, cfg.num_models, rng_part, frame);
    const int last_round = std::min((frame + 1) * cfg.num_models, cfg.rounds);
    for (int t = frame * cfg.num_models; t < last_round; ++t) {
      std::vector<Eigen::VectorXd> locals(
          static_cast<std::size_t>(cfg.num_devices));
      std::vector<int> slot_dims;
      for (int mm = 1; mm <= cfg.num_models; ++mm) {
        slot_dims.push_back(
            data.models[static_cast<std::size_t>(mm - 1)].dim());
      }
      for (int i = 1; i <= cfg.num_models; ++i) {
        const int mm = schedule.assigned_model(i, t);
        const Model& model = data.models[static_cast<std::size_t>(mm - 1)];
        const Dataset& train = *data.train[static_cast<std::size_t>(mm - 1)];
        const auto& shards =
            data.partitions[static_cast<std::size_t>(mm - 1)];
        std::vector<int> all(static_cast<std::size_t>(train.num_samples()));
        std::iota(all.begin(), all.end(), 0);
        const LossGrad global_grad = sample_loss_grad(
            model, globals[static_cast<std::size_t>(mm - 1)], train, all);

        Eigen::VectorXd local_grad_mean =
            Eigen::VectorXd::Zero(model.dim());
        for (int device : schedule.group(i)) {
          Rng rng_sgd = Rng::stream(cfg.seed, StreamId::kMinibatch, 0,
                                    static_cast<std::uint64_t>(t),
                                    static_cast<std::uint64_t>(device));
          Eigen::VectorXd theta = globals[static_cast<std::size_t>(mm - 1)];
          const auto& shard = shards[static_cast<std::size_t>(device)];
          std::vector<int> order(shard.begin(), shard.end());
          std::size_t pos = order.size();
          for (int step = 0; step < cfg.local_iterations; ++step) {
            if (pos >= order.size()) {
              rng_sgd.shuffle(order);
              pos = 0;
            }
            const std::size_t take = std::min(
                static_cast<std::size_t>(cfg.batch_size), order.size() - pos);
            const std::vector<int> batch(
                order.begin() + static_cast<std::ptrdiff_t>(pos),
                order.begin() + static_cast<std::ptrdiff_t>(pos + take));
            pos += take;
            const LossGrad shard_grad =
                sample_loss_grad(model, theta, train, shard);
            const LossGrad batch_grad =
                sample_loss_grad(model, theta, train, batch);
            max_delta = std::max(
                max_delta, (shard_grad.grad - batch_grad.grad).squaredNorm());
            if (step + 1 == cfg.local_iterations) {
              local_grad_mean += shard_grad.grad;
            }
            theta -= cfg.eta_for_round(t, cfg.num_models) * batch_grad.grad;
          }
          max_norm2 = std::max(max_norm2, theta.squaredNorm());
          locals[static_cast<std::size_t>(device)] = std::move(theta);
        }
        local_grad_mean /= static_cast<double>(schedule.group_size());
        max_phi = std::max(
            max_phi, (global_grad.grad - local_grad_mean).squaredNorm());
      }
      for (int i = 1; i <= cfg.num_models; ++i) {
        const int mm = schedule.assigned_model(i, t);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(
            data.models[static_cast<std::size_t>(mm - 1)].dim());
        for (int device : schedule.group(i)) {
          mean += locals[static_cast<std::size_t>(device)];
        }
        globals[static_cast<std::size_t>(mm - 1)] =
            mean / static_cast<double>(schedule.group_size());
      }
    }
  }
  if (need_r) consts.model_norm_bound = 1.5 * max_norm2;
  if (need_phi) consts.gradient_divergence = max_phi;
  if (need_delta) consts.minibatch_variance = max_delta;
  return consts;
}

}  // namespace mmfl
