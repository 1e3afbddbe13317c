#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "samlab/config.hpp"
#include "samlab/theory.hpp"

namespace samlab {

/// One iteration of the training loop, describing x_t before the update.
struct StepRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::int64_t batch_size = 0;
  double lr = 0.0;
  double minibatch_loss = 0.0;
  // Filled on sampled steps only.
  std::optional<double> full_loss;
  std::optional<double> sam_grad_norm;  // ||grad_SAM_S(x_t)||
  std::optional<double> noise_norm;     // eta_t ||omega_t|| for the drawn batch
  std::optional<double> noise_mean;     // Monte-Carlo E[eta_t ||omega_t||]
  std::optional<double> noise_se;
  std::optional<double> g_hat;
  std::optional<double> g_perp_hat;
  std::optional<double> perturbed_loss;  // f_S(x_t + eps_t)
};

struct RunTrace {
  std::string config_hash;
  std::uint64_t seed = 0;
  SamplingMode sampling = SamplingMode::with_replacement;
  std::vector<StepRecord> records;
  ParamVector final_x;
  double final_loss = 0.0;
  double final_sam_grad_norm = 0.0;
  std::optional<double> heldout_loss;
  std::optional<double> sharpness;
  GradBoundEstimates grad_bounds;
  double wall_clock_seconds = 0.0;

  NormSeries sam_grad_norms() const;
};

/// Runs the GSAM loop for one seed. The batch stream is (seed, batch); the
/// diagnostics and sharpness streams are separate, so turning diagnostics on
/// or off never changes the trajectory. Throws DivergenceError with the step
/// index when x leaves the finite range.
RunTrace run(const RunConfig& cfg, std::uint64_t seed);

/// Same, reusing an ensemble built from cfg.ensemble.
RunTrace run(const RunConfig& cfg, const LossEnsemble& ens, std::uint64_t seed);

/// All seeds of cfg, concurrently; traces come back in seed order.
std::vector<RunTrace> run_all(const RunConfig& cfg);

ConvergenceVerdict convergence_verdict(std::span<const RunTrace> traces,
                                       double epsilon);

/// Numeric trace columns in CSV order, without `step`.
const std::vector<std::string>& trace_columns();
std::optional<double> column_value(const StepRecord& r, std::size_t column);

struct AggregateColumn {
  std::string name;
  std::vector<std::optional<double>> mean, min, max;
};

struct AggregateTable {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<std::int64_t> steps;
  std::vector<AggregateColumn> columns;
  double mean_terminal_loss = 0.0;
  std::optional<double> mean_sharpness;
  std::optional<double> mean_heldout_loss;
};

/// Per-step mean, min and max of every column over the traces. A cell is
/// empty unless every trace recorded it. Throws Error on mismatched configs
/// or record counts.
AggregateTable aggregate_runs(std::span<const RunTrace> traces);

struct SweepPoint {
  std::map<std::string, Json> assignment;
  RunConfig config;
  std::vector<RunTrace> traces;
  AggregateTable aggregate;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  /// Point indices ordered by mean terminal full loss, then by mean
  /// sharpness (points without sharpness last).
  std::vector<std::size_t> rank_by_loss;
  std::vector<std::size_t> rank_by_sharpness;
};

/// Cartesian product over grid values applied to the canonical base config,
/// each point run over all seeds. An empty grid is the base run alone.
SweepResult sweep(const RunConfig& base,
                  const std::vector<std::pair<std::string, std::vector<Json>>>& grid);

}  // namespace samlab
