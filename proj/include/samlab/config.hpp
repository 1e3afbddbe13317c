#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "samlab/diagnostics.hpp"
#include "samlab/ensemble.hpp"
#include "samlab/sam.hpp"
#include "samlab/sampling.hpp"
#include "samlab/schedules.hpp"

namespace samlab {

using Json = nlohmann::json;

struct EnsembleConfig {
  EnsembleKind kind = EnsembleKind::quadratic;
  QuadraticOptions quadratic;
  TinyMlpOptions mlp;
};

struct LrConfig {
  LrKind kind = LrKind::constant;
  double lo = 0.0;
  /// Peak rate; the constant schedule's rate.
  double hi = 0.1;
  std::int64_t warmup_epochs = 0;
  double init_lr = 0.0;
};

enum class BoundTracking { off, cadence, every_step };

struct DiagnosticsConfig {
  /// Full-gradient columns every `every` steps plus the last; 0 = ceil(T/200).
  std::int64_t every = 0;
  /// Monte-Carlo noise trials per sampled step; 0 disables the estimate.
  std::int64_t noise_trials = 0;
  BoundTracking grad_bounds = BoundTracking::cadence;
  /// Also record f_S(x_t + eps_t) on sampled steps.
  bool perturbed_loss = false;
  bool sharpness = true;
  SharpnessSpec sharpness_spec;
  double epsilon = 1e-2;
};

struct RunConfig {
  EnsembleConfig ensemble;
  SamConfig sam;
  SamplingMode sampling = SamplingMode::with_replacement;
  std::vector<BatchStage> stages{{32, 10}};
  LrConfig lr;
  std::int64_t epochs = 10;
  std::vector<std::uint64_t> seeds{1};
  DiagnosticsConfig diagnostics;
  std::string output_dir = "out";

  /// Throws ConfigError when the schedule does not cover `epochs`, a batch
  /// size exceeds n, or any component is invalid.
  void validate() const;
  std::size_t sample_count() const;
};

/// Parses a config object. Unknown keys are rejected; absent keys keep their
/// defaults. Throws ConfigError.
RunConfig parse_config(const Json& j);
RunConfig load_config(const std::string& path);

/// Complete JSON form of a config (every key present, keys sorted).
Json to_json(const RunConfig& cfg);

/// FNV-1a of the canonical JSON, ignoring seeds and output_dir, as 16 hex
/// digits.
std::string config_hash(const RunConfig& cfg);

std::shared_ptr<const LossEnsemble> make_ensemble(const EnsembleConfig& cfg);
BatchSchedule make_batch_schedule(const RunConfig& cfg);
/// Learning-rate schedule over the run; cosine uses K from the first stage
/// and E = epochs, linear uses T = total_steps.
LrSchedule make_lr_schedule(const RunConfig& cfg, const BatchSchedule& sched);

/// Dotted leaf paths of the canonical config (arrays are leaves).
std::vector<std::string> config_keys();

/// Sets a dotted key on a config JSON object. Throws ConfigError listing
/// the valid keys when the key is unknown.
void set_config_key(Json& j, const std::string& key, const Json& value);

/// Parses a grid value: JSON when it parses, a plain string otherwise.
Json parse_grid_value(const std::string& text);

}  // namespace samlab
