#pragma once

#include <string>

#include "samlab/harness.hpp"

namespace samlab {

/// Header of the per-step trace CSV.
inline constexpr const char* kTraceHeader =
    "step,epoch,batch_size,lr,minibatch_loss,full_loss,sam_grad_norm,"
    "noise_norm,noise_mean,noise_se,G_hat,G_perp_hat";

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

std::string trace_csv(const RunTrace& trace);
/// step, then <column>_mean, <column>_min, <column>_max for every column.
std::string aggregate_csv(const AggregateTable& table);

Json trace_summary(const RunConfig& cfg, const RunTrace& trace);
Json aggregate_summary(const RunConfig& cfg, const AggregateTable& table,
                       std::span<const RunTrace> traces);
Json sweep_summary(const SweepResult& result);

Json checkpoint_json(const RunTrace& trace);
/// Reads the "x" array of a checkpoint file.
ParamVector load_checkpoint(const std::string& path);

/// Writes text to path, creating parent directories. Throws Error naming
/// the path on failure.
void write_text(const std::string& path, const std::string& text);

}  // namespace samlab
