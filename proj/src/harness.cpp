#include "samlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "samlab/parallel.hpp"

namespace samlab {

NormSeries RunTrace::sam_grad_norms() const {
  NormSeries s;
  for (const auto& r : records) {
    if (r.sam_grad_norm) {
      s.steps.push_back(r.step);
      s.norms.push_back(*r.sam_grad_norm);
    }
  }
  return s;
}

RunTrace run(const RunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto ens = make_ensemble(cfg.ensemble);
  return run(cfg, *ens, seed);
}

RunTrace run(const RunConfig& cfg, const LossEnsemble& ens, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  if (ens.size() != cfg.sample_count()) {
    throw ConfigError("ensemble size does not match ensemble.n");
  }
  const BatchSchedule sched = make_batch_schedule(cfg);
  const LrSchedule lr = make_lr_schedule(cfg, sched);
  const std::int64_t T = total_steps(sched);
  const auto& diag = cfg.diagnostics;
  const std::int64_t every = diag.every > 0 ? diag.every : (T + 199) / 200;

  RunTrace trace;
  trace.config_hash = config_hash(cfg);
  trace.seed = seed;
  trace.sampling = cfg.sampling;
  trace.records.reserve(static_cast<std::size_t>(T));

  BatchSampler sampler(ens.size(), cfg.sampling, make_rng(seed, Stream::batch));
  BaseUpdate update(cfg.sam);
  ParamVector x = ens.initial_point();
  GradBoundEstimates bounds;

  std::int64_t t = 0;
  for (std::int64_t epoch = 0; epoch < sched.total_epochs(); ++epoch) {
    const auto b = static_cast<std::size_t>(batch_at(sched, epoch));
    const std::int64_t K = steps_in_epoch(sched, epoch);
    sampler.begin_epoch();
    for (std::int64_t k = 0; k < K; ++k, ++t) {
      const MiniBatch batch = sampler.next(b);
      const double eta = lr.at(t, epoch);
      const DirectionParts parts = direction_parts(ens, x, batch.indices, cfg.sam);

      StepRecord rec;
      rec.step = t;
      rec.epoch = epoch;
      rec.batch_size = static_cast<std::int64_t>(b);
      rec.lr = eta;
      rec.minibatch_loss = ens.mean_value(batch.indices, x);

      const bool sampled = t % every == 0 || t == T - 1;
      const bool track = diag.grad_bounds == BoundTracking::every_step ||
                         (diag.grad_bounds == BoundTracking::cadence && sampled);
      if (sampled || track) {
        const ParamVector full_sam = full_sam_gradient(ens, x, cfg.sam);
        if (track) bounds = grad_bound_update(bounds, ens, x, parts, full_sam);
        if (sampled) {
          rec.full_loss = full_loss(ens, x);
          rec.sam_grad_norm = full_sam.norm();
          rec.noise_norm = noise_sample(full_sam, parts, cfg.sam, eta).eta_times_norm;
          if (diag.noise_trials > 0) {
            const McEstimate mc = mc_noise_norm(
                ens, x, b, cfg.sam, eta, diag.noise_trials,
                derive_seed(seed, Stream::diagnostics, static_cast<std::uint64_t>(t)));
            rec.noise_mean = mc.mean;
            rec.noise_se = mc.std_error;
          }
          if (diag.grad_bounds != BoundTracking::off) {
            rec.g_hat = bounds.g_hat;
            rec.g_perp_hat = bounds.g_perp_hat;
          }
          if (diag.perturbed_loss) {
            rec.perturbed_loss = full_loss(ens, x + parts.perturbation);
          }
        }
      }
      trace.records.push_back(std::move(rec));
      x = update.step(x, parts.direction, eta);
    }
  }

  trace.final_x = x;
  trace.final_loss = full_loss(ens, x);
  trace.final_sam_grad_norm = full_sam_gradient(ens, x, cfg.sam).norm();
  trace.heldout_loss = ens.heldout_loss(x);
  if (diag.sharpness) {
    trace.sharpness = adaptive_sharpness(ens, x, diag.sharpness_spec,
                                         derive_seed(seed, Stream::sharpness));
  }
  trace.grad_bounds = bounds;
  trace.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return trace;
}

std::vector<RunTrace> run_all(const RunConfig& cfg) {
  cfg.validate();
  const auto ens = make_ensemble(cfg.ensemble);
  std::vector<RunTrace> traces(cfg.seeds.size());
  parallel_for(static_cast<std::int64_t>(cfg.seeds.size()), [&](std::int64_t i) {
    const auto k = static_cast<std::size_t>(i);
    traces[k] = run(cfg, *ens, cfg.seeds[k]);
  });
  return traces;
}

ConvergenceVerdict convergence_verdict(std::span<const RunTrace> traces,
                                       double epsilon) {
  std::vector<NormSeries> series;
  for (const auto& t : traces) series.push_back(t.sam_grad_norms());
  return convergence_verdict(std::span<const NormSeries>(series), epsilon);
}

const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> names{
      "epoch",    "batch_size",    "lr",         "minibatch_loss",
      "full_loss", "sam_grad_norm", "noise_norm", "noise_mean",
      "noise_se", "G_hat",          "G_perp_hat"};
  return names;
}

std::optional<double> column_value(const StepRecord& r, std::size_t column) {
  switch (column) {
    case 0:
      return static_cast<double>(r.epoch);
    case 1:
      return static_cast<double>(r.batch_size);
    case 2:
      return r.lr;
    case 3:
      return r.minibatch_loss;
    case 4:
      return r.full_loss;
    case 5:
      return r.sam_grad_norm;
    case 6:
      return r.noise_norm;
    case 7:
      return r.noise_mean;
    case 8:
      return r.noise_se;
    case 9:
      return r.g_hat;
    case 10:
      return r.g_perp_hat;
  }
  throw Error("column index out of range");
}

AggregateTable aggregate_runs(std::span<const RunTrace> traces) {
  if (traces.empty()) throw Error("aggregate_runs: no traces");
  const auto& first = traces.front();
  for (const auto& t : traces) {
    if (t.config_hash != first.config_hash) {
      throw Error("aggregate_runs: traces come from different configs (" +
                  first.config_hash + " vs " + t.config_hash + ")");
    }
    if (t.records.size() != first.records.size()) {
      throw Error("aggregate_runs: traces differ in record count");
    }
  }

  AggregateTable out;
  out.config_hash = first.config_hash;
  const std::size_t rows = first.records.size();
  const double m = static_cast<double>(traces.size());
  for (const auto& t : traces) out.seeds.push_back(t.seed);
  for (const auto& r : first.records) out.steps.push_back(r.step);

  const auto& names = trace_columns();
  for (std::size_t c = 0; c < names.size(); ++c) {
    AggregateColumn col;
    col.name = names[c];
    col.mean.resize(rows);
    col.min.resize(rows);
    col.max.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      double sum = 0.0, lo = 0.0, hi = 0.0;
      bool complete = true;
      for (std::size_t k = 0; k < traces.size(); ++k) {
        const auto v = column_value(traces[k].records[i], c);
        if (!v) {
          complete = false;
          break;
        }
        sum += *v;
        lo = k == 0 ? *v : std::min(lo, *v);
        hi = k == 0 ? *v : std::max(hi, *v);
      }
      if (!complete) continue;
      col.mean[i] = sum / m;
      col.min[i] = lo;
      col.max[i] = hi;
    }
    out.columns.push_back(std::move(col));
  }

  double loss = 0.0, sharp = 0.0, held = 0.0;
  bool has_sharp = true, has_held = true;
  for (const auto& t : traces) {
    loss += t.final_loss;
    if (t.sharpness) sharp += *t.sharpness; else has_sharp = false;
    if (t.heldout_loss) held += *t.heldout_loss; else has_held = false;
  }
  out.mean_terminal_loss = loss / m;
  if (has_sharp) out.mean_sharpness = sharp / m;
  if (has_held) out.mean_heldout_loss = held / m;
  return out;
}

SweepResult sweep(const RunConfig& base,
                  const std::vector<std::pair<std::string, std::vector<Json>>>& grid) {
  base.validate();
  SweepResult result;

  // Expand the Cartesian product, last key varying fastest.
  std::vector<std::map<std::string, Json>> assignments{{}};
  for (const auto& [key, values] : grid) {
    if (values.empty()) throw ConfigError("grid key '" + key + "' has no values");
    std::vector<std::map<std::string, Json>> next;
    for (const auto& a : assignments) {
      for (const auto& v : values) {
        auto b = a;
        b[key] = v;
        next.push_back(std::move(b));
      }
    }
    assignments = std::move(next);
  }

  const Json base_json = to_json(base);
  for (const auto& a : assignments) {
    Json j = base_json;
    for (const auto& [key, value] : a) set_config_key(j, key, value);
    SweepPoint p;
    p.assignment = a;
    p.config = parse_config(j);
    p.traces.resize(p.config.seeds.size());
    result.points.push_back(std::move(p));
  }

  // Flatten (point, seed) pairs so every run can go to its own worker.
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  std::vector<std::shared_ptr<const LossEnsemble>> ensembles;
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    ensembles.push_back(make_ensemble(result.points[i].config.ensemble));
    for (std::size_t s = 0; s < result.points[i].config.seeds.size(); ++s) {
      jobs.emplace_back(i, s);
    }
  }
  parallel_for(static_cast<std::int64_t>(jobs.size()), [&](std::int64_t j) {
    const auto [i, s] = jobs[static_cast<std::size_t>(j)];
    auto& p = result.points[i];
    p.traces[s] = run(p.config, *ensembles[i], p.config.seeds[s]);
  });
  for (auto& p : result.points) p.aggregate = aggregate_runs(p.traces);

  const std::size_t count = result.points.size();
  result.rank_by_loss.resize(count);
  std::iota(result.rank_by_loss.begin(), result.rank_by_loss.end(), std::size_t{0});
  result.rank_by_sharpness = result.rank_by_loss;
  std::stable_sort(result.rank_by_loss.begin(), result.rank_by_loss.end(),
                   [&](std::size_t a, std::size_t b) {
                     return result.points[a].aggregate.mean_terminal_loss <
                            result.points[b].aggregate.mean_terminal_loss;
                   });
  std::stable_sort(result.rank_by_sharpness.begin(), result.rank_by_sharpness.end(),
                   [&](std::size_t a, std::size_t b) {
                     const auto& sa = result.points[a].aggregate.mean_sharpness;
                     const auto& sb = result.points[b].aggregate.mean_sharpness;
                     if (sa && sb) return *sa < *sb;
                     return sa.has_value() && !sb.has_value();
                   });
  return result;
}

}  // namespace samlab
