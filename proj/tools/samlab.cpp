// samlab command-line entry point.
//
// Exit codes: 0 success / all checks pass, 1 a check failed or a run
// aborted, 2 bad arguments or config.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "samlab/checks.hpp"
#include "samlab/export.hpp"
#include "samlab/harness.hpp"

namespace fs = std::filesystem;
using namespace samlab;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (part.empty()) continue;
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      seeds.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("invalid seed '" + part + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("--seeds needs at least one integer");
  return seeds;
}

// Splits on commas outside brackets and quotes so JSON lists survive.
std::vector<std::string> split_values(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  bool quoted = false;
  for (char c : text) {
    if (c == '"') quoted = !quoted;
    if (!quoted && (c == '[' || c == '{')) ++depth;
    if (!quoted && (c == ']' || c == '}')) --depth;
    if (c == ',' && depth == 0 && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::pair<std::string, std::vector<Json>> parse_grid(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("grid entry '" + spec + "' must look like KEY=V1,V2");
  }
  std::pair<std::string, std::vector<Json>> out;
  out.first = spec.substr(0, eq);
  for (const auto& v : split_values(spec.substr(eq + 1))) {
    if (v.empty()) throw ConfigError("grid entry '" + spec + "' has an empty value");
    out.second.push_back(parse_grid_value(v));
  }
  return out;
}

std::string path_in(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

int cmd_run(const std::string& config_path, std::string out_dir,
            const std::string& seeds_text) {
  RunConfig cfg = load_config(config_path);
  if (!seeds_text.empty()) cfg.seeds = parse_seeds(seeds_text);
  if (out_dir.empty()) out_dir = cfg.output_dir;
  const std::vector<RunTrace> traces = run_all(cfg);
  for (const auto& t : traces) {
    const std::string tag = "seed" + std::to_string(t.seed);
    write_text(path_in(out_dir, "trace_" + tag + ".csv"), trace_csv(t));
    write_text(path_in(out_dir, "summary_" + tag + ".json"),
               trace_summary(cfg, t).dump(2) + "\n");
    write_text(path_in(out_dir, "checkpoint_" + tag + ".json"),
               checkpoint_json(t).dump() + "\n");
  }
  const AggregateTable agg = aggregate_runs(traces);
  write_text(path_in(out_dir, "aggregate.csv"), aggregate_csv(agg));
  const Json summary = aggregate_summary(cfg, agg, traces);
  write_text(path_in(out_dir, "summary.json"), summary.dump(2) + "\n");

  std::cout << "config " << agg.config_hash << ", " << traces.size() << " seed(s), "
            << agg.steps.size() << " steps\n"
            << "mean terminal loss " << format_double(agg.mean_terminal_loss) << '\n';
  if (agg.mean_sharpness) {
    std::cout << "mean sharpness " << format_double(*agg.mean_sharpness) << '\n';
  }
  const auto& v = summary["verdict"];
  std::cout << "min mean ||grad SAM_S|| " << v["min_sam_grad_norm"].dump() << " at step "
            << v["argmin_step"].dump() << " (epsilon " << v["epsilon"].dump() << ": "
            << (v["achieved"].get<bool>() ? "achieved" : "not achieved") << ")\n"
            << "wrote " << out_dir << '\n';
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& grid_specs,
              std::string out_dir, const std::string& seeds_text) {
  RunConfig cfg = load_config(config_path);
  if (!seeds_text.empty()) cfg.seeds = parse_seeds(seeds_text);
  if (out_dir.empty()) out_dir = cfg.output_dir;
  std::vector<std::pair<std::string, std::vector<Json>>> grid;
  for (const auto& g : grid_specs) grid.push_back(parse_grid(g));
  const SweepResult result = sweep(cfg, grid);
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    write_text(path_in(out_dir, "point" + std::to_string(i) + "_aggregate.csv"),
               aggregate_csv(result.points[i].aggregate));
  }
  write_text(path_in(out_dir, "sweep.json"), sweep_summary(result).dump(2) + "\n");

  std::cout << result.points.size() << " grid point(s)\n"
            << "rank  point  mean_terminal_loss  mean_sharpness  assignment\n";
  for (std::size_t r = 0; r < result.rank_by_loss.size(); ++r) {
    const auto& p = result.points[result.rank_by_loss[r]];
    Json a = Json::object();
    for (const auto& [k, v] : p.assignment) a[k] = v;
    std::cout << r + 1 << "  " << result.rank_by_loss[r] << "  "
              << format_double(p.aggregate.mean_terminal_loss) << "  "
              << (p.aggregate.mean_sharpness ? format_double(*p.aggregate.mean_sharpness)
                                             : std::string("-"))
              << "  " << a.dump() << '\n';
  }
  std::cout << "wrote " << out_dir << '\n';
  return 0;
}

int cmd_check(const std::string& name) {
  std::vector<CheckRow> rows;
  try {
    rows = run_check_group(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (const auto& r : rows) std::cout << format_row(r) << '\n';
  const bool ok = all_passed(rows);
  std::cout << (ok ? "all checks passed" : "some checks failed") << '\n';
  return ok ? 0 : 1;
}

int cmd_sharpness(const std::string& config_path, const std::string& checkpoint,
                  std::uint64_t seed) {
  const RunConfig cfg = load_config(config_path);
  const auto ens = make_ensemble(cfg.ensemble);
  const ParamVector x = load_checkpoint(checkpoint);
  if (static_cast<std::size_t>(x.size()) != ens->dim()) {
    throw ConfigError("checkpoint has " + std::to_string(x.size()) +
                      " parameters but the ensemble expects " + std::to_string(ens->dim()));
  }
  const double s = adaptive_sharpness(*ens, x, cfg.diagnostics.sharpness_spec,
                                      derive_seed(seed, Stream::sharpness));
  const Json out{{"sharpness", s},
                 {"radius", cfg.diagnostics.sharpness_spec.radius},
                 {"full_loss", full_loss(*ens, x)}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GSAM / SAM / SGD laboratory with batch and learning-rate schedules"};
  app.require_subcommand(1);

  std::string config, out, seeds, checkpoint, check_name;
  std::vector<std::string> grid;
  std::uint64_t sharp_seed = 1;

  auto* run_cmd = app.add_subcommand("run", "train over the configured seeds");
  run_cmd->add_option("--config", config, "JSON config file")->required();
  run_cmd->add_option("--out", out, "output directory (default: output_dir)");
  run_cmd->add_option("--seeds", seeds, "comma-separated seeds, e.g. 1,2,3");

  auto* sweep_cmd = app.add_subcommand("sweep", "grid search over config keys");
  sweep_cmd->add_option("--config", config, "JSON config file")->required();
  sweep_cmd->add_option("--grid", grid, "KEY=V1,V2 (repeatable; dotted keys)");
  sweep_cmd->add_option("--out", out, "output directory (default: output_dir)");
  sweep_cmd->add_option("--seeds", seeds, "comma-separated seeds");

  auto* check_cmd = app.add_subcommand("check", "run verification checks");
  check_cmd->add_option("name", check_name, "check group")
      ->required()
      ->check(CLI::IsMember(check_group_names()));

  auto* sharp_cmd = app.add_subcommand("sharpness", "adaptive sharpness at a checkpoint");
  sharp_cmd->add_option("--config", config, "JSON config file")->required();
  sharp_cmd->add_option("--checkpoint", checkpoint, "checkpoint JSON with \"x\"")
      ->required();
  sharp_cmd->add_option("--seed", sharp_seed, "seed for the random restarts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run_cmd) return cmd_run(config, out, seeds);
    if (*sweep_cmd) return cmd_sweep(config, grid, out, seeds);
    if (*check_cmd) return cmd_check(check_name);
    if (*sharp_cmd) return cmd_sharpness(config, checkpoint, sharp_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
