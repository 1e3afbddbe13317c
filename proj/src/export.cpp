#include "samlab/export.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace samlab {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

void put(std::ostringstream& out, const std::optional<double>& v) {
  out << ',';
  if (v) out << format_double(*v);
}

Json optional_json(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

Json vector_json(const ParamVector& x) {
  return Json(std::vector<double>(x.data(), x.data() + x.size()));
}

}  // namespace

std::string trace_csv(const RunTrace& trace) {
  std::ostringstream out;
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.step << ',' << r.epoch << ',' << r.batch_size << ','
        << format_double(r.lr) << ',' << format_double(r.minibatch_loss);
    put(out, r.full_loss);
    put(out, r.sam_grad_norm);
    put(out, r.noise_norm);
    put(out, r.noise_mean);
    put(out, r.noise_se);
    put(out, r.g_hat);
    put(out, r.g_perp_hat);
    out << '\n';
  }
  return out.str();
}

std::string aggregate_csv(const AggregateTable& table) {
  std::ostringstream out;
  out << "step";
  for (const auto& c : table.columns) {
    out << ',' << c.name << "_mean," << c.name << "_min," << c.name << "_max";
  }
  out << '\n';
  for (std::size_t i = 0; i < table.steps.size(); ++i) {
    out << table.steps[i];
    for (const auto& c : table.columns) {
      put(out, c.mean[i]);
      put(out, c.min[i]);
      put(out, c.max[i]);
    }
    out << '\n';
  }
  return out.str();
}

Json trace_summary(const RunConfig& cfg, const RunTrace& trace) {
  const ConvergenceVerdict v =
      convergence_verdict(std::span<const RunTrace>(&trace, 1), cfg.diagnostics.epsilon);
  return Json{
      {"config", to_json(cfg)},
      {"config_hash", trace.config_hash},
      {"seed", trace.seed},
      {"sampling", to_string(trace.sampling)},
      {"steps", trace.records.size()},
      {"final_loss", trace.final_loss},
      {"final_sam_grad_norm", trace.final_sam_grad_norm},
      {"heldout_loss", optional_json(trace.heldout_loss)},
      {"sharpness", optional_json(trace.sharpness)},
      {"G_hat", trace.grad_bounds.g_hat},
      {"G_perp_hat", trace.grad_bounds.g_perp_hat},
      {"verdict",
       {{"epsilon", cfg.diagnostics.epsilon},
        {"achieved", v.achieved},
        {"min_sam_grad_norm", v.min_grad_norm},
        {"argmin_step", v.argmin_step}}},
      {"wall_clock_seconds", trace.wall_clock_seconds},
  };
}

Json aggregate_summary(const RunConfig& cfg, const AggregateTable& table,
                       std::span<const RunTrace> traces) {
  const ConvergenceVerdict v = convergence_verdict(traces, cfg.diagnostics.epsilon);
  double g_hat = 0.0, g_perp = 0.0;
  for (const auto& t : traces) {
    g_hat = std::max(g_hat, t.grad_bounds.g_hat);
    g_perp = std::max(g_perp, t.grad_bounds.g_perp_hat);
  }
  return Json{
      {"config", to_json(cfg)},
      {"config_hash", table.config_hash},
      {"seeds", table.seeds},
      {"sampling", to_string(cfg.sampling)},
      {"steps", table.steps.size()},
      {"mean_terminal_loss", table.mean_terminal_loss},
      {"mean_sharpness", optional_json(table.mean_sharpness)},
      {"mean_heldout_loss", optional_json(table.mean_heldout_loss)},
      {"G_hat", g_hat},
      {"G_perp_hat", g_perp},
      {"verdict",
       {{"epsilon", cfg.diagnostics.epsilon},
        {"achieved", v.achieved},
        {"min_sam_grad_norm", v.min_grad_norm},
        {"argmin_step", v.argmin_step}}},
  };
}

Json sweep_summary(const SweepResult& result) {
  Json points = Json::array();
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const auto& p = result.points[i];
    Json assignment = Json::object();
    for (const auto& [k, v] : p.assignment) assignment[k] = v;
    points.push_back({{"index", i},
                      {"assignment", assignment},
                      {"config_hash", p.aggregate.config_hash},
                      {"seeds", p.aggregate.seeds},
                      {"mean_terminal_loss", p.aggregate.mean_terminal_loss},
                      {"mean_sharpness", optional_json(p.aggregate.mean_sharpness)},
                      {"mean_heldout_loss", optional_json(p.aggregate.mean_heldout_loss)}});
  }
  return Json{{"points", points},
              {"rank_by_loss", result.rank_by_loss},
              {"rank_by_sharpness", result.rank_by_sharpness}};
}

Json checkpoint_json(const RunTrace& trace) {
  return Json{{"config_hash", trace.config_hash},
              {"seed", trace.seed},
              {"x", vector_json(trace.final_x)}};
}

ParamVector load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("x") || !j["x"].is_array()) {
    throw ConfigError("checkpoint '" + path + "' has no \"x\" array");
  }
  std::vector<double> x;
  try {
    x = j["x"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("checkpoint '" + path + "': \"x\" must hold numbers");
  }
  return Eigen::Map<const ParamVector>(x.data(), static_cast<Eigen::Index>(x.size()));
}

void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  if (ec) throw Error("cannot create directory for '" + path + "': " + ec.message());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
  out.close();
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace samlab
