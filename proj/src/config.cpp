#include "samlab/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "samlab/types.hpp"

namespace samlab {

namespace {

// Reads fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where() + key + " has the wrong type");
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  std::string path(const char* key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + path(key.c_str()) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : path_ + ": "; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

MlpLoss parse_mlp_loss(const std::string& text) {
  if (text == "cross_entropy") return MlpLoss::cross_entropy;
  if (text == "squared") return MlpLoss::squared;
  throw ConfigError("unknown ensemble.loss '" + text +
                    "' (expected cross_entropy or squared)");
}

std::string to_string(MlpLoss loss) {
  return loss == MlpLoss::cross_entropy ? "cross_entropy" : "squared";
}

EnsembleKind parse_ensemble_kind(const std::string& text) {
  if (text == "quadratic") return EnsembleKind::quadratic;
  if (text == "tiny_mlp") return EnsembleKind::tiny_mlp;
  throw ConfigError("unknown ensemble.kind '" + text +
                    "' (expected quadratic or tiny_mlp)");
}

BoundTracking parse_bound_tracking(const std::string& text) {
  if (text == "off") return BoundTracking::off;
  if (text == "cadence") return BoundTracking::cadence;
  if (text == "every_step") return BoundTracking::every_step;
  throw ConfigError("unknown diagnostics.grad_bounds '" + text +
                    "' (expected off, cadence or every_step)");
}

std::string to_string(BoundTracking b) {
  switch (b) {
    case BoundTracking::off:
      return "off";
    case BoundTracking::cadence:
      return "cadence";
    case BoundTracking::every_step:
      return "every_step";
  }
  return "cadence";
}

void parse_ensemble(const Json& j, EnsembleConfig& e) {
  Section s(j, "ensemble");
  std::string kind = to_string(e.kind);
  s.get("kind", kind);
  e.kind = parse_ensemble_kind(kind);

  std::size_t n = e.kind == EnsembleKind::quadratic ? e.quadratic.n : e.mlp.n;
  std::uint64_t seed = 1;
  s.get("n", n);
  s.get("seed", seed);
  e.quadratic.n = e.mlp.n = n;
  e.quadratic.seed = e.mlp.seed = seed;

  auto& q = e.quadratic;
  s.get("d", q.d);
  s.get("spectrum", q.spectrum);
  s.get("spectrum_lo", q.spectrum_lo);
  s.get("spectrum_hi", q.spectrum_hi);
  s.get("rotate", q.rotate);
  s.get("anchor_spread", q.anchor_spread);
  s.get("init_distance", q.init_distance);

  auto& m = e.mlp;
  s.get("layers", m.layers);
  s.get("n_heldout", m.n_heldout);
  std::string loss = to_string(m.loss);
  s.get("loss", loss);
  m.loss = parse_mlp_loss(loss);
  s.get("class_separation", m.class_separation);
  s.get("init_scale", m.init_scale);
  s.finish();
}

void parse_sam(const Json& j, SamConfig& sam) {
  Section s(j, "sam");
  s.get("rho", sam.rho);
  s.get("alpha", sam.alpha);
  std::vector<double> u;
  s.get("u", u);
  if (!u.empty()) sam.fallback = Eigen::Map<const ParamVector>(u.data(), static_cast<Eigen::Index>(u.size()));
  s.get("zero_grad_threshold", sam.zero_grad_threshold);
  std::string base = to_string(sam.base_update);
  s.get("base_update", base);
  sam.base_update = parse_base_update(base);
  if (const Json* a = s.child("adam")) {
    Section as(*a, "sam.adam");
    as.get("beta1", sam.adam.beta1);
    as.get("beta2", sam.adam.beta2);
    as.get("weight_decay", sam.adam.weight_decay);
    as.get("eps", sam.adam.eps);
    as.finish();
  }
  s.finish();
}

void parse_diagnostics(const Json& j, DiagnosticsConfig& d) {
  Section s(j, "diagnostics");
  s.get("every", d.every);
  s.get("noise_trials", d.noise_trials);
  std::string bounds = to_string(d.grad_bounds);
  s.get("grad_bounds", bounds);
  d.grad_bounds = parse_bound_tracking(bounds);
  s.get("perturbed_loss", d.perturbed_loss);
  s.get("epsilon", d.epsilon);
  if (const Json* sh = s.child("sharpness")) {
    Section ss(*sh, "diagnostics.sharpness");
    ss.get("enabled", d.sharpness);
    ss.get("radius", d.sharpness_spec.radius);
    std::vector<double> scale;
    ss.get("scale", scale);
    if (!scale.empty()) {
      d.sharpness_spec.scale = Eigen::Map<const ParamVector>(
          scale.data(), static_cast<Eigen::Index>(scale.size()));
    }
    ss.get("ascent_steps", d.sharpness_spec.ascent_steps);
    ss.get("restarts", d.sharpness_spec.restarts);
    ss.get("step_fraction", d.sharpness_spec.step_fraction);
    ss.finish();
  }
  s.finish();
}

std::vector<double> to_std(const ParamVector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

std::size_t RunConfig::sample_count() const {
  return ensemble.kind == EnsembleKind::quadratic ? ensemble.quadratic.n
                                                  : ensemble.mlp.n;
}

void RunConfig::validate() const {
  const auto n = static_cast<std::int64_t>(sample_count());
  if (n < 1) throw ConfigError("ensemble.n must be >= 1");
  if (ensemble.kind == EnsembleKind::quadratic && ensemble.quadratic.d < 1) {
    throw ConfigError("ensemble.d must be >= 1");
  }
  sam.validate();
  BatchSchedule sched(n, stages);  // validates sizes and ordering
  if (sched.total_epochs() != epochs) {
    throw ConfigError("batch.stages cover " + std::to_string(sched.total_epochs()) +
                      " epochs but epochs = " + std::to_string(epochs));
  }
  LrSchedule lr_sched = make_lr_schedule(*this, sched);
  lr_sched.validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (diagnostics.every < 0) throw ConfigError("diagnostics.every must be >= 0");
  if (diagnostics.noise_trials != 0 && diagnostics.noise_trials < 100) {
    throw ConfigError("diagnostics.noise_trials must be 0 or >= 100");
  }
  if (!(diagnostics.epsilon > 0.0)) throw ConfigError("diagnostics.epsilon must be > 0");
  if (diagnostics.sharpness) diagnostics.sharpness_spec.validate();
}

RunConfig parse_config(const Json& j) {
  RunConfig cfg;
  Section s(j, "");
  if (const Json* e = s.child("ensemble")) parse_ensemble(*e, cfg.ensemble);
  if (const Json* sam = s.child("sam")) parse_sam(*sam, cfg.sam);
  std::string sampling = to_string(cfg.sampling);
  s.get("sampling", sampling);
  cfg.sampling = parse_sampling_mode(sampling);

  if (const Json* b = s.child("batch")) {
    Section bs(*b, "batch");
    if (const Json* st = bs.child("stages")) {
      if (!st->is_array() || st->empty()) {
        throw ConfigError("batch.stages must be a non-empty list of [b, epochs]");
      }
      cfg.stages.clear();
      for (const auto& stage : *st) {
        if (!stage.is_array() || stage.size() != 2 || !stage[0].is_number_integer() ||
            !stage[1].is_number_integer()) {
          throw ConfigError("batch.stages entries must be [b, epochs] integer pairs");
        }
        cfg.stages.push_back({stage[0].get<std::int64_t>(), stage[1].get<std::int64_t>()});
      }
    }
    bs.finish();
  }

  if (const Json* l = s.child("lr")) {
    Section ls(*l, "lr");
    std::string kind = to_string(cfg.lr.kind);
    ls.get("kind", kind);
    cfg.lr.kind = parse_lr_kind(kind);
    ls.get("lo", cfg.lr.lo);
    ls.get("hi", cfg.lr.hi);
    ls.get("value", cfg.lr.hi);
    ls.get("warmup_epochs", cfg.lr.warmup_epochs);
    ls.get("init_lr", cfg.lr.init_lr);
    ls.finish();
  }

  std::int64_t stage_epochs = 0;
  for (const auto& st : cfg.stages) stage_epochs += st.epochs;
  cfg.epochs = stage_epochs;
  s.get("epochs", cfg.epochs);
  s.get("seeds", cfg.seeds);
  if (const Json* d = s.child("diagnostics")) parse_diagnostics(*d, cfg.diagnostics);
  s.get("output_dir", cfg.output_dir);
  s.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

Json to_json(const RunConfig& cfg) {
  const auto& q = cfg.ensemble.quadratic;
  const auto& m = cfg.ensemble.mlp;
  Json e = {
      {"kind", to_string(cfg.ensemble.kind)},
      {"n", cfg.sample_count()},
      {"seed", cfg.ensemble.kind == EnsembleKind::quadratic ? q.seed : m.seed},
      {"d", q.d},
      {"spectrum", q.spectrum},
      {"spectrum_lo", q.spectrum_lo},
      {"spectrum_hi", q.spectrum_hi},
      {"rotate", q.rotate},
      {"anchor_spread", q.anchor_spread},
      {"init_distance", q.init_distance},
      {"layers", m.layers},
      {"n_heldout", m.n_heldout},
      {"loss", to_string(m.loss)},
      {"class_separation", m.class_separation},
      {"init_scale", m.init_scale},
  };
  Json sam = {
      {"rho", cfg.sam.rho},
      {"alpha", cfg.sam.alpha},
      {"u", to_std(cfg.sam.fallback)},
      {"zero_grad_threshold", cfg.sam.zero_grad_threshold},
      {"base_update", to_string(cfg.sam.base_update)},
      {"adam",
       {{"beta1", cfg.sam.adam.beta1},
        {"beta2", cfg.sam.adam.beta2},
        {"weight_decay", cfg.sam.adam.weight_decay},
        {"eps", cfg.sam.adam.eps}}},
  };
  Json stages = Json::array();
  for (const auto& s : cfg.stages) stages.push_back({s.batch_size, s.epochs});
  const auto& d = cfg.diagnostics;
  Json diag = {
      {"every", d.every},
      {"noise_trials", d.noise_trials},
      {"grad_bounds", to_string(d.grad_bounds)},
      {"perturbed_loss", d.perturbed_loss},
      {"epsilon", d.epsilon},
      {"sharpness",
       {{"enabled", d.sharpness},
        {"radius", d.sharpness_spec.radius},
        {"scale", to_std(d.sharpness_spec.scale)},
        {"ascent_steps", d.sharpness_spec.ascent_steps},
        {"restarts", d.sharpness_spec.restarts},
        {"step_fraction", d.sharpness_spec.step_fraction}}},
  };
  return Json{
      {"ensemble", e},
      {"sam", sam},
      {"sampling", to_string(cfg.sampling)},
      {"batch", {{"stages", stages}}},
      {"lr",
       {{"kind", to_string(cfg.lr.kind)},
        {"lo", cfg.lr.lo},
        {"hi", cfg.lr.hi},
        {"warmup_epochs", cfg.lr.warmup_epochs},
        {"init_lr", cfg.lr.init_lr}}},
      {"epochs", cfg.epochs},
      {"seeds", cfg.seeds},
      {"diagnostics", diag},
      {"output_dir", cfg.output_dir},
  };
}

std::string config_hash(const RunConfig& cfg) {
  Json j = to_json(cfg);
  j.erase("seeds");
  j.erase("output_dir");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::shared_ptr<const LossEnsemble> make_ensemble(const EnsembleConfig& cfg) {
  if (cfg.kind == EnsembleKind::quadratic) {
    return std::make_shared<QuadraticEnsemble>(make_quadratic_ensemble(cfg.quadratic));
  }
  return std::make_shared<TinyMlpEnsemble>(make_tiny_mlp_ensemble(cfg.mlp));
}

BatchSchedule make_batch_schedule(const RunConfig& cfg) {
  return BatchSchedule(static_cast<std::int64_t>(cfg.sample_count()), cfg.stages);
}

LrSchedule make_lr_schedule(const RunConfig& cfg, const BatchSchedule& sched) {
  const std::int64_t T = total_steps(sched);
  LrSchedule lr;
  switch (cfg.lr.kind) {
    case LrKind::constant:
      lr = LrSchedule::constant(cfg.lr.hi, T);
      break;
    case LrKind::cosine:
      lr = LrSchedule::cosine(cfg.lr.lo, cfg.lr.hi, steps_in_epoch(sched, 0),
                              cfg.epochs);
      lr.total_steps = T;
      break;
    case LrKind::linear:
      lr = LrSchedule::linear(cfg.lr.lo, cfg.lr.hi, T);
      break;
  }
  if (cfg.lr.warmup_epochs > 0) lr.warmup = Warmup{cfg.lr.init_lr, cfg.lr.warmup_epochs};
  return lr;
}

namespace {

void collect_keys(const Json& j, const std::string& prefix,
                  std::vector<std::string>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      collect_keys(value, path, out);
    } else {
      out.push_back(path);
    }
  }
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  collect_keys(to_json(RunConfig{}), "", keys);
  return keys;
}

void set_config_key(Json& j, const std::string& key, const Json& value) {
  const auto keys = config_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    std::ostringstream msg;
    msg << "unknown grid key '" << key << "'; valid keys:";
    for (const auto& k : keys) msg << ' ' << k;
    throw ConfigError(msg.str());
  }
  Json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = Json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

Json parse_grid_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return Json(text);
  }
}

}  // namespace samlab
