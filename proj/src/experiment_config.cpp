#include "tarnet/experiment_config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "tarnet/error.hpp"
#include "tarnet/io.hpp"
#include "tarnet/json_convert.hpp"
#include "tarnet/rng.hpp"

namespace tarnet {

using nlohmann::json;

namespace {

// Reads declared keys out of one JSON object and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(context_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!j_[key].is_number_unsigned()) throw ConfigError("expected a non-negative integer");
      }
      out = j_[key].get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(where(key) + e.what());
    }
  }

  template <class T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_[key].is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  void get_sizes(const char* key, std::vector<std::size_t>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_[key].is_array()) throw ConfigError(where(key) + "expected an array");
    out.clear();
    for (const auto& v : j_[key]) {
      if (!v.is_number_unsigned()) throw ConfigError(where(key) + "expected non-negative integers");
      out.push_back(v.get<std::size_t>());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_[key] : nullptr;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError(context_ + ": unknown key '" + item.key() + "'");
      }
    }
  }

 private:
  std::string where(const char* key) const { return context_ + "." + key + ": "; }

  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace

void to_json(json& j, const DgpParams& p) {
  j = json{{"alpha", p.alpha}, {"beta", p.beta},   {"gamma", p.gamma},
           {"omega", p.omega}, {"sigma", p.sigma}, {"d", p.d}};
}

void from_json(const json& j, DgpParams& p) {
  Reader r(j, "dgp");
  r.get("alpha", p.alpha);
  r.get("beta", p.beta);
  r.get("d", p.d);
  // gamma/omega default to 0.5 per covariate when only d is given.
  p.gamma.assign(p.d, 0.5);
  p.omega.assign(p.d, 0.5);
  r.get("gamma", p.gamma);
  r.get("omega", p.omega);
  r.get("sigma", p.sigma);
  r.finish();
}

void to_json(json& j, const NetworkSpec& s) {
  j = json{{"input_dim", s.input_dim},
           {"encoder_widths", s.encoder_widths},
           {"head_widths", s.head_widths}};
}

void from_json(const json& j, NetworkSpec& s) {
  Reader r(j, "spec");
  r.get("input_dim", s.input_dim);
  r.get_sizes("encoder_widths", s.encoder_widths);
  r.get_sizes("head_widths", s.head_widths);
  r.finish();
}

void to_json(json& j, const IpmConfig& c) {
  j = json{{"kind", to_string(c.kind)},
           {"bandwidth", c.bandwidth ? json(*c.bandwidth) : json(nullptr)},
           {"epsilon", c.epsilon ? json(*c.epsilon) : json(nullptr)},
           {"max_iters", c.max_iters},
           {"convergence_tol", c.convergence_tol}};
}

void from_json(const json& j, IpmConfig& c) {
  Reader r(j, "ipm");
  std::string kind = to_string(c.kind);
  r.get("kind", kind);
  c.kind = ipm_kind_from_string(kind);
  r.get_optional("bandwidth", c.bandwidth);
  r.get_optional("epsilon", c.epsilon);
  r.get("max_iters", c.max_iters);
  r.get("convergence_tol", c.convergence_tol);
  r.finish();
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate},   {"epochs", c.epochs}, {"batch_size", c.batch_size},
           {"alpha", c.alpha},                   {"ipm", c.ipm},       {"seed", c.seed},
           {"train_fraction", c.train_fraction}};
}

void from_json(const json& j, TrainConfig& c) {
  Reader r(j, "train");
  r.get("learning_rate", c.learning_rate);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("alpha", c.alpha);
  if (const json* ipm = r.sub("ipm")) c.ipm = ipm->get<IpmConfig>();
  r.get("seed", c.seed);
  r.get("train_fraction", c.train_fraction);
  r.finish();
}

void to_json(json& j, const TransferConfig& c) {
  j = json{{"freeze_depth", c.freeze_depth ? json(*c.freeze_depth) : json(nullptr)},
           {"phase1",
            {{"learning_rate", c.phase1.learning_rate},
             {"epochs", c.phase1.epochs},
             {"ipm", c.phase1.ipm}}},
           {"phase2",
            {{"learning_rate", c.phase2.learning_rate},
             {"epochs", c.phase2.epochs},
             {"batch_size", c.phase2.batch_size ? json(*c.phase2.batch_size) : json(nullptr)}}},
           {"lambda_tt", c.lambda_tt},
           {"lambda_cc", c.lambda_cc},
           {"lambda_wt", c.lambda_wt},
           {"source_reference_size", c.source_reference_size},
           {"seed", c.seed}};
}

void from_json(const json& j, TransferConfig& c) {
  Reader r(j, "transfer");
  r.get_optional("freeze_depth", c.freeze_depth);
  if (const json* p1 = r.sub("phase1")) {
    Reader q(*p1, "transfer.phase1");
    q.get("learning_rate", c.phase1.learning_rate);
    q.get("epochs", c.phase1.epochs);
    if (const json* ipm = q.sub("ipm")) c.phase1.ipm = ipm->get<IpmConfig>();
    q.finish();
  }
  if (const json* p2 = r.sub("phase2")) {
    Reader q(*p2, "transfer.phase2");
    q.get("learning_rate", c.phase2.learning_rate);
    q.get("epochs", c.phase2.epochs);
    q.get_optional("batch_size", c.phase2.batch_size);
    q.finish();
  }
  r.get("lambda_tt", c.lambda_tt);
  r.get("lambda_cc", c.lambda_cc);
  r.get("lambda_wt", c.lambda_wt);
  r.get("source_reference_size", c.source_reference_size);
  r.get("seed", c.seed);
  r.finish();
}

void to_json(json& j, const StandardizeTransform& t) {
  j = json{{"names", t.names},
           {"means", t.means},
           {"sds", t.sds},
           {"outcome_scaled", t.outcome_scaled},
           {"outcome_mean", t.outcome_mean},
           {"outcome_sd", t.outcome_sd}};
}

void from_json(const json& j, StandardizeTransform& t) {
  Reader r(j, "transform");
  r.get("names", t.names);
  r.get("means", t.means);
  r.get("sds", t.sds);
  r.get("outcome_scaled", t.outcome_scaled);
  r.get("outcome_mean", t.outcome_mean);
  r.get("outcome_sd", t.outcome_sd);
  r.finish();
  if (t.means.size() != t.sds.size()) throw ConfigError("transform: means and sds differ in length");
  t.scales.clear();
  for (double sd : t.sds) {
    if (!(sd > 0.0)) throw ConfigError("transform: non-positive sd");
    t.scales.push_back(1.0 / sd);
  }
}

void to_json(json& j, const AlignmentTerms& t) {
  j = json{{"target_source_treated", t.target_source_treated},
           {"target_source_control", t.target_source_control},
           {"within_target", t.within_target},
           {"total", t.total}};
}

json report_to_json(const TransferReport& r) {
  return json{{"freeze_depth", r.freeze_depth},
              {"frozen_scalars", r.frozen_scalars},
              {"phase1_epochs", r.phase1_trace.size()},
              {"phase1_initial", r.phase1_initial},
              {"phase1_final", r.phase1_final},
              {"phase2_epochs", r.phase2_history.epochs()},
              {"phase2_initial_factual", r.phase2_initial_factual},
              {"phase2_final_factual", r.phase2_final_factual},
              {"final_ipm", r.final_ipm},
              {"mean_ite_before", r.mean_ite_before},
              {"mean_ite_after", r.mean_ite_after}};
}

std::vector<TargetSpecRule> default_target_specs() {
  return {
      {100, {1}, {}},
      {250, {3}, {}},
      {std::nullopt, {4}, {2}},
  };
}

TrainConfig default_target_train() {
  TrainConfig c;
  c.learning_rate = 0.005;
  c.epochs = 300;
  c.batch_size = 32;
  c.alpha = 0.0;
  c.train_fraction = 1.0;
  return c;
}

void ExperimentConfig::validate() const {
  dgp.validate();
  auto positive = [](const std::vector<std::size_t>& v, const char* what) {
    if (v.empty()) throw ConfigError(std::string("config: ") + what + " is empty");
    for (std::size_t x : v) {
      if (x < 1) throw ConfigError(std::string("config: ") + what + " must be positive");
    }
  };
  positive(source_sizes, "source_sizes");
  positive(target_sizes, "target_sizes");
  if (sampling.empty()) throw ConfigError("config: sampling is empty");
  for (Origin o : sampling) {
    if (o != Origin::target_random && o != Origin::target_biased) {
      throw ConfigError("config: sampling must be random or biased");
    }
  }
  if (replications < 1) throw ConfigError("config: replications must be >= 1");
  if (workers < 1) throw ConfigError("config: workers must be >= 1");
  if (target_specs.empty()) throw ConfigError("config: target_specs is empty");
  if (target_specs.back().max_target_size) {
    throw ConfigError("config: the last target_specs rule must have no size limit");
  }
  const NetworkSpec src = source_spec(*this);
  try {
    src.validate();
    for (const auto& rule : target_specs) {
      NetworkSpec{dgp.d, rule.encoder_widths, rule.head_widths}.validate();
    }
  } catch (const InvalidSpecError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  source_train.validate();
  target_train.validate();
  transfer.validate(src);
  for (std::size_t ns : source_sizes) {
    for (std::size_t nt : target_sizes) {
      if (!cell_excluded(*this, ns, nt) && nt > ns) {
        throw ConfigError("config: target size " + std::to_string(nt) + " exceeds source size " +
                          std::to_string(ns));
      }
    }
  }
}

std::string sampling_name(Origin origin) {
  switch (origin) {
    case Origin::target_random:
      return "random";
    case Origin::target_biased:
      return "biased";
    default:
      throw ConfigError("sampling: " + to_string(origin) + " is not a sampling regime");
  }
}

Origin sampling_from_name(const std::string& name) {
  if (name == "random") return Origin::target_random;
  if (name == "biased") return Origin::target_biased;
  throw ConfigError("unknown sampling regime '" + name + "'");
}

NetworkSpec source_spec(const ExperimentConfig& cfg) {
  NetworkSpec s = cfg.spec;
  s.input_dim = cfg.dgp.d;
  return s;
}

NetworkSpec target_spec_for(const ExperimentConfig& cfg, std::size_t n_target) {
  for (const auto& rule : cfg.target_specs) {
    if (!rule.max_target_size || n_target <= *rule.max_target_size) {
      return NetworkSpec{cfg.dgp.d, rule.encoder_widths, rule.head_widths};
    }
  }
  throw ConfigError("config: no target_specs rule covers " + std::to_string(n_target) + " rows");
}

bool cell_excluded(const ExperimentConfig& cfg, std::size_t n_source, std::size_t n_target) {
  return cfg.exclude_small_source_large_target && n_source == 1000 && n_target == 500;
}

namespace {

json results_json(const ExperimentConfig& cfg) {
  json sampling = json::array();
  for (Origin o : cfg.sampling) sampling.push_back(sampling_name(o));
  json rules = json::array();
  for (const auto& r : cfg.target_specs) {
    rules.push_back({{"max_target_size", r.max_target_size ? json(*r.max_target_size) : json(nullptr)},
                     {"encoder_widths", r.encoder_widths},
                     {"head_widths", r.head_widths}});
  }
  json spec = {{"encoder_widths", cfg.spec.encoder_widths}, {"head_widths", cfg.spec.head_widths}};
  return json{{"dgp", cfg.dgp},
              {"source_sizes", cfg.source_sizes},
              {"target_sizes", cfg.target_sizes},
              {"sampling", sampling},
              {"replications", cfg.replications},
              {"spec", spec},
              {"source_train", cfg.source_train},
              {"target_train", cfg.target_train},
              {"target_specs", rules},
              {"transfer", cfg.transfer},
              {"exclude_small_source_large_target", cfg.exclude_small_source_large_target},
              {"compute_cita", cfg.compute_cita},
              {"master_seed", cfg.master_seed}};
}

}  // namespace

json config_to_json(const ExperimentConfig& cfg) {
  json j = results_json(cfg);
  j["workers"] = cfg.workers;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  Reader r(j, "config");
  if (const json* d = r.sub("dgp")) cfg.dgp = d->get<DgpParams>();
  r.get_sizes("source_sizes", cfg.source_sizes);
  r.get_sizes("target_sizes", cfg.target_sizes);
  if (const json* s = r.sub("sampling")) {
    if (!s->is_array()) throw ConfigError("config.sampling: expected an array");
    cfg.sampling.clear();
    for (const auto& v : *s) {
      if (!v.is_string()) throw ConfigError("config.sampling: expected strings");
      cfg.sampling.push_back(sampling_from_name(v.get<std::string>()));
    }
  }
  r.get("replications", cfg.replications);
  if (const json* s = r.sub("spec")) {
    Reader q(*s, "config.spec");
    q.get_sizes("encoder_widths", cfg.spec.encoder_widths);
    q.get_sizes("head_widths", cfg.spec.head_widths);
    q.finish();
  }
  if (const json* t = r.sub("source_train")) cfg.source_train = t->get<TrainConfig>();
  if (const json* t = r.sub("target_train")) {
    TrainConfig base = default_target_train();
    json merged = base;
    merged.merge_patch(*t);
    cfg.target_train = merged.get<TrainConfig>();
  }
  if (const json* rules = r.sub("target_specs")) {
    if (!rules->is_array()) throw ConfigError("config.target_specs: expected an array");
    cfg.target_specs.clear();
    for (const auto& rule : *rules) {
      Reader q(rule, "config.target_specs[]");
      TargetSpecRule tr;
      q.get_optional("max_target_size", tr.max_target_size);
      q.get_sizes("encoder_widths", tr.encoder_widths);
      q.get_sizes("head_widths", tr.head_widths);
      q.finish();
      cfg.target_specs.push_back(std::move(tr));
    }
  }
  if (const json* t = r.sub("transfer")) cfg.transfer = t->get<TransferConfig>();
  r.get("exclude_small_source_large_target", cfg.exclude_small_source_large_target);
  r.get("compute_cita", cfg.compute_cita);
  r.get("master_seed", cfg.master_seed);
  r.get("workers", cfg.workers);
  r.finish();
  cfg.spec.input_dim = cfg.dgp.d;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("config_hash") && j.contains("config")) {
    ExperimentConfig cfg = config_from_json(j["config"]);
    if (config_hash(cfg) != j["config_hash"].get<std::string>()) {
      throw ConfigError("manifest " + path.string() + ": embedded config does not match its hash");
    }
    return cfg;
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(results_json(cfg).dump())));
  return buf;
}

UnitSeeds unit_seeds(std::uint64_t master, std::size_t n_source, std::size_t replication) {
  return UnitSeeds{derive_seed(master, {fnv1a("source-data"), n_source, replication}),
                   derive_seed(master, {fnv1a("source-train"), n_source, replication})};
}

CellSeeds cell_seeds(std::uint64_t master, std::size_t n_source, std::size_t replication,
                     std::size_t n_target, Origin sampling) {
  const std::uint64_t s = fnv1a(sampling_name(sampling));
  return CellSeeds{
      derive_seed(master, {fnv1a("target-data"), n_source, replication, n_target, s}),
      derive_seed(master, {fnv1a("baseline-train"), n_source, replication, n_target, s}),
      derive_seed(master, {fnv1a("transfer"), n_source, replication, n_target, s})};
}

}  // namespace tarnet
