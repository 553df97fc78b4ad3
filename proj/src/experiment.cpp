#include "sbc/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "sbc/lotka_volterra.hpp"
#include "sbc/models.hpp"

namespace sbc {

using nlohmann::json;

namespace {

// Field access with dotted-path error messages and unknown-key detection.
class Fields {
public:
  Fields(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  std::string where(const std::string &key = {}) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string &key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const json &at(const std::string &key) {
    if (!has(key)) throw ConfigError("missing required field '" + where(key) + "'");
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string &key, T fallback) {
    if (!has(key)) return fallback;
    return as<T>(key);
  }

  template <typename T>
  T require(const std::string &key) {
    at(key);
    return as<T>(key);
  }

  void finish() const {
    for (const auto &[key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown field '" + where(key) + "'");
  }

private:
  template <typename T>
  T as(const std::string &key) const {
    const json &v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("field '" + where(key) + "' must be a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("field '" + where(key) + "' must be a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("field '" + where(key) + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)
          throw ConfigError("field '" + where(key) + "' must be non-negative");
    } else {
      if (!v.is_number()) throw ConfigError("field '" + where(key) + "' must be a number");
    }
    return v.get<T>();
  }

  const json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

SamplerConfig parse_sampler(const json &j, const std::string &path) {
  Fields f(j, path);
  SamplerConfig s;
  s.chains = f.get("chains", s.chains);
  s.warmup_draws = f.get("warmup_draws", s.warmup_draws);
  s.keep_draws = f.get("keep_draws", s.keep_draws);
  s.target_accept = f.get("target_accept", s.target_accept);
  s.max_leapfrog_steps = f.get("max_leapfrog_steps", s.max_leapfrog_steps);
  s.path_length_jitter = f.get("path_length_jitter", s.path_length_jitter);
  s.integration_time = f.get("integration_time", s.integration_time);
  s.divergence_threshold = f.get("divergence_threshold", s.divergence_threshold);
  s.init_radius = f.get("init_radius", s.init_radius);
  s.fixed_step_size = f.get("fixed_step_size", s.fixed_step_size);
  f.finish();
  try {
    s.validate();
  } catch (const ConfigError &e) {
    throw ConfigError(path + ": " + e.what());
  }
  return s;
}

json sampler_json(const SamplerConfig &s) {
  return {{"chains", s.chains},
          {"warmup_draws", s.warmup_draws},
          {"keep_draws", s.keep_draws},
          {"target_accept", s.target_accept},
          {"max_leapfrog_steps", s.max_leapfrog_steps},
          {"path_length_jitter", s.path_length_jitter},
          {"integration_time", s.integration_time},
          {"divergence_threshold", s.divergence_threshold},
          {"init_radius", s.init_radius},
          {"fixed_step_size", s.fixed_step_size}};
}

const std::set<std::string> kBackendKinds{"hmc", "rwm", "exact", "shifted"};

BackendSpec parse_backend(const json &j, const std::string &path) {
  Fields f(j, path);
  BackendSpec b;
  b.kind = f.require<std::string>("kind");
  if (!kBackendKinds.count(b.kind))
    throw ConfigError("field '" + f.where("kind") + "' must be one of hmc, rwm, exact, shifted");
  b.shift_sd = f.get("shift_sd", b.shift_sd);
  b.draws = f.get("draws", b.draws);
  if (b.draws < 1) throw ConfigError("field '" + f.where("draws") + "' must be at least 1");
  if (f.has("sampler")) b.sampler = parse_sampler(f.at("sampler"), f.where("sampler"));
  f.finish();
  if (b.kind == "exact") b.shift_sd = 0.0;
  return b;
}

json backend_json(const BackendSpec &b) {
  json j{{"kind", b.kind}};
  if (b.kind == "exact" || b.kind == "shifted") {
    j["draws"] = b.draws;
    if (b.kind == "shifted") j["shift_sd"] = b.shift_sd;
  } else {
    j["sampler"] = sampler_json(b.sampler);
  }
  return j;
}

json model_options(const std::string &id, const json &in, const std::string &path) {
  Fields f(in, path);
  json out = json::object();
  if (id == "conjugate-normal") {
    const ConjugateNormalModel::Options d;
    out["prior_mean"] = f.get("prior_mean", d.prior_mean);
    out["prior_sd"] = f.get("prior_sd", d.prior_sd);
    out["obs_sd"] = f.get("obs_sd", d.obs_sd);
    out["observations"] = f.get("observations", d.observations);
  } else if (id == "hierarchical-centered" || id == "hierarchical-noncentered") {
    out["groups"] = f.get("groups", 50);
    out["per_group"] = f.get("per_group", 5);
  } else if (id == "lotka-volterra") {
    const LotkaVolterraModel::Options d;
    out["origin_year"] = f.get("origin_year", d.origin_year);
    out["years"] = f.get("years", d.years);
    out["step"] = f.get("step", d.step);
  } else {
    throw ConfigError("field 'model.id' must be one of conjugate-normal, hierarchical-centered, "
                      "hierarchical-noncentered, lotka-volterra");
  }
  f.finish();
  return out;
}

std::string fnv1a_hex(const std::string &bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace

ExperimentConfig parse_experiment_config(const json &j, const std::filesystem::path &base_dir) {
  ExperimentConfig c;
  Fields f(j, "");

  const auto mode = f.require<std::string>("mode");
  if (mode == "prior")
    c.mode = SbcMode::Prior;
  else if (mode == "posterior")
    c.mode = SbcMode::Posterior;
  else
    throw ConfigError("field 'mode' must be 'prior' or 'posterior'");

  {
    Fields m(f.at("model"), "model");
    c.model.id = m.require<std::string>("id");
    c.model.options = model_options(c.model.id, m.has("options") ? m.at("options") : json::object(),
                                    "model.options");
    m.finish();
  }

  std::string data_content_hash;
  if (f.has("data")) {
    Fields d(f.at("data"), "data");
    int sources = 0;
    if (d.has("path")) {
      ++sources;
      c.data.source = DataSpec::Source::Path;
      c.data.path = d.require<std::string>("path");
      if (c.data.path.is_relative() && !base_dir.empty()) c.data.path = base_dir / c.data.path;
    }
    if (d.has("empty")) {
      if (d.require<bool>("empty")) {
        ++sources;
        c.data.source = DataSpec::Source::Empty;
      }
    }
    if (d.has("generate")) {
      ++sources;
      c.data.source = DataSpec::Source::Generate;
      Fields g(d.at("generate"), "data.generate");
      c.data.generate_seed = g.get<std::uint64_t>("seed", 1);
      if (g.has("params")) {
        const json &p = g.at("params");
        if (!p.is_object()) throw ConfigError("field 'data.generate.params' must be an object");
        for (const auto &[name, v] : p.items()) {
          if (!v.is_number())
            throw ConfigError("field 'data.generate.params." + name + "' must be a number");
          c.data.generate_params[name] = v.get<double>();
        }
      }
      g.finish();
    }
    d.finish();
    if (sources > 1)
      throw ConfigError("field 'data' must give exactly one of 'path', 'empty', 'generate'");
  }
  if (c.mode == SbcMode::Posterior && c.data.source == DataSpec::Source::None)
    throw ConfigError("posterior mode requires field 'data.path' (or 'data.empty': true, or "
                      "'data.generate')");
  if (c.data.source == DataSpec::Source::Path) {
    std::ifstream in(c.data.path, std::ios::binary);
    if (!in) throw ConfigError("field 'data.path': cannot read " + c.data.path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    data_content_hash = fnv1a_hex(ss.str());
  }

  c.backend = parse_backend(f.at("backend"), "backend");
  if (f.has("base_backend")) {
    c.base_backend = parse_backend(f.at("base_backend"), "base_backend");
  } else {
    c.base_backend = c.backend;
    if (c.backend.kind == "shifted") {
      c.base_backend.kind = "exact";
      c.base_backend.shift_sd = 0.0;
    }
  }

  if (f.has("sbc")) {
    Fields s(f.at("sbc"), "sbc");
    c.sbc.iterations = s.get("iterations", c.sbc.iterations);
    c.sbc.ranks_S = s.get("ranks_S", c.sbc.ranks_S);
    if (s.has("posterior_draws_per_iteration")) {
      const int draws = s.require<int>("posterior_draws_per_iteration");
      if (draws < 1) throw ConfigError("field 'sbc.posterior_draws_per_iteration' must be at least 1");
      c.backend.draws = draws;
    }
    if (s.has("test_quantities")) {
      const json &q = s.at("test_quantities");
      if (!q.is_array()) throw ConfigError("field 'sbc.test_quantities' must be an array of strings");
      for (const auto &v : q) {
        if (!v.is_string()) throw ConfigError("field 'sbc.test_quantities' must be an array of strings");
        c.sbc.test_quantities.push_back(v.get<std::string>());
      }
    }
    c.sbc.base_data_fraction = s.get("base_data_fraction", c.sbc.base_data_fraction);
    const auto cond = s.get<std::string>("loglik_conditioning", "augmented");
    if (cond == "augmented")
      c.sbc.loglik_conditioning = LoglikConditioning::Augmented;
    else if (cond == "simulated")
      c.sbc.loglik_conditioning = LoglikConditioning::SimulatedOnly;
    else
      throw ConfigError("field 'sbc.loglik_conditioning' must be 'augmented' or 'simulated'");
    s.finish();
  }
  c.sbc.seed = f.get<std::uint64_t>("seed", 1);
  c.sbc.workers = f.get("workers", 1);
  try {
    c.sbc.validate();
  } catch (const ConfigError &e) {
    throw ConfigError(std::string("sbc: ") + e.what());
  }

  c.output_dir = f.require<std::string>("output_dir");
  c.plots = f.get("plots", true);

  if (f.has("band")) {
    Fields b(f.at("band"), "band");
    c.band_coverage = b.get("coverage", c.band_coverage);
    c.band.mc_replications = b.get("mc_replications", c.band.mc_replications);
    c.band.seed = b.get<std::uint64_t>("seed", c.band.seed);
    b.finish();
    if (!(c.band_coverage > 0.5 && c.band_coverage < 1.0))
      throw ConfigError("field 'band.coverage' must lie in (0.5, 1)");
    if (c.band.mc_replications < 100)
      throw ConfigError("field 'band.mc_replications' must be at least 100");
  }
  f.finish();

  // Validate model/backend pairing and test quantities early.
  const auto model = make_model(c.model);
  const auto exact_kind = [](const BackendSpec &b) { return b.kind == "exact" || b.kind == "shifted"; };
  if ((exact_kind(c.backend) || exact_kind(c.base_backend)) && c.model.id != "conjugate-normal")
    throw ConfigError("field 'backend.kind': exact and shifted backends require model "
                      "'conjugate-normal'");
  for (const auto &q : c.sbc.test_quantities)
    if (q != kLoglikQuantity && model->index_of(q) < 0)
      throw ConfigError("field 'sbc.test_quantities': unknown quantity '" + q + "'");
  if (c.data.source == DataSpec::Source::Generate)
    for (const auto &[name, _] : c.data.generate_params)
      if (model->index_of(name) < 0)
        throw ConfigError("field 'data.generate.params': unknown parameter '" + name + "'");

  json canonical;
  canonical["mode"] = mode;
  canonical["model"] = {{"id", c.model.id}, {"options", c.model.options}};
  json data = json::object();
  switch (c.data.source) {
  case DataSpec::Source::None: break;
  case DataSpec::Source::Path:
    data = {{"path", c.data.path.filename().string()}, {"content_fnv1a", data_content_hash}};
    break;
  case DataSpec::Source::Empty: data = {{"empty", true}}; break;
  case DataSpec::Source::Generate:
    data = {{"generate", {{"seed", c.data.generate_seed}, {"params", c.data.generate_params}}}};
    break;
  }
  canonical["data"] = data;
  canonical["backend"] = backend_json(c.backend);
  canonical["base_backend"] = backend_json(c.base_backend);
  canonical["sbc"] = {{"iterations", c.sbc.iterations},
                      {"ranks_S", c.sbc.ranks_S},
                      {"test_quantities", resolve_quantities(*model, c.sbc)},
                      {"base_data_fraction", c.sbc.base_data_fraction},
                      {"loglik_conditioning",
                       c.sbc.loglik_conditioning == LoglikConditioning::Augmented ? "augmented" : "simulated"}};
  canonical["seed"] = c.sbc.seed;
  canonical["plots"] = c.plots;
  canonical["band"] = {{"coverage", c.band_coverage},
                       {"mc_replications", c.band.mc_replications},
                       {"seed", c.band.seed}};
  c.canonical = std::move(canonical);
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

void override_seed(ExperimentConfig &config, std::uint64_t seed) {
  config.sbc.seed = seed;
  config.canonical["seed"] = seed;
}

void override_workers(ExperimentConfig &config, int workers) {
  if (workers < 1) throw ConfigError("--workers must be at least 1");
  config.sbc.workers = workers;
}

std::string config_hash(const ExperimentConfig &config) { return fnv1a_hex(config.canonical.dump()); }

std::unique_ptr<Model> make_model(const ModelSpec &spec) {
  const json &o = spec.options;
  if (spec.id == "conjugate-normal") {
    ConjugateNormalModel::Options opt;
    opt.prior_mean = o.value("prior_mean", opt.prior_mean);
    opt.prior_sd = o.value("prior_sd", opt.prior_sd);
    opt.obs_sd = o.value("obs_sd", opt.obs_sd);
    opt.observations = o.value("observations", opt.observations);
    return std::make_unique<ConjugateNormalModel>(opt);
  }
  if (spec.id == "hierarchical-centered" || spec.id == "hierarchical-noncentered")
    return std::make_unique<HierarchicalModel>(spec.id == "hierarchical-centered"
                                                   ? Parameterization::Centered
                                                   : Parameterization::NonCentered,
                                               o.value("groups", 50), o.value("per_group", 5));
  if (spec.id == "lotka-volterra") {
    LotkaVolterraModel::Options opt;
    opt.origin_year = o.value("origin_year", opt.origin_year);
    opt.years = o.value("years", opt.years);
    opt.step = o.value("step", opt.step);
    return std::make_unique<LotkaVolterraModel>(opt);
  }
  throw ConfigError("unknown model id '" + spec.id + "'");
}

std::unique_ptr<InferenceBackend> make_backend(const BackendSpec &spec) {
  if (spec.kind == "hmc") return std::make_unique<McmcBackend>(SamplerKind::Hmc, spec.sampler);
  if (spec.kind == "rwm") return std::make_unique<McmcBackend>(SamplerKind::Rwm, spec.sampler);
  if (spec.kind == "exact") return std::make_unique<ConjugateExactBackend>(spec.draws, 0.0);
  if (spec.kind == "shifted") return std::make_unique<ConjugateExactBackend>(spec.draws, spec.shift_sd);
  throw ConfigError("unknown backend kind '" + spec.kind + "'");
}

Dataset observed_data(const ExperimentConfig &config, const Model &model) {
  switch (config.data.source) {
  case DataSpec::Source::None:
  case DataSpec::Source::Empty: return model.empty_data();
  case DataSpec::Source::Path: {
    Dataset d = read_dataset_csv(config.data.path);
    if (d.kind != model.data_kind())
      throw ConfigError("field 'data.path': file " + config.data.path.string() +
                        " does not match the data layout of model '" + model.id() + "'");
    if (d.kind == DataKind::Grouped) d.groups = std::max(d.groups, model.empty_data().groups);
    return d;
  }
  case DataSpec::Source::Generate: break;
  }
  RandomStream rng = RandomStream::keyed(config.data.generate_seed,
                                         {static_cast<std::uint64_t>(StreamRole::ObservedData)});
  const auto &p = config.data.generate_params;
  if (const auto *h = dynamic_cast<const HierarchicalModel *>(&model); h && !p.empty()) {
    for (const char *name : {"mu0", "tau", "sigma"})
      if (!p.count(name))
        throw ConfigError(std::string("field 'data.generate.params' needs '") + name + "'");
    return h->generate_observed(p.at("mu0"), p.at("tau"), p.at("sigma"), rng);
  }
  Eigen::VectorXd theta;
  if (p.empty()) {
    theta = model.prior_sample(rng);
  } else {
    theta.resize(model.dim());
    const auto names = model.parameter_names();
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto it = p.find(names[k]);
      if (it == p.end())
        throw ConfigError("field 'data.generate.params' is missing parameter '" + names[k] + "'");
      theta(static_cast<Eigen::Index>(k)) = it->second;
    }
  }
  return model.simulate(theta, rng);
}

} // namespace sbc
