#include "logz/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "logz/hardness.hpp"
#include "logz/oracles.hpp"

namespace logz {

namespace {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<T>();
}

void parse_pipeline(const json& j, PipelineConfig& p) {
  if (auto it = j.find("overrides"); it != j.end()) {
    const json& o = *it;
    p.sampler.uld_variance_const =
        get_or(o, "uld_variance_const", p.sampler.uld_variance_const);
    p.sampler.rmm_variance_const =
        get_or(o, "rmm_variance_const", p.sampler.rmm_variance_const);
    p.sampler.rmm_eta_prefactor = get_or(o, "rmm_eta_prefactor", p.sampler.rmm_eta_prefactor);
    p.sampler.admissibility_frac =
        get_or(o, "admissibility_frac", p.sampler.admissibility_frac);
    p.c_f = get_or(o, "c_f", p.c_f);
    p.mala_step_c = get_or(o, "mala_step_c", p.mala_step_c);
    p.mala_steps_const = get_or(o, "mala_steps_const", p.mala_steps_const);
    p.pilot_samples = get_or(o, "pilot_samples", p.pilot_samples);
  }
  if (auto it = j.find("caps"); it != j.end()) {
    const json& c = *it;
    p.max_stages = get_or(c, "max_stages", p.max_stages);
    p.max_radius_samples = get_or(c, "max_radius_samples", p.max_radius_samples);
    p.max_samples_level0 = get_or(c, "max_samples_level0", p.max_samples_level0);
    p.max_chain_steps = get_or(c, "max_chain_steps", p.max_chain_steps);
    p.max_levels = get_or(c, "max_levels", p.max_levels);
    p.mala_max_samples = get_or(c, "mala_max_samples", p.mala_max_samples);
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;
  try {
    const json& target = j.at("target");
    cfg.target_name = target.at("name").get<std::string>();
    if (cfg.target_name == "gaussian") {
      cfg.d = target.at("d").get<int>();
      cfg.sigma2 = target.at("sigma2").get<double>();
      if (!(cfg.sigma2 > 0.0)) throw ConfigError("field target.sigma2 must be > 0");
      if (cfg.d < 1) throw ConfigError("field target.d must be >= 1");
    } else if (cfg.target_name == "diag_quadratic") {
      cfg.lambdas = target.at("lambdas").get<std::vector<double>>();
      if (cfg.lambdas.empty()) throw ConfigError("field target.lambdas must be non-empty");
      cfg.d = static_cast<int>(cfg.lambdas.size());
    } else if (cfg.target_name == "hard_instance") {
      cfg.hard_k = target.at("k").get<int>();
      cfg.hard_n = target.at("n").get<long long>();
      cfg.hard_types = get_or(target, "types", std::vector<int>{});
      cfg.hard_mode = get_or(target, "mode", std::string("uniform"));
      cfg.hard_seed = get_or(target, "seed", std::uint64_t{0});
      cfg.hard_bernoulli_p = get_or(target, "bernoulli_p", 0.5);
      cfg.d = cfg.hard_k;
    } else {
      throw ConfigError("field target.name must be gaussian, diag_quadratic or hard_instance");
    }

    cfg.method = get_or(j, "method", std::string("mlmc-uld"));
    if (cfg.method != "mlmc-uld" && cfg.method != "mlmc-rmm" && cfg.method != "mala")
      throw ConfigError("field method must be mlmc-uld, mlmc-rmm or mala");
    cfg.eps = get_or(j, "eps", 0.25);
    if (!(cfg.eps > 0.0 && cfg.eps <= 0.5))
      throw ConfigError("field eps must lie in (0, 1/2]");
    cfg.seed = get_or(j, "seed", std::uint64_t{1});
    parse_pipeline(j, cfg.pipeline);
    if (auto it = j.find("output"); it != j.end()) {
      cfg.report_path = get_or(*it, "report", std::string());
      cfg.stage_csv_path = get_or(*it, "stage_csv", std::string());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }

  if (const char* env_seed = std::getenv("LOGZ_SEED")) {
    cfg.seed = std::strtoull(env_seed, nullptr, 10);
  }
  cfg.echo = j.dump(2);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream oss;
  oss << in.rdbuf();
  return parse_run_config(oss.str());
}

PotentialPtr build_target(const RunConfig& cfg) {
  if (cfg.target_name == "gaussian") return make_gaussian(cfg.d, cfg.sigma2);
  if (cfg.target_name == "diag_quadratic") {
    VectorXd l(cfg.lambdas.size());
    for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) l[i] = cfg.lambdas[i];
    return make_diag_quadratic(l);
  }
  hardness::TypeRule rule;
  rule.explicit_types = cfg.hard_types;
  rule.seed = cfg.hard_seed;
  rule.bernoulli_p = cfg.hard_bernoulli_p;
  auto mode = cfg.hard_mode == "equalized" ? hardness::CellMode::equalized
                                           : hardness::CellMode::uniform;
  return std::make_shared<hardness::HardInstance>(
      hardness::generate(cfg.hard_k, cfg.hard_n, rule, mode));
}

std::optional<double> reference_log_z(const RunConfig& cfg, int threads) {
  if (cfg.target_name == "gaussian") {
    VectorXd l = VectorXd::Constant(cfg.d, 1.0 / cfg.sigma2);
    return oracles::analytic_gaussian_log_z(l);
  }
  if (cfg.target_name == "diag_quadratic") {
    VectorXd l(cfg.lambdas.size());
    for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) l[i] = cfg.lambdas[i];
    return oracles::analytic_gaussian_log_z(l);
  }
  if (cfg.target_name == "hard_instance" && cfg.hard_k <= 3) {
    auto target = build_target(cfg);
    auto res = oracles::trapezoid_z(*target, 1e-4, 0.0, threads);
    if (res.converged) return res.log_z;
  }
  return std::nullopt;
}

RunReport run_from_config(const RunConfig& cfg) {
  PotentialPtr target = build_target(cfg);
  if (cfg.method == "mala") return run_mala_pipeline(target, cfg.eps, cfg.seed, cfg.pipeline);
  SamplerFamily family =
      cfg.method == "mlmc-uld" ? SamplerFamily::uld : SamplerFamily::rmm;
  return run_pipeline(target, cfg.eps, family, cfg.seed, cfg.pipeline);
}

}  // namespace logz
