#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "logz/annealing.hpp"
#include "logz/config.hpp"
#include "logz/hardness.hpp"
#include "logz/oracles.hpp"
#include "logz/samplers.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheckFailed = 4;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

int cmd_estimate(const std::string& config_path, int threads, bool strip_timing, bool check,
                 std::optional<std::uint64_t> seed_flag, const std::string& out_override) {
  logz::RunConfig cfg;
  try {
    cfg = logz::load_run_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (seed_flag) cfg.seed = *seed_flag;
  if (threads > 0) cfg.pipeline.threads = threads;
  if (!out_override.empty()) cfg.report_path = out_override;

  logz::RunReport report;
  try {
    report = logz::run_from_config(cfg);
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }

  json full = json::parse(report.to_json(strip_timing));
  full["config"] = json::parse(cfg.echo);
  std::string text = full.dump(2) + "\n";
  if (!cfg.report_path.empty())
    write_file(cfg.report_path, text);
  else
    std::cout << text;
  if (!cfg.stage_csv_path.empty()) write_file(cfg.stage_csv_path, report.stage_csv());

  if (report.failed_stage > 0) {
    std::cerr << "stage " << report.failed_stage << " failed: " << report.failure << "\n";
    return kExitNumerical;
  }
  if (check) {
    auto ref = logz::reference_log_z(cfg, cfg.pipeline.threads);
    if (!ref) {
      std::cerr << "check requested but the target has no reference Z\n";
      return kExitConfig;
    }
    double rel = std::abs(std::exp(report.log_z_hat - *ref) - 1.0);
    std::cerr << "check: |Z_hat/Z - 1| = " << rel << " (eps = " << cfg.eps << ")\n";
    if (!(rel <= cfg.eps)) return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_bench(const std::string& config_path, int threads) {
  json j;
  try {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open " + config_path);
    in >> j;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  std::vector<std::string> methods = j.value("methods", std::vector<std::string>{"mlmc-uld"});
  std::vector<int> ds = j.value("ds", std::vector<int>{2});
  std::vector<double> kappas = j.value("kappas", std::vector<double>{1.0});
  std::vector<double> epss = j.value("eps", std::vector<double>{0.3});
  std::vector<std::uint64_t> seeds = j.value("seeds", std::vector<std::uint64_t>{1});
  std::string out_path = j.value("out", std::string("bench.csv"));

  std::ofstream out(out_path, std::ios::binary);
  out << "method,d,kappa,eps,queries,rel_error,seconds,seed\n";
  out.flush();

  for (const auto& method : methods) {
    for (int d : ds) {
      for (double kappa : kappas) {
        for (double eps : epss) {
          for (std::uint64_t seed : seeds) {
            json target;
            if (kappa == 1.0) {
              target = {{"name", "gaussian"}, {"d", d}, {"sigma2", 1.0}};
            } else {
              std::vector<double> lambdas(d, 1.0);
              for (int i = d / 2; i < d; ++i) lambdas[i] = kappa;
              target = {{"name", "diag_quadratic"}, {"lambdas", lambdas}};
            }
            json run_cfg = j.value("template", json::object());
            run_cfg["target"] = target;
            run_cfg["method"] = method;
            run_cfg["eps"] = eps;
            run_cfg["seed"] = seed;
            logz::RunConfig cfg;
            try {
              cfg = logz::parse_run_config(run_cfg.dump());
              if (threads > 0) cfg.pipeline.threads = threads;
              logz::RunReport rep = logz::run_from_config(cfg);
              std::string rel_str;
              if (auto ref = logz::reference_log_z(cfg, cfg.pipeline.threads)) {
                rel_str = fmt17(std::abs(std::exp(rep.log_z_hat - *ref) - 1.0));
              }
              out << method << ',' << d << ',' << fmt17(kappa) << ',' << fmt17(eps) << ','
                  << rep.grad_queries << ',' << rel_str << ',' << fmt17(rep.wall_seconds)
                  << ',' << seed << '\n';
              out.flush();  // partial sweeps stay on disk
            } catch (const std::exception& e) {
              std::cerr << "bench row failed: " << e.what() << "\n";
            }
          }
        }
      }
    }
  }
  return kExitOk;
}

int cmd_oracle(const std::string& what, const std::vector<double>& lambdas, double s2,
               double sigma_i2, double sigma_ip1_2, double alpha, int d, double eps,
               int threads) {
  json j;
  try {
    if (what == "gaussian") {
      Eigen::VectorXd l(lambdas.size());
      for (std::size_t i = 0; i < lambdas.size(); ++i) l[i] = lambdas[i];
      double log_z = logz::oracles::analytic_gaussian_log_z(l);
      j = {{"oracle", "gaussian"}, {"log_z", log_z}, {"z", std::exp(log_z)}};
    } else if (what == "stage-ratio") {
      double lr = sigma_ip1_2 > 0.0
                      ? logz::oracles::gaussian_stage_log_ratio(s2, sigma_i2, sigma_ip1_2, d)
                      : logz::oracles::gaussian_stage_log_ratio_last(s2, sigma_i2, d);
      j = {{"oracle", "stage-ratio"}, {"log_ratio", lr}, {"ratio", std::exp(lr)}};
    } else if (what == "varbound") {
      double lr = logz::oracles::gaussian_variance_log_ratio(s2, sigma_i2, alpha, d);
      j = {{"oracle", "varbound"},
           {"log_ratio", lr},
           {"ratio", std::exp(lr)},
           {"bound", std::exp(4.0 * alpha * alpha * d)}};
    } else if (what == "trapezoid") {
      Eigen::VectorXd l(lambdas.size());
      for (std::size_t i = 0; i < lambdas.size(); ++i) l[i] = lambdas[i];
      auto target = logz::make_diag_quadratic(l);
      auto res = logz::oracles::trapezoid_z(*target, eps, 0.0, threads);
      j = {{"oracle", "trapezoid"},
           {"z", res.z},
           {"log_z", res.log_z},
           {"converged", res.converged},
           {"points", res.points},
           {"h", res.h}};
    } else {
      std::cerr << "unknown oracle: " << what << "\n";
      return kExitConfig;
    }
  } catch (const std::exception& e) {
    std::cerr << "oracle failed: " << e.what() << "\n";
    return kExitNumerical;
  }
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_sample(const std::string& sampler, int d, double sigma2, double eta, double T,
               std::uint64_t seed, const std::string& out_path) {
  try {
    auto target = logz::make_gaussian(d, sigma2);
    logz::RngStream rng = logz::RngStream::from_seed(seed);
    std::ostringstream csv;
    csv << "t";
    for (int i = 0; i < d; ++i) csv << ",x" << i;
    for (int i = 0; i < d; ++i) csv << ",v" << i;
    csv << "\n";
    auto emit = [&](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& v) {
      csv << fmt17(t);
      for (int i = 0; i < d; ++i) csv << ',' << fmt17(x[i]);
      for (int i = 0; i < d; ++i) csv << ',' << fmt17(v[i]);
      csv << "\n";
    };
    long long n = std::llround(T / eta);
    if (sampler == "uld") {
      std::vector<logz::PhasePoint> trace;
      logz::uld_run(Eigen::VectorXd::Zero(d), *target, eta, T, rng, &trace);
      for (std::size_t i = 0; i < trace.size(); ++i)
        emit((i + 1) * eta, trace[i].x, trace[i].v);
    } else if (sampler == "mala") {
      std::vector<logz::PhasePoint> trace;
      logz::mala_chain(Eigen::VectorXd::Zero(d), *target, eta, n, rng, nullptr, &trace);
      for (std::size_t i = 0; i < trace.size(); ++i)
        emit(static_cast<double>(i + 1), trace[i].x, trace[i].v);
    } else if (sampler == "rmm") {
      std::vector<logz::PhasePoint> trace;
      logz::rmm_run(Eigen::VectorXd::Zero(d), *target, eta, T, rng, &trace);
      for (std::size_t i = 0; i < trace.size(); ++i)
        emit((i + 1) * eta, trace[i].x, trace[i].v);
    } else {
      std::cerr << "unknown sampler: " << sampler << "\n";
      return kExitConfig;
    }
    if (out_path.empty())
      std::cout << csv.str();
    else
      write_file(out_path, csv.str());
  } catch (const std::exception& e) {
    std::cerr << "sample failed: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_hardgen(int k, long long n, const std::string& types_csv, const std::string& mode,
                double bernoulli_p, std::uint64_t seed, const std::string& out_path) {
  try {
    logz::hardness::TypeRule rule;
    rule.seed = seed;
    rule.bernoulli_p = bernoulli_p;
    if (!types_csv.empty()) {
      std::stringstream ss(types_csv);
      std::string tok;
      while (std::getline(ss, tok, ',')) rule.explicit_types.push_back(std::stoi(tok));
    }
    auto cell_mode = mode == "equalized" ? logz::hardness::CellMode::equalized
                                         : logz::hardness::CellMode::uniform;
    logz::hardness::HardInstance inst = logz::hardness::generate(k, n, rule, cell_mode);
    std::string text = inst.to_json() + "\n";
    if (out_path.empty())
      std::cout << text;
    else
      write_file(out_path, text);
  } catch (const std::exception& e) {
    std::cerr << "hardgen failed: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

int cmd_hardverify(const std::string& in_path) {
  try {
    std::ifstream in(in_path);
    if (!in) throw std::runtime_error("cannot open " + in_path);
    std::ostringstream oss;
    oss << in.rdbuf();
    logz::hardness::HardInstance inst = logz::hardness::HardInstance::from_json(oss.str());
    logz::hardness::VerifyReport report = logz::hardness::verify_instance(inst);
    std::cout << report.to_json() << "\n";
    return report.ok ? kExitOk : kExitCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "hardverify failed: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"annealed multilevel Monte Carlo normalizing-constant estimator"};
  app.require_subcommand(1);

  // estimate
  auto* est = app.add_subcommand("estimate", "run a pipeline from a JSON config");
  std::string est_config;
  int est_threads = 0;
  bool est_strip = false, est_check = false;
  std::uint64_t est_seed = 0;
  bool est_seed_set = false;
  std::string est_out;
  est->add_option("--config", est_config, "config JSON path")->required();
  est->add_option("--threads", est_threads, "worker threads (results are thread-count independent)");
  est->add_flag("--strip-timing", est_strip, "omit wall-time fields from the report");
  est->add_flag("--check", est_check, "compare against the analytic/quadrature Z (exit 4 on miss)");
  est->add_option("--seed", est_seed, "override config seed")->each([&](const std::string&) {
    est_seed_set = true;
  });
  est->add_option("--out", est_out, "report path override");

  // bench
  auto* bench = app.add_subcommand("bench", "sweep (method, d, kappa, eps) and emit a CSV");
  std::string bench_config;
  int bench_threads = 0;
  bench->add_option("--config", bench_config, "bench config JSON path")->required();
  bench->add_option("--threads", bench_threads, "worker threads");

  // oracle
  auto* orc = app.add_subcommand("oracle", "print a closed form or quadrature value as JSON");
  std::string orc_what;
  std::vector<double> orc_lambdas;
  double orc_s2 = 1.0, orc_si2 = 1.0, orc_sip2 = 0.0, orc_alpha = 0.0, orc_eps = 1e-3;
  int orc_d = 1, orc_threads = 1;
  orc->add_option("what", orc_what, "gaussian | stage-ratio | varbound | trapezoid")->required();
  orc->add_option("--lambdas", orc_lambdas, "precisions for gaussian/trapezoid");
  orc->add_option("--s2", orc_s2, "base variance");
  orc->add_option("--sigma-i2", orc_si2, "stage variance");
  orc->add_option("--sigma-ip1-2", orc_sip2, "next stage variance (0 = infinity)");
  orc->add_option("--alpha", orc_alpha, "variance-ratio alpha");
  orc->add_option("--d", orc_d, "dimension");
  orc->add_option("--eps", orc_eps, "quadrature accuracy");
  orc->add_option("--threads", orc_threads, "worker threads");

  // sample
  auto* smp = app.add_subcommand("sample", "dump a single-chain trace CSV");
  std::string smp_sampler = "uld", smp_out;
  int smp_d = 1;
  double smp_sigma2 = 1.0, smp_eta = 0.1, smp_T = 1.0;
  std::uint64_t smp_seed = 1;
  smp->add_option("--sampler", smp_sampler, "uld | rmm | mala");
  smp->add_option("--d", smp_d, "dimension");
  smp->add_option("--sigma2", smp_sigma2, "gaussian target variance");
  smp->add_option("--eta", smp_eta, "step size (mala: h; steps = T/eta)");
  smp->add_option("--T", smp_T, "horizon");
  smp->add_option("--seed", smp_seed, "rng seed");
  smp->add_option("--out", smp_out, "trace CSV path (stdout when omitted)");

  // hardgen / hardverify
  auto* hg = app.add_subcommand("hardgen", "generate a hard instance as JSON");
  int hg_k = 1;
  long long hg_n = 4;
  std::string hg_types, hg_mode = "uniform", hg_out;
  double hg_p = 0.5;
  std::uint64_t hg_seed = 1;
  hg->add_option("--k", hg_k, "dimension");
  hg->add_option("--n", hg_n, "cell count (n^{1/k} integer)");
  hg->add_option("--types", hg_types, "explicit comma-separated cell types (1|2)");
  hg->add_option("--mode", hg_mode, "uniform | equalized");
  hg->add_option("--bernoulli-p", hg_p, "P(type 1) when sampling types");
  hg->add_option("--seed", hg_seed, "type-sampling seed");
  hg->add_option("--out", hg_out, "output path (stdout when omitted)");

  auto* hv = app.add_subcommand("hardverify", "verify a hard instance JSON");
  std::string hv_in;
  hv->add_option("--in", hv_in, "instance JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  if (est->parsed())
    return cmd_estimate(est_config, est_threads, est_strip, est_check,
                        est_seed_set ? std::optional<std::uint64_t>(est_seed) : std::nullopt,
                        est_out);
  if (bench->parsed()) return cmd_bench(bench_config, bench_threads);
  if (orc->parsed())
    return cmd_oracle(orc_what, orc_lambdas, orc_s2, orc_si2, orc_sip2, orc_alpha, orc_d,
                      orc_eps, orc_threads);
  if (smp->parsed())
    return cmd_sample(smp_sampler, smp_d, smp_sigma2, smp_eta, smp_T, smp_seed, smp_out);
  if (hg->parsed()) return cmd_hardgen(hg_k, hg_n, hg_types, hg_mode, hg_p, hg_seed, hg_out);
  if (hv->parsed()) return cmd_hardverify(hv_in);
  return kExitConfig;
}
