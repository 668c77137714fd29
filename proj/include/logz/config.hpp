#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "logz/annealing.hpp"
#include "logz/potentials.hpp"

namespace logz {

// Parsed estimate/bench configuration.  The exact parsed document is echoed
// into every report so a run is reproducible from (config, seed) alone.
struct RunConfig {
  std::string target_name;  // gaussian | diag_quadratic | hard_instance
  int d = 1;
  double sigma2 = 1.0;
  std::vector<double> lambdas;
  // hard instance parameters
  int hard_k = 1;
  long long hard_n = 1;
  std::vector<int> hard_types;
  std::string hard_mode = "uniform";
  std::uint64_t hard_seed = 0;
  double hard_bernoulli_p = 0.5;

  std::string method = "mlmc-uld";  // mlmc-uld | mlmc-rmm | mala
  double eps = 0.25;
  std::uint64_t seed = 1;
  PipelineConfig pipeline;

  std::string report_path;
  std::string stage_csv_path;

  std::string echo;  // the parsed config re-serialized
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

PotentialPtr build_target(const RunConfig& cfg);

// Analytic or quadrature reference log Z when one exists.
std::optional<double> reference_log_z(const RunConfig& cfg, int threads);

RunReport run_from_config(const RunConfig& cfg);

}  // namespace logz
