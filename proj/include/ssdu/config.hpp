#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "ssdu/network.hpp"
#include "ssdu/sampling.hpp"
#include "ssdu/training.hpp"

namespace ssdu {

enum class Solver { cgsense, tgv, network };

std::string_view to_string(Solver s) noexcept;
Solver parse_solver(std::string_view s);

/// Every knob a subcommand may read. Defaults are the desk-scale settings
/// listed in the README; `to_json` emits them all.
struct RunConfig {
  // paths
  std::string data;       // input dataset directory
  std::string test_data;  // held-out dataset directory (experiments)
  std::string out;
  std::string model;      // checkpoint stem, without extension
  std::string recon;      // reconstruction directory (evaluate)

  // synthetic cohort
  std::string name = "synthetic";
  std::size_t scans = 20;
  std::size_t test_scans = 10;
  std::size_t size = 64;
  std::size_t coils = 4;
  double noise = 0.01;

  // sampling
  std::size_t accel = 4;
  std::size_t acs = 8;
  double rho = 0.4;
  SplitScheme split_scheme = SplitScheme::gaussian_density;
  double sigma_fraction = 0.25;
  bool exclude_acs = false;

  // network; net.cg_iters also bounds CG-SENSE
  NetConfig net;

  // training
  LossKind loss = LossKind::selfsup_kspace;
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::size_t checkpoint_every = 0;
  bool resample_splits = false;

  // classical solvers
  Solver solver = Solver::cgsense;
  double cg_tol = 1e-10;
  double tgv_alpha1 = 1e-2;
  double tgv_alpha0 = 2e-2;
  std::size_t tgv_iters = 500;

  // experiment suites
  std::vector<double> rhos{0.05, 0.1, 0.2, 0.3, 0.4};
  double lambda_rho = 0.1;
  std::size_t repeats = 3;
  bool images = true;

  std::uint64_t seed = 0;
};

/// Overwrites the fields named in j (keys are flag names with '_' for '-').
/// Unknown keys and ill-typed values raise ConfigError naming the key.
void apply_json(RunConfig& cfg, const nlohmann::json& j);

/// Reads a JSON object from a file and applies it.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& cfg);

/// Range checks; throws ConfigError naming the parameter and its valid range.
void validate(const RunConfig& cfg);

/// Worker count from RECON_THREADS, else the hardware concurrency (at least 1).
std::size_t recon_threads();

}  // namespace ssdu
