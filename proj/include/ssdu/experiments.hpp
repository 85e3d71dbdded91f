#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ssdu/config.hpp"
#include "ssdu/metrics.hpp"
#include "ssdu/phantom.hpp"
#include "ssdu/training.hpp"

namespace ssdu {

struct Cohorts {
  std::vector<Scan> train;
  std::vector<Scan> test;
  nlohmann::json provenance;  // where each set came from
};

/// Training and test sets: loaded from cfg.data / cfg.test_data when given,
/// otherwise synthesized from cfg (seeds derived from cfg.seed).
Cohorts load_or_make_cohorts(const RunConfig& cfg);

CohortSpec cohort_spec(const RunConfig& cfg, bool test);

/// One network training run.
struct TrainPlan {
  LossKind loss = LossKind::selfsup_kspace;
  double rho = 0.4;
  SplitScheme scheme = SplitScheme::gaussian_density;
  std::uint64_t split_seed = 0;
  std::uint64_t train_seed = 0;
};

/// Seeds used by the experiment suites for repeat r.
TrainPlan suite_plan(const RunConfig& cfg, LossKind loss, double rho, SplitScheme scheme, std::size_t repeat);

/// Splits the training scans (self-supervised only) and fits a network.
/// `log` receives one line per epoch when non-null.
FitResult train_network(std::vector<Scan> train, const RunConfig& cfg, const TrainPlan& plan, std::ostream* log);

/// Reconstructs every scan with a classical solver or the trained network,
/// spreading scans over recon_threads() workers; output order follows input.
std::vector<ComplexImage> reconstruct_all(const std::vector<Scan>& scans, Solver solver, const RunConfig& cfg,
                                          const NetworkParams* params = nullptr);

ComplexImage reconstruct_one(const Scan& scan, Solver solver, const RunConfig& cfg, const NetworkParams* params);

/// NMSE and SSIM against each scan's reference image.
std::vector<MetricReport> score(const std::vector<Scan>& scans, const std::vector<ComplexImage>& recon,
                                const std::string& method, std::optional<double> rho, const std::string& scheme);

double mean_nmse(const std::vector<MetricReport>& rows);

/// Names of the experiment suites.
const std::vector<std::string>& suite_names();

struct SuiteResult {
  std::vector<MetricReport> rows;
  nlohmann::json summary;
};

/// Runs a named suite (lambda-scheme, rho-sweep, compare) and writes
/// metrics.csv, summary.csv, training_loss.csv, provenance.json and, when
/// cfg.images is set, per-scan PGM images under cfg.out.
SuiteResult run_suite(const std::string& suite, const RunConfig& cfg, std::ostream& log);

}  // namespace ssdu
