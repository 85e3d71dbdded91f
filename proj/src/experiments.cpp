#include "ssdu/experiments.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "ssdu/dataio.hpp"
#include "ssdu/rng.hpp"
#include "ssdu/solvers.hpp"

namespace ssdu {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kArtifactVersion = "1.0.0";

std::string rho_tag(double rho) { return "rho" + format_double(rho); }

struct RunRecord {
  std::string label;
  TrainPlan plan;
  std::vector<double> epoch_loss;
  double final_mu = 0.0;
};

struct Stats {
  double mean = 0.0, std = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(v.size() - 1));
  }
  return s;
}

class SuiteWriter {
 public:
  SuiteWriter(const RunConfig& cfg, std::ostream& log) : cfg_(cfg), log_(log), out_(cfg.out) {
    if (cfg.out.empty()) throw ConfigError("out must name an output directory");
    fs::create_directories(out_);
    if (cfg.images) fs::create_directories(out_ / "images");
  }

  void images(const std::vector<Scan>& scans, const std::vector<ComplexImage>& recon, const std::string& tag) {
    if (!cfg_.images) return;
    for (std::size_t i = 0; i < scans.size(); ++i) write_pgm(out_ / "images" / (scans[i].scan_id + "_" + tag + ".pgm"), recon[i]);
  }

  void reference_images(const std::vector<Scan>& scans) {
    if (!cfg_.images) return;
    for (const auto& s : scans)
      if (s.ref_image) write_pgm(out_ / "images" / (s.scan_id + "_ref.pgm"), *s.ref_image);
  }

  FitResult train(const std::vector<Scan>& train, const TrainPlan& plan, const std::string& label) {
    log_ << "training " << label << " (" << cfg_.epochs << " epochs, " << train.size() << " scans)\n";
    FitResult r = train_network(train, cfg_, plan, &log_);
    runs_.push_back({label, plan, r.epoch_loss, r.params.mu()});
    return r;
  }

  void finish(const std::string& suite, std::vector<MetricReport>& rows, const json& summary,
              const json& cohorts) {
    sort_reports(rows);
    {
      std::ofstream f(out_ / "metrics.csv", std::ios::binary);
      write_metrics_csv(f, rows);
    }
    {
      std::ofstream f(out_ / "training_loss.csv", std::ios::binary);
      f << "run,epoch,loss\n";
      for (const auto& r : runs_)
        for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
          f << r.label << ',' << e + 1 << ',' << format_double(r.epoch_loss[e]) << '\n';
    }
    {
      std::ofstream f(out_ / "summary.csv", std::ios::binary);
      f << "method,rho,scheme,repeat,scans,mean_nmse,std_nmse,mean_ssim,std_ssim\n";
      for (const auto& g : summary.at("groups"))
        f << g.at("method").get<std::string>() << ','
          << (g.at("rho").is_null() ? "" : format_double(g.at("rho").get<double>())) << ','
          << g.at("scheme").get<std::string>() << ','
          << (g.at("repeat").is_null() ? "" : std::to_string(g.at("repeat").get<std::size_t>())) << ','
          << g.at("scans").get<std::size_t>() << ',' << format_double(g.at("mean_nmse").get<double>()) << ','
          << format_double(g.at("std_nmse").get<double>()) << ',' << format_double(g.at("mean_ssim").get<double>())
          << ',' << format_double(g.at("std_ssim").get<double>()) << '\n';
    }
    json runs = json::array();
    for (const auto& r : runs_)
      runs.push_back({{"label", r.label},
                      {"loss", std::string(to_string(r.plan.loss))},
                      {"rho", r.plan.rho},
                      {"scheme", std::string(to_string(r.plan.scheme))},
                      {"split_seed", r.plan.split_seed},
                      {"train_seed", r.plan.train_seed},
                      {"final_mu", r.final_mu},
                      {"final_loss", r.epoch_loss.empty() ? json(nullptr) : json(r.epoch_loss.back())}});
    const json prov{{"artifact", "ssdu"},        {"version", kArtifactVersion}, {"command", "experiment " + suite},
                    {"config", to_json(cfg_)},   {"cohorts", cohorts},          {"training_runs", runs},
                    {"summary", summary}};
    std::ofstream f(out_ / "provenance.json", std::ios::binary);
    f << prov.dump(2) << '\n';
  }

 private:
  const RunConfig& cfg_;
  std::ostream& log_;
  fs::path out_;
  std::vector<RunRecord> runs_;
};

json group_summary(const std::vector<MetricReport>& rows, const std::string& method, std::optional<double> rho,
                   const std::string& scheme, std::optional<std::size_t> repeat) {
  std::vector<double> n, s;
  for (const auto& r : rows)
    if (r.method == method && r.rho == rho && r.scheme == scheme) {
      n.push_back(r.nmse);
      s.push_back(r.ssim);
    }
  const Stats a = stats(n), b = stats(s);
  return json{{"method", method},
              {"rho", rho ? json(*rho) : json(nullptr)},
              {"scheme", scheme},
              {"repeat", repeat ? json(*repeat) : json(nullptr)},
              {"scans", n.size()},
              {"mean_nmse", a.mean},
              {"std_nmse", a.std},
              {"mean_ssim", b.mean},
              {"std_ssim", b.std}};
}

void print_groups(std::ostream& log, const json& summary) {
  for (const auto& g : summary.at("groups")) {
    log << "  " << g.at("method").get<std::string>();
    if (!g.at("rho").is_null()) log << " rho=" << format_double(g.at("rho").get<double>());
    if (!g.at("scheme").get<std::string>().empty()) log << ' ' << g.at("scheme").get<std::string>();
    log << ": mean NMSE " << g.at("mean_nmse").get<double>() << ", mean SSIM " << g.at("mean_ssim").get<double>()
        << '\n';
  }
}

SuiteResult compare_suite(const RunConfig& cfg, std::ostream& log) {
  SuiteWriter w(cfg, log);
  const Cohorts c = load_or_make_cohorts(cfg);
  w.reference_images(c.test);
  std::vector<MetricReport> rows;
  json groups = json::array();
  auto add = [&](const std::vector<ComplexImage>& recon, const std::string& method, std::optional<double> rho,
                 const std::string& scheme) {
    auto r = score(c.test, recon, method, rho, scheme);
    rows.insert(rows.end(), r.begin(), r.end());
    groups.push_back(group_summary(rows, method, rho, scheme, std::nullopt));
    w.images(c.test, recon, method);
  };

  log << "reconstructing " << c.test.size() << " test scans with CG-SENSE\n";
  add(reconstruct_all(c.test, Solver::cgsense, cfg), "cg-sense", std::nullopt, "");
  log << "reconstructing " << c.test.size() << " test scans with TGV\n";
  add(reconstruct_all(c.test, Solver::tgv, cfg), "tgv", std::nullopt, "");

  const auto sup = w.train(c.train, suite_plan(cfg, LossKind::supervised_image, cfg.rho, cfg.split_scheme, 0),
                           "supervised");
  add(reconstruct_all(c.test, Solver::network, cfg, &sup.params), "supervised", std::nullopt, "");

  const auto ss = w.train(c.train, suite_plan(cfg, LossKind::selfsup_kspace, cfg.rho, cfg.split_scheme, 0), "selfsup");
  add(reconstruct_all(c.test, Solver::network, cfg, &ss.params), "selfsup", cfg.rho,
      std::string(to_string(cfg.split_scheme)));

  const json summary{{"groups", groups}};
  w.finish("compare", rows, summary, c.provenance);
  print_groups(log, summary);
  return {rows, summary};
}

SuiteResult rho_sweep_suite(const RunConfig& cfg, std::ostream& log) {
  SuiteWriter w(cfg, log);
  const Cohorts c = load_or_make_cohorts(cfg);
  w.reference_images(c.test);
  std::vector<MetricReport> rows;
  json groups = json::array();
  const std::string scheme(to_string(cfg.split_scheme));
  for (double rho : cfg.rhos) {
    const auto fitres = w.train(c.train, suite_plan(cfg, LossKind::selfsup_kspace, rho, cfg.split_scheme, 0),
                                "selfsup_" + rho_tag(rho));
    const auto recon = reconstruct_all(c.test, Solver::network, cfg, &fitres.params);
    auto r = score(c.test, recon, "selfsup", rho, scheme);
    rows.insert(rows.end(), r.begin(), r.end());
    groups.push_back(group_summary(rows, "selfsup", rho, scheme, std::nullopt));
    w.images(c.test, recon, "selfsup_" + rho_tag(rho));
  }
  const json summary{{"groups", groups}};
  w.finish("rho-sweep", rows, summary, c.provenance);
  print_groups(log, summary);
  return {rows, summary};
}

SuiteResult lambda_scheme_suite(const RunConfig& cfg, std::ostream& log) {
  SuiteWriter w(cfg, log);
  const Cohorts c = load_or_make_cohorts(cfg);
  w.reference_images(c.test);
  std::vector<MetricReport> rows;
  json groups = json::array();
  json seeds = json::object();
  for (SplitScheme scheme : {SplitScheme::uniform_random, SplitScheme::gaussian_density}) {
    const std::string name(to_string(scheme));
    std::vector<double> per_seed;
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      const std::string method = "selfsup_seed" + std::to_string(r);
      const auto fitres =
          w.train(c.train, suite_plan(cfg, LossKind::selfsup_kspace, cfg.lambda_rho, scheme, r), method + "_" + name);
      const auto recon = reconstruct_all(c.test, Solver::network, cfg, &fitres.params);
      auto sc = score(c.test, recon, method, cfg.lambda_rho, name);
      per_seed.push_back(mean_nmse(sc));
      rows.insert(rows.end(), sc.begin(), sc.end());
      groups.push_back(group_summary(rows, method, cfg.lambda_rho, name, r));
      w.images(c.test, recon, method + "_" + name);
    }
    const Stats s = stats(per_seed);
    seeds[name] = {{"seed_mean_nmse", per_seed}, {"mean", s.mean}, {"std", s.std}};
    log << "  " << name << ": seed-level mean NMSE " << s.mean << " (std " << s.std << ")\n";
  }
  const json summary{{"groups", groups}, {"schemes", seeds}};
  w.finish("lambda-scheme", rows, summary, c.provenance);
  return {rows, summary};
}

}  // namespace

CohortSpec cohort_spec(const RunConfig& cfg, bool test) {
  CohortSpec s;
  s.scans = test ? cfg.test_scans : cfg.scans;
  s.size = cfg.size;
  s.coils = cfg.coils;
  s.noise_sigma = cfg.noise;
  s.accel = cfg.accel;
  s.acs = cfg.acs;
  s.seed = derive_seed(cfg.seed, test ? 2 : 1);
  s.id_prefix = test ? "test_" : "train_";
  return s;
}

Cohorts load_or_make_cohorts(const RunConfig& cfg) {
  Cohorts c;
  auto load = [&](bool test, std::vector<Scan>& dst) {
    const std::string& dir = test ? cfg.test_data : cfg.data;
    const char* key = test ? "test" : "train";
    if (!dir.empty()) {
      Dataset ds = read_dataset(dir);
      dst = std::move(ds.scans);
      c.provenance[key] = {{"source", "dataset"}, {"path", dir}, {"name", ds.name}, {"seed", ds.seed}};
    } else {
      const CohortSpec s = cohort_spec(cfg, test);
      dst = make_cohort(s);
      c.provenance[key] = {{"source", "synthetic"}, {"scans", s.scans},     {"size", s.size},
                           {"coils", s.coils},      {"noise", s.noise_sigma}, {"accel", s.accel},
                           {"acs", s.acs},          {"seed", s.seed},       {"id_prefix", s.id_prefix}};
    }
  };
  load(false, c.train);
  load(true, c.test);
  if (c.train.empty() || c.test.empty()) throw ConfigError("training and test sets must both be non-empty");
  return c;
}

TrainPlan suite_plan(const RunConfig& cfg, LossKind loss, double rho, SplitScheme scheme, std::size_t repeat) {
  return TrainPlan{loss, rho, scheme, derive_seed(cfg.seed, 100 + repeat), derive_seed(cfg.seed, 200 + repeat)};
}

FitResult train_network(std::vector<Scan> train, const RunConfig& cfg, const TrainPlan& plan, std::ostream* log) {
  const SplitOptions sopts{cfg.sigma_fraction, cfg.exclude_acs};
  if (plan.loss == LossKind::selfsup_kspace) assign_splits(train, plan.rho, plan.scheme, plan.split_seed, sopts);
  FitOptions o;
  o.loss = plan.loss;
  o.epochs = cfg.epochs;
  o.lr = cfg.lr;
  o.seed = plan.train_seed;
  o.resample_splits = cfg.resample_splits;
  o.split_options = sopts;
  if (log)
    o.on_epoch = [&](std::size_t e, double loss, const NetworkParams& p) {
      *log << "  epoch " << e + 1 << "/" << cfg.epochs << " loss " << loss << " mu " << p.mu() << '\n';
      log->flush();
    };
  return fit(train, cfg.net, o);
}

ComplexImage reconstruct_one(const Scan& scan, Solver solver, const RunConfig& cfg, const NetworkParams* params) {
  switch (solver) {
    case Solver::cgsense:
      return cg_sense(scan.omega_operator(), scan.kspace, CgOptions{cfg.net.cg_iters, cfg.cg_tol, true});
    case Solver::tgv: {
      TgvOptions t;
      t.alpha1 = cfg.tgv_alpha1;
      t.alpha0 = cfg.tgv_alpha0;
      t.iters = cfg.tgv_iters;
      t.objective_every = 0;
      return tgv_reconstruct(scan.omega_operator(), scan.kspace, t);
    }
    case Solver::network:
      if (!params) throw ConfigError("network reconstruction needs trained parameters");
      return reconstruct_network(*params, scan);
  }
  throw ConfigError("unknown solver");
}

std::vector<ComplexImage> reconstruct_all(const std::vector<Scan>& scans, Solver solver, const RunConfig& cfg,
                                          const NetworkParams* params) {
  std::vector<ComplexImage> out(scans.size());
  const std::size_t nthreads = std::min(recon_threads(), std::max<std::size_t>(scans.size(), 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < scans.size(); i = next++) {
      try {
        out[i] = reconstruct_one(scans[i], solver, cfg, params);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<MetricReport> score(const std::vector<Scan>& scans, const std::vector<ComplexImage>& recon,
                                const std::string& method, std::optional<double> rho, const std::string& scheme) {
  if (scans.size() != recon.size()) throw ShapeError("one reconstruction per scan is required");
  std::vector<MetricReport> rows;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    if (!scans[i].ref_image) throw ConfigError("scan " + scans[i].scan_id + " has no reference image to score against");
    rows.push_back({scans[i].scan_id, method, rho, scheme, nmse(*scans[i].ref_image, recon[i]),
                    ssim(*scans[i].ref_image, recon[i])});
  }
  return rows;
}

double mean_nmse(const std::vector<MetricReport>& rows) {
  if (rows.empty()) throw ShapeError("no metric rows");
  double s = 0.0;
  for (const auto& r : rows) s += r.nmse;
  return s / static_cast<double>(rows.size());
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"lambda-scheme", "rho-sweep", "compare"};
  return names;
}

SuiteResult run_suite(const std::string& suite, const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  if (suite == "compare") return compare_suite(cfg, log);
  if (suite == "rho-sweep") return rho_sweep_suite(cfg, log);
  if (suite == "lambda-scheme") return lambda_scheme_suite(cfg, log);
  throw ConfigError("unknown experiment suite '" + suite + "' (expected lambda-scheme, rho-sweep or compare)");
}

}  // namespace ssdu
