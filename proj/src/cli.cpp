#include "ssdu/cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "ssdu/config.hpp"
#include "ssdu/dataio.hpp"
#include "ssdu/experiments.hpp"
#include "ssdu/rng.hpp"

namespace ssdu::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Kind { count, real, text, real_list };

// Values given on the command line, keyed like config-file entries.
struct Overlay {
  json values = json::object();
  std::string config_file;
};

json convert(const std::string& key, const std::string& s, Kind kind) {
  const auto fail = [&](const char* what) -> json {
    throw ConfigError("--" + key + ": expected " + what + ", got '" + s + "'");
  };
  switch (kind) {
    case Kind::count: {
      std::uint64_t v = 0;
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) return fail("a non-negative integer");
      return v;
    }
    case Kind::real: {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) return fail("a number");
      return v;
    }
    case Kind::real_list: {
      json list = json::array();
      std::size_t start = 0;
      while (start <= s.size()) {
        const std::size_t end = std::min(s.find(',', start), s.size());
        list.push_back(convert(key, s.substr(start, end - start), Kind::real));
        start = end + 1;
      }
      return list;
    }
    case Kind::text:
      return s;
  }
  return nullptr;
}

std::string flag_name(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

class Builder {
 public:
  Builder(CLI::App* app, Overlay& ov) : app_(app), ov_(ov) {
    app_->add_option("--config", ov_.config_file, "JSON file of settings; flags given here take precedence")
        ->check(CLI::ExistingFile);
  }

  Builder& opt(const std::string& key, Kind kind, const std::string& help) {
    json& dst = ov_.values;
    static const std::map<Kind, const char*> type_names{
        {Kind::count, "UINT"}, {Kind::real, "NUM"}, {Kind::text, "TEXT"}, {Kind::real_list, "NUM,..."}};
    app_->add_option_function<std::string>(
            flag_name(key), [&dst, key, kind](const std::string& s) { dst[key] = convert(key, s, kind); }, help)
        ->type_name(type_names.at(kind));
    return *this;
  }

  Builder& flag(const std::string& key, const std::string& help) {
    json& dst = ov_.values;
    app_->add_flag_function(
        flag_name(key), [&dst, key](std::int64_t) { dst[key] = true; }, help);
    return *this;
  }

  Builder& negated(const std::string& key, const std::string& help) {
    json& dst = ov_.values;
    app_->add_flag_function(
        "--no-" + flag_name(key).substr(2), [&dst, key](std::int64_t) { dst[key] = false; }, help);
    return *this;
  }

  Builder& cohort() {
    return opt("scans", Kind::count, "number of synthetic scans")
        .opt("size", Kind::count, "image rows and columns (power of two)")
        .opt("coils", Kind::count, "receive coils")
        .opt("noise", Kind::real, "k-space noise std per real component")
        .opt("accel", Kind::count, "acceleration of the column mask")
        .opt("acs", Kind::count, "fully sampled center columns");
  }

  Builder& split() {
    return opt("rho", Kind::real, "fraction of acquired points held out for the loss")
        .opt("split_scheme", Kind::text, "uniform or gaussian")
        .opt("sigma_fraction", Kind::real, "Gaussian selection width as a fraction of the columns")
        .flag("exclude_acs", "never choose ACS points for the loss set");
  }

  Builder& network() {
    return opt("unrolls", Kind::count, "unrolled iterations")
        .opt("cg_iters", Kind::count, "CG iterations per data-consistency step (also CG-SENSE)")
        .opt("channels", Kind::count, "feature channels")
        .opt("res_blocks", Kind::count, "residual blocks")
        .opt("kernel", Kind::count, "convolution kernel size")
        .opt("residual_scale", Kind::real, "residual branch scaling")
        .opt("initial_mu", Kind::real, "initial data-consistency weight");
  }

  Builder& training() {
    return opt("loss", Kind::text, "supervised or selfsup")
        .opt("epochs", Kind::count, "training epochs")
        .opt("lr", Kind::real, "Adam learning rate")
        .flag("resample_splits", "draw a fresh split every epoch (experimental)");
  }

  Builder& solvers() {
    return opt("solver", Kind::text, "cgsense, tgv or network")
        .opt("cg_tol", Kind::real, "relative residual tolerance for CG")
        .opt("tgv_alpha1", Kind::real, "TGV first-order weight")
        .opt("tgv_alpha0", Kind::real, "TGV second-order weight")
        .opt("tgv_iters", Kind::count, "primal-dual iterations");
  }

  Builder& seed() { return opt("seed", Kind::count, "master seed for all randomness"); }

 private:
  CLI::App* app_;
  Overlay& ov_;
};

RunConfig resolve(const Overlay& ov) {
  RunConfig cfg;
  if (!ov.config_file.empty()) apply_config_file(cfg, ov.config_file);
  apply_json(cfg, ov.values);
  validate(cfg);
  return cfg;
}

void require_path(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

void check_required(const std::string& cmd, RunConfig& cfg, bool solver_given) {
  static const std::map<std::string, std::vector<std::pair<std::string RunConfig::*, const char*>>> needs{
      {"gen-data", {{&RunConfig::out, "--out"}}},
      {"gen-split", {{&RunConfig::data, "--data"}, {&RunConfig::out, "--out"}}},
      {"train", {{&RunConfig::data, "--data"}, {&RunConfig::out, "--out"}}},
      {"reconstruct", {{&RunConfig::data, "--data"}, {&RunConfig::out, "--out"}}},
      {"evaluate", {{&RunConfig::data, "--data"}, {&RunConfig::recon, "--recon"}}},
      {"experiment", {{&RunConfig::out, "--out"}}}};
  for (const auto& [member, flag] : needs.at(cmd)) require_path(cfg.*member, flag);
  if (cmd == "reconstruct") {
    if (!solver_given && !cfg.model.empty()) cfg.solver = Solver::network;
    if (cfg.solver == Solver::network) require_path(cfg.model, "--model");
  }
}

void require_dataset(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "manifest.json"))
    throw Error("no dataset manifest at " + (fs::path(dir) / "manifest.json").string());
}

json generator_json(const RunConfig& cfg) {
  return json{{"scans", cfg.scans}, {"size", cfg.size},   {"coils", cfg.coils},
              {"noise", cfg.noise}, {"accel", cfg.accel}, {"acs", cfg.acs}};
}

int gen_data(const RunConfig& cfg, std::ostream& out) {
  CohortSpec s;
  s.scans = cfg.scans;
  s.size = cfg.size;
  s.coils = cfg.coils;
  s.noise_sigma = cfg.noise;
  s.accel = cfg.accel;
  s.acs = cfg.acs;
  s.seed = cfg.seed;
  Dataset ds{cfg.name, cfg.seed, generator_json(cfg), make_cohort(s)};
  write_dataset(cfg.out, ds);
  out << "wrote " << ds.scans.size() << " scans to " << cfg.out << '\n';
  return 0;
}

int gen_split(const RunConfig& cfg, std::ostream& out) {
  require_dataset(cfg.data);
  Dataset ds = read_dataset(cfg.data);
  assign_splits(ds.scans, cfg.rho, cfg.split_scheme, cfg.seed, SplitOptions{cfg.sigma_fraction, cfg.exclude_acs});
  write_dataset(cfg.out, ds);
  const auto& sp = *ds.scans.front().split;
  out << "split " << ds.scans.size() << " scans (rho " << format_double(cfg.rho) << ", "
      << to_string(cfg.split_scheme) << "): |Lambda| = " << sp.lambda.count() << " of "
      << ds.scans.front().mask.picked.count() << " in the first scan; wrote " << cfg.out << '\n';
  return 0;
}

int train(const RunConfig& cfg, std::ostream& out) {
  require_dataset(cfg.data);
  Dataset ds = read_dataset(cfg.data);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);

  const SplitOptions sopts{cfg.sigma_fraction, cfg.exclude_acs};
  if (cfg.loss == LossKind::selfsup_kspace) {
    bool missing = false;
    for (const auto& s : ds.scans) missing = missing || !s.split;
    if (missing) {
      out << "dataset has no splits; drawing them with rho " << format_double(cfg.rho) << '\n';
      assign_splits(ds.scans, cfg.rho, cfg.split_scheme, derive_seed(cfg.seed, 100), sopts);
    }
  }

  FitOptions o;
  o.loss = cfg.loss;
  o.epochs = cfg.epochs;
  o.lr = cfg.lr;
  o.seed = derive_seed(cfg.seed, 200);
  o.resample_splits = cfg.resample_splits;
  o.split_options = sopts;
  const json extra{{"loss", std::string(to_string(cfg.loss))}, {"dataset", cfg.data}, {"seed", cfg.seed}};
  o.on_epoch = [&](std::size_t e, double loss, const NetworkParams& p) {
    out << "epoch " << e + 1 << '/' << cfg.epochs << " loss " << loss << " mu " << p.mu() << '\n';
    out.flush();
    if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0) {
      json ex = extra;
      ex["epoch"] = e + 1;
      save_params(dir / ("checkpoint_epoch" + std::to_string(e + 1)), p, ex);
    }
  };
  const FitResult r = fit(ds.scans, cfg.net, o);
  json ex = extra;
  ex["epoch"] = cfg.epochs;
  save_params(dir / "model", r.params, ex);
  std::ofstream f(dir / "training_loss.csv", std::ios::binary);
  f << "epoch,loss\n";
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) f << e + 1 << ',' << format_double(r.epoch_loss[e]) << '\n';
  out << "wrote " << (dir / "model.ksrd").string() << '\n';
  return 0;
}

int reconstruct(const RunConfig& cfg, std::ostream& out) {
  std::optional<NetworkParams> params;
  if (cfg.solver == Solver::network) {
    params = load_params(cfg.model);
  }
  require_dataset(cfg.data);
  const Dataset ds = read_dataset(cfg.data);
  const auto images = reconstruct_all(ds.scans, cfg.solver, cfg, params ? &*params : nullptr);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  json entries = json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string& id = ds.scans[i].scan_id;
    write_blob(dir / (id + ".ksrd"), to_blob(images[i]));
    write_pgm(dir / (id + ".pgm"), images[i]);
    entries.push_back({{"scan_id", id}, {"image", id + ".ksrd"}, {"pgm", id + ".pgm"}});
  }
  const std::string method = cfg.solver == Solver::cgsense ? "cg-sense" : std::string(to_string(cfg.solver));
  const json manifest{{"format", "ssdu-recon"}, {"method", method},   {"solver", std::string(to_string(cfg.solver))},
                      {"dataset", cfg.data},    {"model", cfg.model}, {"images", entries}};
  std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
  out << "reconstructed " << images.size() << " scans with " << method << " into " << cfg.out << '\n';
  return 0;
}

int evaluate(const RunConfig& cfg, std::ostream& out) {
  require_dataset(cfg.data);
  const fs::path mpath = fs::path(cfg.recon) / "manifest.json";
  std::ifstream mf(mpath);
  if (!mf) throw Error("no reconstruction manifest at " + mpath.string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw Error(mpath.string() + ": " + e.what());
  }
  const std::string method = manifest.value("method", std::string("unknown"));
  std::map<std::string, std::string> files;
  for (const auto& e : manifest.at("images")) files[e.at("scan_id").get<std::string>()] = e.at("image").get<std::string>();

  const Dataset ds = read_dataset(cfg.data);
  std::vector<ComplexImage> recon;
  for (const auto& s : ds.scans) {
    const auto it = files.find(s.scan_id);
    if (it == files.end()) throw Error("no reconstruction of " + s.scan_id + " in " + cfg.recon);
    recon.push_back(image_from_blob(read_blob(fs::path(cfg.recon) / it->second)));
  }
  auto rows = score(ds.scans, recon, method, std::nullopt, "");
  sort_reports(rows);
  if (cfg.out.empty()) {
    write_metrics_csv(out, rows);
  } else {
    const fs::path p(cfg.out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    write_metrics_csv(f, rows);
    out << "mean NMSE " << mean_nmse(rows) << " over " << rows.size() << " scans; wrote " << cfg.out << '\n';
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised unrolled MRI reconstruction", "ssdu"};
  app.require_subcommand(1);
  app.fallthrough(false);

  std::map<std::string, Overlay> overlays;
  std::string suite;
  std::map<std::string, CLI::App*> subs;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->allow_extras();
    subs[name] = s;
    return Builder(s, overlays[name]);
  };

  sub("gen-data", "synthesize a multi-coil phantom dataset")
      .opt("out", Kind::text, "output dataset directory")
      .opt("name", Kind::text, "dataset name")
      .cohort()
      .seed();
  sub("gen-split", "attach loss/data-consistency splits to a dataset")
      .opt("data", Kind::text, "input dataset directory")
      .opt("out", Kind::text, "output dataset directory")
      .split()
      .seed();
  sub("train", "train the unrolled network")
      .opt("data", Kind::text, "training dataset directory")
      .opt("out", Kind::text, "directory for model, checkpoints and loss log")
      .opt("checkpoint_every", Kind::count, "save a checkpoint every N epochs (0 = never)")
      .training()
      .network()
      .split()
      .seed();
  sub("reconstruct", "reconstruct every scan of a dataset")
      .opt("data", Kind::text, "dataset directory")
      .opt("out", Kind::text, "output directory for images")
      .opt("model", Kind::text, "trained model stem (for --solver network)")
      .solvers()
      .opt("cg_iters", Kind::count, "CG iterations");
  sub("evaluate", "score reconstructions against reference images")
      .opt("data", Kind::text, "dataset directory with reference images")
      .opt("recon", Kind::text, "directory written by reconstruct")
      .opt("out", Kind::text, "metrics CSV path (stdout when omitted)");
  auto ex = sub("experiment", "run an experiment suite");
  subs["experiment"]
      ->add_option("suite", suite, "lambda-scheme, rho-sweep or compare")
      ->required()
      ->check(CLI::IsMember(suite_names()));
  ex.opt("out", Kind::text, "output directory")
      .opt("data", Kind::text, "training dataset directory (synthesized when omitted)")
      .opt("test_data", Kind::text, "test dataset directory (synthesized when omitted)")
      .opt("test_scans", Kind::count, "number of synthetic test scans")
      .cohort()
      .split()
      .network()
      .training()
      .solvers()
      .opt("rhos", Kind::real_list, "comma-separated rho values for rho-sweep")
      .opt("lambda_rho", Kind::real, "rho used by lambda-scheme")
      .opt("repeats", Kind::count, "training seeds for lambda-scheme")
      .negated("images", "skip PGM output")
      .seed();

  std::vector<const char*> argv{"ssdu"};
  for (const auto& a : args) argv.push_back(a.c_str());
  RunConfig cfg;
  std::string chosen;
  try {
    if (!args.empty() && !args[0].starts_with("-") && !subs.contains(args[0]))
      throw CLI::ExtrasError("unknown subcommand '" + args[0] + "'", CLI::ExitCodes::ExtrasError);
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (const auto rest = app.remaining(true); !rest.empty()) {
      std::string list;
      for (const auto& r : rest) list += (list.empty() ? "" : " ") + r;
      throw CLI::ExtrasError("unexpected arguments: " + list, CLI::ExitCodes::ExtrasError);
    }
    for (const auto& [name, s] : subs)
      if (s->parsed()) chosen = name;
    cfg = resolve(overlays[chosen]);
    check_required(chosen, cfg, overlays[chosen].values.contains("solver"));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (chosen == "gen-data") return gen_data(cfg, out);
    if (chosen == "gen-split") return gen_split(cfg, out);
    if (chosen == "train") return train(cfg, out);
    if (chosen == "reconstruct") return reconstruct(cfg, out);
    if (chosen == "evaluate") return evaluate(cfg, out);
    if (chosen == "experiment") {
      run_suite(suite, cfg, out);
      out << "wrote " << (fs::path(cfg.out) / "metrics.csv").string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << "error: no subcommand\n";
  return 2;
}

}  // namespace ssdu::cli
