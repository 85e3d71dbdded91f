#include "ssdu/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <thread>

#include "ssdu/metrics.hpp"

namespace ssdu {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

std::size_t as_count(const std::string& key, const json& v) {
  if (!v.is_number_unsigned()) bad(key, "expected a non-negative integer");
  return v.get<std::size_t>();
}

std::uint64_t as_u64(const std::string& key, const json& v) {
  if (!v.is_number_unsigned()) bad(key, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

double as_real(const std::string& key, const json& v) {
  if (!v.is_number()) bad(key, "expected a number");
  return v.get<double>();
}

bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) bad(key, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) bad(key, "expected a string");
  return v.get<std::string>();
}

template <class F>
auto parsed(const std::string& key, const json& v, F parse) {
  try {
    return parse(as_string(key, v));
  } catch (const ParameterError& e) {
    bad(key, e.what());
  }
}

using Setter = std::function<void(RunConfig&, const std::string&, const json&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"data", [](RunConfig& c, const std::string& k, const json& v) { c.data = as_string(k, v); }},
      {"test_data", [](RunConfig& c, const std::string& k, const json& v) { c.test_data = as_string(k, v); }},
      {"out", [](RunConfig& c, const std::string& k, const json& v) { c.out = as_string(k, v); }},
      {"model", [](RunConfig& c, const std::string& k, const json& v) { c.model = as_string(k, v); }},
      {"recon", [](RunConfig& c, const std::string& k, const json& v) { c.recon = as_string(k, v); }},
      {"name", [](RunConfig& c, const std::string& k, const json& v) { c.name = as_string(k, v); }},
      {"scans", [](RunConfig& c, const std::string& k, const json& v) { c.scans = as_count(k, v); }},
      {"test_scans", [](RunConfig& c, const std::string& k, const json& v) { c.test_scans = as_count(k, v); }},
      {"size", [](RunConfig& c, const std::string& k, const json& v) { c.size = as_count(k, v); }},
      {"coils", [](RunConfig& c, const std::string& k, const json& v) { c.coils = as_count(k, v); }},
      {"noise", [](RunConfig& c, const std::string& k, const json& v) { c.noise = as_real(k, v); }},
      {"accel", [](RunConfig& c, const std::string& k, const json& v) { c.accel = as_count(k, v); }},
      {"acs", [](RunConfig& c, const std::string& k, const json& v) { c.acs = as_count(k, v); }},
      {"rho", [](RunConfig& c, const std::string& k, const json& v) { c.rho = as_real(k, v); }},
      {"split_scheme",
       [](RunConfig& c, const std::string& k, const json& v) {
         c.split_scheme = parsed(k, v, [](const std::string& s) { return parse_split_scheme(s); });
       }},
      {"sigma_fraction", [](RunConfig& c, const std::string& k, const json& v) { c.sigma_fraction = as_real(k, v); }},
      {"exclude_acs", [](RunConfig& c, const std::string& k, const json& v) { c.exclude_acs = as_bool(k, v); }},
      {"unrolls", [](RunConfig& c, const std::string& k, const json& v) { c.net.unrolls = as_count(k, v); }},
      {"cg_iters", [](RunConfig& c, const std::string& k, const json& v) { c.net.cg_iters = as_count(k, v); }},
      {"channels", [](RunConfig& c, const std::string& k, const json& v) { c.net.channels = as_count(k, v); }},
      {"res_blocks", [](RunConfig& c, const std::string& k, const json& v) { c.net.res_blocks = as_count(k, v); }},
      {"kernel", [](RunConfig& c, const std::string& k, const json& v) { c.net.kernel = as_count(k, v); }},
      {"residual_scale", [](RunConfig& c, const std::string& k, const json& v) { c.net.scale = as_real(k, v); }},
      {"initial_mu", [](RunConfig& c, const std::string& k, const json& v) { c.net.initial_mu = as_real(k, v); }},
      {"zero_init_output",
       [](RunConfig& c, const std::string& k, const json& v) { c.net.zero_init_output = as_bool(k, v); }},
      {"loss",
       [](RunConfig& c, const std::string& k, const json& v) {
         c.loss = parsed(k, v, [](const std::string& s) { return parse_loss_kind(s); });
       }},
      {"epochs", [](RunConfig& c, const std::string& k, const json& v) { c.epochs = as_count(k, v); }},
      {"lr", [](RunConfig& c, const std::string& k, const json& v) { c.lr = as_real(k, v); }},
      {"checkpoint_every",
       [](RunConfig& c, const std::string& k, const json& v) { c.checkpoint_every = as_count(k, v); }},
      {"resample_splits", [](RunConfig& c, const std::string& k, const json& v) { c.resample_splits = as_bool(k, v); }},
      {"solver",
       [](RunConfig& c, const std::string& k, const json& v) {
         c.solver = parsed(k, v, [](const std::string& s) { return parse_solver(s); });
       }},
      {"cg_tol", [](RunConfig& c, const std::string& k, const json& v) { c.cg_tol = as_real(k, v); }},
      {"tgv_alpha1", [](RunConfig& c, const std::string& k, const json& v) { c.tgv_alpha1 = as_real(k, v); }},
      {"tgv_alpha0", [](RunConfig& c, const std::string& k, const json& v) { c.tgv_alpha0 = as_real(k, v); }},
      {"tgv_iters", [](RunConfig& c, const std::string& k, const json& v) { c.tgv_iters = as_count(k, v); }},
      {"rhos",
       [](RunConfig& c, const std::string& k, const json& v) {
         if (!v.is_array()) bad(k, "expected a list of numbers");
         c.rhos.clear();
         for (const auto& x : v) c.rhos.push_back(as_real(k, x));
       }},
      {"lambda_rho", [](RunConfig& c, const std::string& k, const json& v) { c.lambda_rho = as_real(k, v); }},
      {"repeats", [](RunConfig& c, const std::string& k, const json& v) { c.repeats = as_count(k, v); }},
      {"images", [](RunConfig& c, const std::string& k, const json& v) { c.images = as_bool(k, v); }},
      {"seed", [](RunConfig& c, const std::string& k, const json& v) { c.seed = as_u64(k, v); }},
  };
  return table;
}

void require(bool ok, const std::string& name, const std::string& range, const std::string& got) {
  if (!ok) throw ConfigError(name + " must be " + range + ", got " + got);
}

std::string num(double v) { return format_double(v); }

}  // namespace

std::string_view to_string(Solver s) noexcept {
  switch (s) {
    case Solver::cgsense:
      return "cgsense";
    case Solver::tgv:
      return "tgv";
    case Solver::network:
      return "network";
  }
  return "unknown";
}

Solver parse_solver(std::string_view s) {
  if (s == "cgsense" || s == "cg-sense") return Solver::cgsense;
  if (s == "tgv") return Solver::tgv;
  if (s == "network") return Solver::network;
  throw ParameterError("solver must be one of cgsense, tgv, network; got '" + std::string(s) + "'");
}

void apply_json(RunConfig& cfg, const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, key, value);
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  apply_json(cfg, j);
}

json to_json(const RunConfig& c) {
  return json{{"data", c.data},
              {"test_data", c.test_data},
              {"out", c.out},
              {"model", c.model},
              {"recon", c.recon},
              {"name", c.name},
              {"scans", c.scans},
              {"test_scans", c.test_scans},
              {"size", c.size},
              {"coils", c.coils},
              {"noise", c.noise},
              {"accel", c.accel},
              {"acs", c.acs},
              {"rho", c.rho},
              {"split_scheme", std::string(to_string(c.split_scheme))},
              {"sigma_fraction", c.sigma_fraction},
              {"exclude_acs", c.exclude_acs},
              {"unrolls", c.net.unrolls},
              {"cg_iters", c.net.cg_iters},
              {"channels", c.net.channels},
              {"res_blocks", c.net.res_blocks},
              {"kernel", c.net.kernel},
              {"residual_scale", c.net.scale},
              {"initial_mu", c.net.initial_mu},
              {"zero_init_output", c.net.zero_init_output},
              {"loss", std::string(to_string(c.loss))},
              {"epochs", c.epochs},
              {"lr", c.lr},
              {"checkpoint_every", c.checkpoint_every},
              {"resample_splits", c.resample_splits},
              {"solver", std::string(to_string(c.solver))},
              {"cg_tol", c.cg_tol},
              {"tgv_alpha1", c.tgv_alpha1},
              {"tgv_alpha0", c.tgv_alpha0},
              {"tgv_iters", c.tgv_iters},
              {"rhos", c.rhos},
              {"lambda_rho", c.lambda_rho},
              {"repeats", c.repeats},
              {"images", c.images},
              {"seed", c.seed}};
}

void validate(const RunConfig& c) {
  const auto open01 = [](double v) { return v > 0.0 && v < 1.0; };
  require(c.scans >= 1, "scans", ">= 1", std::to_string(c.scans));
  require(c.test_scans >= 1, "test_scans", ">= 1", std::to_string(c.test_scans));
  require(is_power_of_two(c.size) && c.size >= 8, "size", "a power of two >= 8", std::to_string(c.size));
  require(c.coils >= 1, "coils", ">= 1", std::to_string(c.coils));
  require(std::isfinite(c.noise) && c.noise >= 0.0, "noise", ">= 0", num(c.noise));
  require(c.accel >= 1 && c.accel <= c.size, "accel", "in [1, size]", std::to_string(c.accel));
  require(c.acs <= c.size, "acs", "in [0, size]", std::to_string(c.acs));
  require(open01(c.rho), "rho", "in (0, 1)", num(c.rho));
  require(std::isfinite(c.sigma_fraction) && c.sigma_fraction > 0.0, "sigma_fraction", "> 0", num(c.sigma_fraction));
  require(c.net.unrolls >= 1, "unrolls", ">= 1", std::to_string(c.net.unrolls));
  require(c.net.cg_iters >= 1, "cg_iters", ">= 1", std::to_string(c.net.cg_iters));
  require(c.net.channels >= 1, "channels", ">= 1", std::to_string(c.net.channels));
  require(c.net.kernel % 2 == 1, "kernel", "an odd integer", std::to_string(c.net.kernel));
  require(std::isfinite(c.net.scale), "residual_scale", "finite", num(c.net.scale));
  require(std::isfinite(c.net.initial_mu) && c.net.initial_mu > 0.0, "initial_mu", "> 0", num(c.net.initial_mu));
  require(std::isfinite(c.lr) && c.lr > 0.0, "lr", "> 0", num(c.lr));
  require(std::isfinite(c.cg_tol) && c.cg_tol >= 0.0, "cg_tol", ">= 0", num(c.cg_tol));
  require(std::isfinite(c.tgv_alpha1) && c.tgv_alpha1 > 0.0, "tgv_alpha1", "> 0", num(c.tgv_alpha1));
  require(std::isfinite(c.tgv_alpha0) && c.tgv_alpha0 > 0.0, "tgv_alpha0", "> 0", num(c.tgv_alpha0));
  require(c.tgv_iters >= 1, "tgv_iters", ">= 1", std::to_string(c.tgv_iters));
  require(!c.rhos.empty(), "rhos", "a non-empty list", "[]");
  for (double r : c.rhos) require(open01(r), "rhos", "values in (0, 1)", num(r));
  require(open01(c.lambda_rho), "lambda_rho", "in (0, 1)", num(c.lambda_rho));
  require(c.repeats >= 1, "repeats", ">= 1", std::to_string(c.repeats));
}

std::size_t recon_threads() {
  if (const char* env = std::getenv("RECON_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError("RECON_THREADS must be a positive integer, got '" + std::string(env) + "'");
    return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace ssdu
