#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "spc/baselines.hpp"
#include "spc/dgp.hpp"
#include "spc/diagnostics.hpp"
#include "spc/error.hpp"
#include "spc/gmm.hpp"
#include "spc/linalg.hpp"
#include "spc/parallel.hpp"
#include "spc/rng.hpp"
#include "spc/semiparametric.hpp"
#include "spc/stats.hpp"

namespace spc::cli {

namespace {

enum class Type { Str, Int, Real, StrList, RealGrid, Bool, Params };

struct Key {
  const char* name;
  Type type;
  std::vector<std::string> commands;  // empty: every command
  const char* help;
};

const std::vector<std::string> kCommands = {"estimate", "sensitivity", "overid", "simulate", "did", "legacy-coca"};
const std::vector<std::string> kDataCommands = {"estimate", "sensitivity", "overid", "did", "legacy-coca"};
const std::vector<std::string> kEstimatorCommands = {"estimate", "sensitivity", "overid"};
const std::vector<std::string> kCrossFitCommands = {"estimate", "overid"};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"config", Type::Str, {}, "JSON file with settings (flags take precedence)"},
      {"output", Type::Str, {}, "report path (simulate: CSV data path)"},
      {"seed", Type::Str, {}, "master seed, or 'random'"},
      {"alpha", Type::Real, {}, "significance level"},
      {"threads", Type::Int, {}, "worker threads"},
      {"input", Type::Str, kDataCommands, "input CSV"},
      {"y", Type::Str, kDataCommands, "outcome column"},
      {"a", Type::Str, kDataCommands, "treatment column (0/1)"},
      {"w", Type::StrList, kDataCommands, "proxy columns"},
      {"x", Type::StrList, kDataCommands, "covariate columns"},
      {"estimator", Type::Str, kEstimatorCommands, "semiparametric | gmm-eps | gmm-bridge | gmm-dr"},
      {"lambda", Type::Str, kEstimatorCommands, "GMM penalty, or 'cv'"},
      {"lambda-grid", Type::RealGrid, kEstimatorCommands, "GMM penalty candidates for cv"},
      {"s-y", Type::Str, kEstimatorCommands, "log-odds basis terms, e.g. 1,y,x1 (or none)"},
      {"s-w", Type::Str, kEstimatorCommands, "bridge basis terms"},
      {"r-y", Type::Str, kEstimatorCommands, "bridge instrument terms"},
      {"r-w", Type::Str, kEstimatorCommands, "odds instrument terms"},
      {"k-folds", Type::Int, kCrossFitCommands, "cross-fitting folds"},
      {"median-reps", Type::Int, kCrossFitCommands, "repeated sample splits"},
      {"bootstrap-b", Type::Int, kCrossFitCommands, "multiplier bootstrap draws"},
      {"hyper-lambdas", Type::RealGrid, kCrossFitCommands, "kernel regularization candidates"},
      {"hyper-kappas", Type::RealGrid, kCrossFitCommands, "bandwidth multipliers of the median heuristic"},
      {"inner-folds", Type::Int, kCrossFitCommands, "inner cross-validation folds"},
      {"risk", Type::Str, kCrossFitCommands, "vstat | projected"},
      {"ratio-remedy", Type::Bool, kCrossFitCommands, "pilot-ratio odds fit when the pilot spread exceeds 10"},
      {"alpha-w-grid", Type::RealGrid, {"sensitivity"}, "sensitivity parameter values"},
      {"csv", Type::Str, {"sensitivity"}, "write (alpha_w, psi) CSV here"},
      {"w-small", Type::StrList, {"overid"}, "proxy subset assumed valid under the null"},
      {"kind", Type::Str, {"simulate"}, "gaussian-a3 | binary-discrete | rank-preserving | latent-monotone"},
      {"n", Type::Int, {"simulate"}, "sample size"},
      {"tau", Type::Real, {"simulate"}, "additive effect on treated units"},
      {"param", Type::Params, {"simulate"}, "generator parameter name=value"},
      {"pre-period", Type::Str, {"did"}, "latest | average | column number"},
      {"psi-grid", Type::RealGrid, {"legacy-coca"}, "grid for the confidence-set search"},
  };
  return table;
}

bool applies(const Key& k, const std::string& command) {
  return k.commands.empty() || std::find(k.commands.begin(), k.commands.end(), command) != k.commands.end();
}

const Key* find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

double parse_real(const std::string& key, const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s[0] == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    fail(ErrorCode::InvalidArgument, "--" + key + ": not a number: '" + s + "'");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorCode::InvalidArgument, "--" + key + ": not an integer: '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

// Canonical JSON value for a key, from a flag string or a config-file value.
Json coerce(const Key& k, const Json& v) {
  const std::string key = k.name;
  auto bad = [&]() -> Json { fail(ErrorCode::InvalidArgument, "setting '" + key + "' has the wrong type"); };
  switch (k.type) {
    case Type::Str:
      if (v.is_string()) return v;
      if (v.is_number()) return v.dump();
      return bad();
    case Type::Int:
      if (v.is_number_integer()) return v;
      if (v.is_string()) return parse_int(key, v.get<std::string>());
      return bad();
    case Type::Real:
      if (v.is_number()) return v.get<double>();
      if (v.is_string()) return parse_real(key, v.get<std::string>());
      return bad();
    case Type::StrList: {
      Json out = Json::array();
      if (v.is_string()) {
        for (auto& s : split(v.get<std::string>(), ',')) out.push_back(s);
      } else if (v.is_array()) {
        for (const auto& e : v) {
          if (!e.is_string()) return bad();
          for (auto& s : split(e.get<std::string>(), ',')) out.push_back(s);
        }
      } else {
        return bad();
      }
      return out;
    }
    case Type::RealGrid: {
      Json out = Json::array();
      if (v.is_string()) {
        for (double d : parse_grid(v.get<std::string>())) out.push_back(d);
      } else if (v.is_array()) {
        for (const auto& e : v) {
          if (e.is_number()) {
            out.push_back(e.get<double>());
          } else if (e.is_string()) {
            for (double d : parse_grid(e.get<std::string>())) out.push_back(d);
          } else {
            return bad();
          }
        }
      } else {
        return bad();
      }
      return out;
    }
    case Type::Bool:
      if (v.is_boolean()) return v;
      if (v == "true") return true;
      if (v == "false") return false;
      return bad();
    case Type::Params: {
      Json out = Json::object();
      if (v.is_object()) {
        for (const auto& [name, val] : v.items()) {
          if (!val.is_number()) return bad();
          out[name] = val.get<double>();
        }
      } else if (v.is_array() || v.is_string()) {
        const Json items = v.is_string() ? Json::array({v}) : v;
        for (const auto& e : items) {
          if (!e.is_string()) return bad();
          for (const auto& kv : split(e.get<std::string>(), ',')) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) fail(ErrorCode::InvalidArgument, "--param expects name=value: " + kv);
            out[kv.substr(0, eq)] = parse_real("param", kv.substr(eq + 1));
          }
        }
      } else {
        return bad();
      }
      return out;
    }
  }
  return bad();
}

Json read_config_file(const std::string& path, const std::string& command) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::FileNotFound, "cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, "config '" + path + "': " + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::ParseError, "config '" + path + "' must hold a JSON object");
  Json out = Json::object();
  for (const auto& [name, val] : j.items()) {
    const Key* k = find_key(name);
    if (!k || !applies(*k, command) || name == "config") {
      fail(ErrorCode::UnknownFlag, "unknown setting '" + name + "' for " + command);
    }
    out[name] = coerce(*k, val);
  }
  return out;
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::vector<double> real_list(const Json& j, const char* key) {
  std::vector<double> out;
  if (j.contains(key)) {
    for (const auto& e : j.at(key)) out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::string> str_list(const Json& j, const char* key) {
  std::vector<std::string> out;
  if (j.contains(key)) {
    for (const auto& e : j.at(key)) out.push_back(e.get<std::string>());
  }
  return out;
}

Json config_echo(const RunConfig& c) {
  Json j = {{"command", c.command}};
  const bool data = c.command != "simulate";
  if (data) {
    j["input"] = c.input_csv;
    j["y"] = c.columns.y;
    j["a"] = c.columns.a;
    j["w"] = c.columns.w;
    j["x"] = c.columns.x;
  }
  j["seed"] = c.master_seed;
  j["alpha"] = c.alpha_level;
  if (c.command == "estimate" || c.command == "sensitivity" || c.command == "overid") {
    j["estimator"] = c.estimator;
    j["lambda"] = c.lambda ? Json(*c.lambda) : Json("cv");
    j["lambda-grid"] = c.lambda_grid;
    auto basis = [](const std::optional<std::string>& s) { return s ? Json(*s) : Json("default"); };
    j["s-y"] = basis(c.s_y);
    j["s-w"] = basis(c.s_w);
    j["r-y"] = basis(c.r_y);
    j["r-w"] = basis(c.r_w);
  }
  if (c.command == "estimate" || c.command == "overid") {
    j["k-folds"] = c.k_folds;
    j["median-reps"] = c.median_reps;
    j["bootstrap-b"] = c.bootstrap_b;
    j["hyper-lambdas"] = c.hyper_lambdas;
    j["hyper-kappas"] = c.hyper_kappas;
    j["inner-folds"] = c.inner_folds;
    j["risk"] = c.risk;
    j["ratio-remedy"] = c.ratio_remedy;
  }
  if (c.command == "sensitivity") j["alpha-w-grid"] = c.alpha_w_grid;
  if (c.command == "overid") j["w-small"] = c.w_small;
  if (c.command == "simulate") {
    j["kind"] = c.kind;
    j["n"] = c.n;
    j["tau"] = c.tau;
    j["param"] = c.params;
  }
  if (c.command == "did") j["pre-period"] = c.pre_period;
  if (c.command == "legacy-coca") j["psi-grid"] = c.psi_grid;
  return j;
}

void validate(const RunConfig& c) {
  if (!(c.alpha_level > 0.0 && c.alpha_level < 1.0)) fail(ErrorCode::InvalidArgument, "--alpha must lie in (0, 1)");
  if (c.threads < 1) fail(ErrorCode::InvalidArgument, "--threads must be positive");
  if (c.command == "simulate") {
    if (c.n < 1) fail(ErrorCode::InvalidArgument, "--n must be positive");
    if (c.output.empty()) fail(ErrorCode::MissingColumn, "simulate needs --output for the CSV");
    parse_dgp_kind(c.kind);
    return;
  }
  if (c.input_csv.empty()) fail(ErrorCode::MissingColumn, "missing --input");
  if (c.columns.y.empty()) fail(ErrorCode::MissingColumn, "missing --y");
  if (c.columns.a.empty()) fail(ErrorCode::MissingColumn, "missing --a");
  if (c.columns.w.empty()) fail(ErrorCode::MissingColumn, "missing --w");
  std::set<std::string> seen;
  std::vector<std::string> all = {c.columns.y, c.columns.a};
  all.insert(all.end(), c.columns.w.begin(), c.columns.w.end());
  all.insert(all.end(), c.columns.x.begin(), c.columns.x.end());
  for (const auto& name : all) {
    if (!seen.insert(name).second) fail(ErrorCode::ConflictingOptions, "column '" + name + "' is mapped twice");
  }
  if (c.command == "estimate" || c.command == "overid" || c.command == "sensitivity") {
    static const std::set<std::string> estimators = {"semiparametric", "gmm-eps", "gmm-bridge", "gmm-dr"};
    if (!estimators.count(c.estimator)) fail(ErrorCode::InvalidArgument, "unknown estimator '" + c.estimator + "'");
    if (c.k_folds < 2) fail(ErrorCode::ConflictingOptions, "--k-folds must be at least 2");
    if (c.median_reps < 1) fail(ErrorCode::InvalidArgument, "--median-reps must be positive");
    if (c.bootstrap_b < 2) fail(ErrorCode::InvalidArgument, "--bootstrap-b must be at least 2");
    if (c.inner_folds < 2) fail(ErrorCode::ConflictingOptions, "--inner-folds must be at least 2");
    if (c.risk != "vstat" && c.risk != "projected") fail(ErrorCode::InvalidArgument, "--risk must be vstat or projected");
    if (c.lambda && *c.lambda < 0.0) fail(ErrorCode::InvalidArgument, "--lambda must be non-negative");
    for (double v : c.lambda_grid) {
      if (!(v >= 0.0)) fail(ErrorCode::InvalidArgument, "--lambda-grid values must be non-negative");
    }
    for (double v : c.hyper_lambdas) {
      if (!(v > 0.0)) fail(ErrorCode::InvalidArgument, "--hyper-lambdas values must be positive");
    }
    for (double v : c.hyper_kappas) {
      if (!(v > 0.0)) fail(ErrorCode::InvalidArgument, "--hyper-kappas values must be positive");
    }
  }
  if (c.command == "sensitivity") {
    if (c.estimator != "gmm-eps") fail(ErrorCode::ConflictingOptions, "sensitivity analysis uses --estimator gmm-eps");
    if (c.alpha_w_grid.empty()) fail(ErrorCode::InvalidArgument, "--alpha-w-grid is empty");
    if (!std::is_sorted(c.alpha_w_grid.begin(), c.alpha_w_grid.end())) {
      fail(ErrorCode::InvalidArgument, "--alpha-w-grid must be sorted");
    }
  }
  if (c.command == "overid") {
    if (c.w_small.empty()) fail(ErrorCode::MissingColumn, "overid needs --w-small");
    for (const auto& s : c.w_small) {
      if (std::find(c.columns.w.begin(), c.columns.w.end(), s) == c.columns.w.end()) {
        fail(ErrorCode::ConflictingOptions, "--w-small column '" + s + "' is not among --w");
      }
    }
    if (c.w_small.size() >= c.columns.w.size()) {
      fail(ErrorCode::ConflictingOptions, "--w-small must be a proper subset of --w");
    }
  }
  if (c.command == "did") PrePeriodSelector::parse(c.pre_period);
  if (c.command == "legacy-coca" && c.columns.w.size() != 1) {
    fail(ErrorCode::ConflictingOptions, "legacy-coca takes exactly one --w column");
  }
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) fail(ErrorCode::InvalidArgument, "grid range must be start:stop:step");
    const double a = parse_real("grid", parts[0]);
    const double b = parse_real("grid", parts[1]);
    const double step = parse_real("grid", parts[2]);
    if (!(step > 0.0) || b < a) fail(ErrorCode::InvalidArgument, "grid range needs start <= stop and step > 0");
    const auto count = static_cast<long>(std::floor((b - a) / step + 1e-9));
    for (long i = 0; i <= count; ++i) out.push_back(a + static_cast<double>(i) * step);
    return out;
  }
  for (const auto& s : split(text, ',')) out.push_back(parse_real("grid", s));
  return out;
}

std::string command_help(const std::string& cmd) {
  static const std::map<std::string, std::string> help = {
      {"estimate", "estimate the ETT (semiparametric cross-fit or parametric GMM)"},
      {"sensitivity", "ETT over a grid of odds-sensitivity parameters"},
      {"overid", "compare estimates from all proxies and a valid subset"},
      {"simulate", "draw a synthetic dataset and its ground truth"},
      {"did", "difference-in-differences baseline"},
      {"legacy-coca", "negative-control outcome calibration baseline"},
  };
  const auto it = help.find(cmd);
  return it == help.end() ? std::string() : it->second;
}

RunConfig parse_config(const std::vector<std::string>& args) {
  CLI::App app{"Proxy-based estimation of the effect of treatment on the treated"};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::vector<std::string>>> raw;
  std::map<std::string, bool> no_remedy;
  for (const auto& cmd : kCommands) {
    CLI::App* sub = app.add_subcommand(cmd, command_help(cmd));
    for (const auto& k : keys()) {
      if (!applies(k, cmd)) continue;
      auto& slot = raw[cmd][k.name];
      if (k.type == Type::Bool) {
        sub->add_flag("--no-" + std::string(k.name), no_remedy[cmd], "disable: " + std::string(k.help));
        continue;
      }
      CLI::Option* opt = sub->add_option("--" + std::string(k.name), slot, k.help);
      if (k.type == Type::StrList || k.type == Type::Params) {
        opt->delimiter(',');
      } else {
        opt->expected(1);
      }
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested{app.help("", CLI::AppFormatMode::All)};
  } catch (const CLI::ExtrasError& e) {
    fail(ErrorCode::UnknownFlag, e.what());
  } catch (const CLI::ParseError& e) {
    fail(ErrorCode::InvalidArgument, e.what());
  }

  RunConfig c;
  for (const auto& cmd : kCommands) {
    if (app.got_subcommand(cmd)) c.command = cmd;
  }

  Json flags = Json::object();
  for (const auto& [name, values] : raw[c.command]) {
    if (values.empty()) continue;
    const Key& k = *find_key(name);
    if (k.type == Type::StrList || k.type == Type::Params) {
      flags[name] = coerce(k, Json(values));
    } else {
      flags[name] = coerce(k, Json(values.back()));
    }
  }
  if (no_remedy[c.command]) flags["ratio-remedy"] = false;

  Json merged = Json::object();
  if (flags.contains("config")) merged = read_config_file(flags["config"].get<std::string>(), c.command);
  for (const auto& [name, val] : flags.items()) {
    if (name != "config") merged[name] = val;
  }

  const Json& m = merged;
  c.input_csv = get_or<std::string>(m, "input", "");
  c.columns.y = get_or<std::string>(m, "y", "");
  c.columns.a = get_or<std::string>(m, "a", "");
  c.columns.w = str_list(m, "w");
  c.columns.x = str_list(m, "x");
  c.output = get_or<std::string>(m, "output", "");
  c.alpha_level = get_or<double>(m, "alpha", c.alpha_level);
  c.threads = static_cast<int>(get_or<long long>(m, "threads", c.threads));
  const std::string seed = get_or<std::string>(m, "seed", "20231");
  if (seed == "random") {
    std::random_device rd;
    c.master_seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  } else {
    const long long s = parse_int("seed", seed);
    if (s < 0) fail(ErrorCode::InvalidArgument, "--seed must be non-negative or 'random'");
    c.master_seed = static_cast<std::uint64_t>(s);
  }
  c.estimator = get_or<std::string>(m, "estimator", c.estimator);
  const std::string lambda = get_or<std::string>(m, "lambda", "cv");
  if (lambda != "cv") c.lambda = parse_real("lambda", lambda);
  c.lambda_grid = real_list(m, "lambda-grid");
  if (c.lambda_grid.empty()) c.lambda_grid = parse_grid("-6:0:0.5");
  if (!m.contains("lambda-grid")) {
    for (double& v : c.lambda_grid) v = std::pow(10.0, v);
  }
  if (m.contains("s-y")) c.s_y = m["s-y"].get<std::string>();
  if (m.contains("s-w")) c.s_w = m["s-w"].get<std::string>();
  if (m.contains("r-y")) c.r_y = m["r-y"].get<std::string>();
  if (m.contains("r-w")) c.r_w = m["r-w"].get<std::string>();
  c.k_folds = static_cast<int>(get_or<long long>(m, "k-folds", c.k_folds));
  c.median_reps = static_cast<int>(get_or<long long>(m, "median-reps", c.median_reps));
  c.bootstrap_b = static_cast<int>(get_or<long long>(m, "bootstrap-b", c.bootstrap_b));
  c.hyper_lambdas = real_list(m, "hyper-lambdas");
  c.hyper_kappas = real_list(m, "hyper-kappas");
  const HyperGrid grid;
  if (c.hyper_lambdas.empty()) c.hyper_lambdas = grid.lambdas;
  if (c.hyper_kappas.empty()) c.hyper_kappas = grid.kappa_multipliers;
  c.inner_folds = static_cast<int>(get_or<long long>(m, "inner-folds", c.inner_folds));
  c.risk = get_or<std::string>(m, "risk", c.risk);
  c.ratio_remedy = get_or<bool>(m, "ratio-remedy", c.ratio_remedy);
  c.alpha_w_grid = real_list(m, "alpha-w-grid");
  if (c.alpha_w_grid.empty()) c.alpha_w_grid = parse_grid("0:1:0.01");
  c.sensitivity_csv = get_or<std::string>(m, "csv", "");
  c.w_small = str_list(m, "w-small");
  c.kind = get_or<std::string>(m, "kind", c.kind);
  c.n = static_cast<long>(get_or<long long>(m, "n", c.n));
  c.tau = get_or<double>(m, "tau", c.tau);
  if (m.contains("param")) {
    for (const auto& [name, val] : m["param"].items()) c.params[name] = val.get<double>();
  }
  c.pre_period = get_or<std::string>(m, "pre-period", c.pre_period);
  c.psi_grid = real_list(m, "psi-grid");
  validate(c);
  c.echo = config_echo(c);
  return c;
}

namespace {

std::string summary_line(double psi, double se, std::pair<double, double> ci, double alpha) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "ETT = %.3f (SE %.3f, %g%% CI [%.3f, %.3f])", psi, se, 100.0 * (1.0 - alpha),
                ci.first, ci.second);
  return buf;
}

MomentSpec moment_spec(const RunConfig& c, const Dataset& data, MomentKind kind) {
  MomentSpec spec;
  spec.kind = kind;
  spec.basis = BasisSpec::defaults(static_cast<int>(data.w.cols()), static_cast<int>(data.x.cols()));
  if (c.s_y) spec.basis.s_y = FeatureMap::parse("y", *c.s_y);
  if (c.s_w) spec.basis.s_w = FeatureMap::parse("w", *c.s_w);
  if (c.r_y) spec.basis.r_y = FeatureMap::parse("y", *c.r_y);
  if (c.r_w) spec.basis.r_w = FeatureMap::parse("w", *c.r_w);
  // An empty odds model is the crude contrast; its instruments go with it.
  if (spec.basis.s_y.size() == 0 && !c.r_w) spec.basis.r_w = FeatureMap::parse("w", "none");
  if (spec.basis.s_w.size() == 0 && !c.r_y) spec.basis.r_y = FeatureMap::parse("y", "none");
  check_spec(spec);
  return spec;
}

MomentKind kind_of(const std::string& estimator) {
  if (estimator == "gmm-eps") return MomentKind::EPS;
  if (estimator == "gmm-bridge") return MomentKind::Bridge;
  return MomentKind::DoublyRobust;
}

MinimaxFitterOptions fitter_options(const RunConfig& c) {
  MinimaxFitterOptions o;
  o.tune = true;
  o.grid.lambdas = c.hyper_lambdas;
  o.grid.kappa_multipliers = c.hyper_kappas;
  o.inner_folds = c.inner_folds;
  o.risk = c.risk == "projected" ? RiskKind::Projected : RiskKind::VStatistic;
  o.ratio_remedy = c.ratio_remedy;
  return o;
}

struct GmmRun {
  GmmFit fit;
  Json lambda_info;
};

GmmRun run_gmm(const RunConfig& c, const Dataset& data, const MomentSpec& spec) {
  GmmRun r;
  double lambda = 0.0;
  if (c.lambda) {
    lambda = *c.lambda;
    r.lambda_info = {{"lambda", lambda}, {"selected_by", "fixed"}};
  } else {
    const LambdaSelection sel = cv_select_lambda(data, spec, c.lambda_grid, c.master_seed);
    lambda = sel.lambda;
    Json scores = Json::array();
    for (double s : sel.scores) scores.push_back(number_json(s));
    r.lambda_info = {{"lambda", lambda}, {"selected_by", "cv"}, {"candidates", sel.candidates}, {"scores", scores}};
  }
  r.fit = fit_gmm(data, spec, lambda, c.master_seed);
  return r;
}

Json base_report(const RunConfig& c) {
  return {{"command", c.command}};
}

void finish_report(Json& report, const RunConfig& c, double estimate, double se, std::pair<double, double> ci,
                   const Json& per_fold, const Json& diagnostics) {
  report["estimate"] = number_json(estimate);
  report["se"] = number_json(se);
  report["ci"] = interval_json(ci);
  report["per_fold"] = per_fold;
  report["diagnostics"] = diagnostics;
  report["seed"] = c.master_seed;
  report["config"] = c.echo;
}

RunResult run_estimate(const RunConfig& c, const Dataset& data) {
  RunResult out;
  out.report = base_report(c);
  if (c.estimator == "semiparametric") {
    const NuisanceFitter fitter = minimax_fitter(fitter_options(c));
    Json diag = Json::object();
    double psi = 0.0, se = 0.0;
    std::pair<double, double> ci;
    const CrossFitResult* centre = nullptr;
    RepeatedCrossFit rep;
    CrossFitResult single;
    if (c.median_reps == 1) {
      single = crossfit_estimate(data, c.k_folds, fitter, c.master_seed, c.alpha_level);
      centre = &single;
      psi = single.psi_hat;
      se = single.se();
      ci = single.ci;
    } else {
      rep = repeated_crossfit(data, c.k_folds, c.median_reps, fitter, c.master_seed, c.alpha_level, true);
      psi = rep.median.psi_median;
      se = rep.se;
      ci = rep.ci;
      std::size_t best = 0;
      for (std::size_t s = 1; s < rep.runs.size(); ++s) {
        if (std::abs(rep.runs[s].psi_hat - psi) < std::abs(rep.runs[best].psi_hat - psi)) best = s;
      }
      centre = &rep.runs[best];
      diag["median_adjustment"] = to_json(rep.median);
      diag["central_repetition"] = best;
    }
    const BootstrapResult boot = multiplier_bootstrap(centre->influence_values, c.bootstrap_b,
                                                      derive_seed(c.master_seed, seed_offset::bootstrap), c.alpha_level);
    diag["bootstrap"] = to_json(boot);
    diag["bootstrap"]["ci"] = interval_json(boot.ci(psi));
    diag["crossfit"] = to_json(*centre);
    diag["n"] = data.size();
    diag["n_treated"] = data.n_treated();
    finish_report(out.report, c, psi, se, ci, vector_json(centre->per_fold_psi), diag);
    out.summary = summary_line(psi, se, ci, c.alpha_level);
    return out;
  }
  const MomentSpec spec = moment_spec(c, data, kind_of(c.estimator));
  const GmmRun g = run_gmm(c, data, spec);
  Json diag = {{"gmm", to_json(g.fit)}, {"lambda_selection", g.lambda_info}, {"n", data.size()},
               {"n_treated", data.n_treated()}};
  const auto ci = g.fit.ci(c.alpha_level);
  finish_report(out.report, c, g.fit.psi_hat, g.fit.psi_se, ci, Json::array(), diag);
  out.summary = summary_line(g.fit.psi_hat, g.fit.psi_se, ci, c.alpha_level);
  return out;
}

RunResult run_sensitivity(const RunConfig& c, const Dataset& data) {
  RunResult out;
  out.report = base_report(c);
  const MomentSpec spec = moment_spec(c, data, MomentKind::EPS);
  double lambda = 0.0;
  Json lambda_info;
  if (c.lambda) {
    lambda = *c.lambda;
    lambda_info = {{"lambda", lambda}, {"selected_by", "fixed"}};
  } else {
    const LambdaSelection sel = cv_select_lambda(data, spec, c.lambda_grid, c.master_seed);
    lambda = sel.lambda;
    lambda_info = {{"lambda", lambda}, {"selected_by", "cv"}};
  }
  MomentSpec crude_spec = spec;
  crude_spec.basis.s_y = FeatureMap::parse("y", "none");
  crude_spec.basis.r_w = FeatureMap::parse("w", "none");
  const GmmFit crude = fit_gmm(data, crude_spec, 0.0, c.master_seed);
  const auto crude_ci = crude.ci(c.alpha_level);
  const SensitivityCurve curve =
      sensitivity_curve(data, spec, c.alpha_w_grid, lambda, crude_ci, c.master_seed, c.alpha_level);
  if (!c.sensitivity_csv.empty()) {
    std::ofstream f(c.sensitivity_csv, std::ios::binary);
    if (!f) fail(ErrorCode::FileNotFound, "cannot write '" + c.sensitivity_csv + "'");
    f << sensitivity_csv(curve);
  }
  // The headline estimate is the grid point closest to alpha_w = 0.
  std::size_t base = 0;
  for (std::size_t i = 1; i < curve.grid.size(); ++i) {
    if (std::abs(curve.grid[i]) < std::abs(curve.grid[base])) base = i;
  }
  const SensitivityPoint& p = curve.estimates[base];
  Json diag = {{"sensitivity", to_json(curve)},
               {"crude", {{"psi_hat", number_json(crude.psi_hat)}, {"se", number_json(crude.psi_se)},
                          {"ci", interval_json(crude_ci)}}},
               {"lambda_selection", lambda_info},
               {"reference_alpha_w", curve.grid[base]}};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  finish_report(out.report, c, p.ok ? p.psi : nan, p.ok ? p.se : nan, p.ok ? p.ci : std::pair{nan, nan},
                Json::array(), diag);
  out.summary = p.ok ? summary_line(p.psi, p.se, p.ci, c.alpha_level) + " at alpha_w = " + std::to_string(p.alpha_w)
                     : "sensitivity fit failed at the reference point";
  return out;
}

std::vector<Eigen::Index> proxy_positions(const RunConfig& c, const std::vector<std::string>& names) {
  std::vector<Eigen::Index> out;
  for (const auto& n : names) {
    const auto it = std::find(c.columns.w.begin(), c.columns.w.end(), n);
    out.push_back(static_cast<Eigen::Index>(it - c.columns.w.begin()));
  }
  return out;
}

RunResult run_overid(const RunConfig& c, const Dataset& data) {
  RunResult out;
  out.report = base_report(c);
  const std::vector<Eigen::Index> small = proxy_positions(c, c.w_small);
  const std::vector<Eigen::Index> large = proxy_positions(c, c.columns.w);
  OveridResult test;
  Json diag = Json::object();
  if (c.estimator == "semiparametric") {
    const SemiparametricOverid r = overid_semiparametric(data, small, large, c.k_folds,
                                                         minimax_fitter(fitter_options(c)), c.master_seed,
                                                         c.alpha_level);
    test = r.test;
    diag["small"] = to_json(r.small);
    diag["large"] = to_json(r.large);
  } else {
    const Dataset ds = data.with_proxies(small);
    const Dataset dl = data.with_proxies(large);
    const MomentSpec ss = moment_spec(c, ds, kind_of(c.estimator));
    const MomentSpec sl = moment_spec(c, dl, kind_of(c.estimator));
    const GmmRun gs = run_gmm(c, ds, ss);
    const GmmRun gl = run_gmm(c, dl, sl);
    test = overid_test(gs.fit, gl.fit, gmm_influence(gs.fit, ds, ss), gmm_influence(gl.fit, dl, sl), c.alpha_level);
    diag["small"] = to_json(gs.fit);
    diag["large"] = to_json(gl.fit);
  }
  diag["test"] = to_json(test);
  const double z = two_sided_critical(c.alpha_level);
  const std::pair<double, double> ci{test.difference() - z * test.se(), test.difference() + z * test.se()};
  finish_report(out.report, c, test.difference(), test.se(), ci, Json::array(), diag);
  char buf[256];
  std::snprintf(buf, sizeof buf, "over-identification: difference = %.3f (SE %.3f), T = %.3f, p = %.3f, %s",
                test.difference(), test.se(), test.t_stat, test.p_value, test.reject ? "reject" : "fail to reject");
  out.summary = buf;
  return out;
}

RunResult run_did(const RunConfig& c, const Dataset& data) {
  RunResult out;
  out.report = base_report(c);
  const DidResult r = did_estimate(data, PrePeriodSelector::parse(c.pre_period), c.alpha_level);
  finish_report(out.report, c, r.psi_hat, r.se, r.ci, Json::array(), {{"did", to_json(r)}});
  out.summary = summary_line(r.psi_hat, r.se, r.ci, c.alpha_level);
  return out;
}

RunResult run_legacy(const RunConfig& c, const Dataset& data) {
  RunResult out;
  out.report = base_report(c);
  const CocaOlsFit fit = coca_ols_oneshot(data);
  Json diag = {{"oneshot", to_json(fit)}};
  if (!c.psi_grid.empty()) diag["grid_search"] = to_json(coca_grid_search(data, c.psi_grid, c.alpha_level));
  const auto ci = fit.ci(c.alpha_level);
  finish_report(out.report, c, fit.psi_hat, fit.se, ci, Json::array(), diag);
  out.summary = summary_line(fit.psi_hat, fit.se, ci, c.alpha_level) + (fit.unstable ? " [unstable]" : "");
  return out;
}

std::string sidecar_path(const std::string& csv) {
  const auto slash = csv.find_last_of('/');
  const auto dot = csv.find_last_of('.');
  const std::string stem = (dot == std::string::npos || (slash != std::string::npos && dot < slash)) ? csv : csv.substr(0, dot);
  return stem + ".truth.json";
}

RunResult run_simulate(const RunConfig& c) {
  DgpSpec spec;
  spec.kind = parse_dgp_kind(c.kind);
  spec.n = c.n;
  spec.tau = c.tau;
  spec.params = c.params;
  spec.seed = c.master_seed;
  Dataset data;
  Json truth = Json::object();
  switch (spec.kind) {
    case DgpKind::GaussianA3: {
      const GeneratedData g = gen_gaussian_a3(spec);
      data = g.data;
      truth = {{"psi0_star", g.truth.psi0_star}, {"psi1_star", g.truth.psi1_star}, {"psi_star", g.truth.psi_star},
               {"omega_star", "exp(0.25 y - 0.03125)"}, {"bridge_star", "w"}};
      break;
    }
    case DgpKind::BinaryDiscrete: {
      const BinaryGenerated g = gen_binary_discrete(spec);
      data = g.data;
      truth = {{"psi0_star", g.psi0_star}, {"psi_star", g.psi_star}, {"b0", g.b0}, {"b1", g.b1},
               {"tables",
                {{"p_a", g.tables.p_a}, {"p_y1_a0", g.tables.p_y1_a0}, {"p_y1_a1", g.tables.p_y1_a1},
                 {"p_w1_y0", g.tables.p_w1_y0}, {"p_w1_y1", g.tables.p_w1_y1}}}};
      break;
    }
    case DgpKind::RankPreserving:
      data = gen_rank_preserving(spec);
      truth = {{"psi_star", spec.tau}};
      break;
    case DgpKind::LatentMonotone:
      data = gen_latent_monotone(spec);
      truth = {{"psi_star", spec.tau}};
      break;
  }
  {
    std::ofstream f(c.output, std::ios::binary);
    if (!f) fail(ErrorCode::FileNotFound, "cannot write '" + c.output + "'");
    f << dataset_csv(data);
  }
  RunResult out;
  out.report = {{"command", c.command}, {"kind", c.kind}, {"n", data.size()}, {"truth", truth},
                {"seed", c.master_seed}, {"config", c.echo}};
  out.summary = "wrote " + std::to_string(data.size()) + " units to " + c.output;
  return out;
}

}  // namespace

RunResult execute(const RunConfig& config) {
  if (config.command == "simulate") return run_simulate(config);
  const Dataset data = load_csv(config.input_csv, config.columns);
  validate_dataset(data);
  if (config.command == "estimate") return run_estimate(config, data);
  if (config.command == "sensitivity") return run_sensitivity(config, data);
  if (config.command == "overid") return run_overid(config, data);
  if (config.command == "did") return run_did(config, data);
  if (config.command == "legacy-coca") return run_legacy(config, data);
  fail(ErrorCode::InvalidArgument, "unknown command '" + config.command + "'");
}

int run_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  try {
    const RunConfig config = parse_config(args);
    set_thread_count(config.threads);
    RunResult r = execute(config);
    r.report["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string text = r.report.dump(2) + "\n";
    if (config.command == "simulate") {
      const std::string path = sidecar_path(config.output);
      std::ofstream f(path, std::ios::binary);
      if (!f) fail(ErrorCode::FileNotFound, "cannot write '" + path + "'");
      f << text;
      out << r.summary << '\n';
    } else if (!config.output.empty()) {
      std::ofstream f(config.output, std::ios::binary);
      if (!f) fail(ErrorCode::FileNotFound, "cannot write '" + config.output + "'");
      f << text;
      out << r.summary << '\n';
    } else {
      out << text;
      err << r.summary << '\n';
    }
    return 0;
  } catch (const HelpRequested& h) {
    out << h.text;
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace spc::cli
