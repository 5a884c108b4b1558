#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csv.hpp"
#include "spc/serialize.hpp"

namespace spc::cli {

struct RunConfig {
  std::string command;
  std::string input_csv;
  ColumnMap columns;
  std::string estimator = "semiparametric";
  int k_folds = 2;
  int median_reps = 500;
  int bootstrap_b = 2000;
  double alpha_level = 0.05;
  std::uint64_t master_seed = 20231;
  std::optional<double> lambda;  // empty means cross-validate
  std::vector<double> lambda_grid;
  std::vector<double> hyper_lambdas;
  std::vector<double> hyper_kappas;
  int inner_folds = 5;
  std::string risk = "vstat";
  bool ratio_remedy = true;
  std::optional<std::string> s_y, s_w, r_y, r_w;
  std::string output;
  int threads = 1;

  // sensitivity
  std::vector<double> alpha_w_grid;
  std::string sensitivity_csv;
  // overid
  std::vector<std::string> w_small;
  // simulate
  std::string kind = "gaussian-a3";
  long n = 1000;
  double tau = 0.0;
  std::map<std::string, double> params;
  // did
  std::string pre_period = "latest";
  // legacy-coca
  std::vector<double> psi_grid;

  Json echo;  // merged settings, without output paths and thread count
};

/// Thrown for --help; carries the usage text.
struct HelpRequested {
  std::string text;
};

/// Flags > config file > defaults. Throws spc::Error with UnknownFlag,
/// MissingColumn, ConflictingOptions or InvalidArgument.
RunConfig parse_config(const std::vector<std::string>& args);

/// "a:b:step" or a comma list.
std::vector<double> parse_grid(const std::string& text);

struct RunResult {
  Json report;
  std::string summary;
};

/// Runs the configured command; throws spc::Error on failure.
RunResult execute(const RunConfig& config);

/// Command-line entry: exit 0 on success, 1 on validation errors, 2 on numerical failures.
int run_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spc::cli
