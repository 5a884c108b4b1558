#pragma once

#include <string>
#include <vector>

#include "spc/data_model.hpp"

namespace spc::cli {

struct ColumnMap {
  std::string y;
  std::string a;
  std::vector<std::string> w;
  std::vector<std::string> x;
};

/// Mapped columns of a header-first CSV. Unmapped columns are ignored.
/// Throws FileNotFound, MissingColumn, ParseError (with row and column).
Dataset load_csv(const std::string& path, const ColumnMap& columns);

/// In-memory variant of load_csv.
Dataset parse_csv(const std::string& text, const ColumnMap& columns);

/// Writes y, a, w1.., x1.. with shortest round-trip numbers.
std::string dataset_csv(const Dataset& data);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace spc::cli
