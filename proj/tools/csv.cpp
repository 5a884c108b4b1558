#include "csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "spc/error.hpp"

namespace spc::cli {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string s = trim(raw);
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s[0] == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorCode::ParseError, "row " + std::to_string(row) + ", column '" + column + "': cannot parse '" + s + "'");
  }
  return v;
}

}  // namespace

Dataset parse_csv(const std::string& text, const ColumnMap& columns) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::ParseError, "empty file: no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const std::vector<std::string> header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) index.emplace(trim(header[j]), j);

  auto locate = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) fail(ErrorCode::MissingColumn, "column '" + name + "' is not in the header");
    return it->second;
  };
  if (columns.y.empty()) fail(ErrorCode::MissingColumn, "no outcome column given");
  if (columns.a.empty()) fail(ErrorCode::MissingColumn, "no treatment column given");
  if (columns.w.empty()) fail(ErrorCode::MissingColumn, "no proxy column given");
  const std::size_t iy = locate(columns.y);
  const std::size_t ia = locate(columns.a);
  std::vector<std::size_t> iw, ix;
  for (const auto& c : columns.w) iw.push_back(locate(c));
  for (const auto& c : columns.x) ix.push_back(locate(c));

  std::vector<double> y, a;
  std::vector<std::vector<double>> w(iw.size()), x(ix.size());
  std::size_t row = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    auto cell = [&](std::size_t j, const std::string& name) -> const std::string& {
      if (j >= cells.size()) {
        fail(ErrorCode::ParseError, "row " + std::to_string(row) + ", column '" + name + "': missing cell");
      }
      return cells[j];
    };
    y.push_back(parse_number(cell(iy, columns.y), row, columns.y));
    const double av = parse_number(cell(ia, columns.a), row, columns.a);
    if (av != 0.0 && av != 1.0) {
      fail(ErrorCode::ParseError, "row " + std::to_string(row) + ", column '" + columns.a + "': treatment must be 0 or 1");
    }
    a.push_back(av);
    for (std::size_t k = 0; k < iw.size(); ++k) w[k].push_back(parse_number(cell(iw[k], columns.w[k]), row, columns.w[k]));
    for (std::size_t k = 0; k < ix.size(); ++k) x[k].push_back(parse_number(cell(ix[k], columns.x[k]), row, columns.x[k]));
  }

  const auto n = static_cast<Eigen::Index>(y.size());
  Dataset d;
  d.y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  d.a = Eigen::Map<const Eigen::VectorXd>(a.data(), n);
  d.w.resize(n, static_cast<Eigen::Index>(iw.size()));
  d.x.resize(n, static_cast<Eigen::Index>(ix.size()));
  for (std::size_t k = 0; k < iw.size(); ++k) d.w.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(w[k].data(), n);
  for (std::size_t k = 0; k < ix.size(); ++k) d.x.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(x[k].data(), n);
  return d;
}

Dataset load_csv(const std::string& path, const ColumnMap& columns) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::FileNotFound, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str(), columns);
}

namespace {

void put(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

std::string dataset_csv(const Dataset& data) {
  std::string out = "y,a";
  for (Eigen::Index j = 0; j < data.w.cols(); ++j) out += ",w" + std::to_string(j + 1);
  for (Eigen::Index j = 0; j < data.x.cols(); ++j) out += ",x" + std::to_string(j + 1);
  out += '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    put(out, data.y[i]);
    out += ',';
    put(out, data.a[i]);
    for (Eigen::Index j = 0; j < data.w.cols(); ++j) {
      out += ',';
      put(out, data.w(i, j));
    }
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
      out += ',';
      put(out, data.x(i, j));
    }
    out += '\n';
  }
  return out;
}

}  // namespace spc::cli
