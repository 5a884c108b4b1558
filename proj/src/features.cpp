#include "spc/features.hpp"

#include <charconv>
#include <sstream>

#include "spc/error.hpp"

namespace spc {

namespace {

std::string name_of(const std::string& arg, const FeatureTerm& t) {
  // A scalar argument ("y") carries no index; proxies are numbered from 1.
  auto arg_col = [&](int j) { return arg == "y" ? arg : arg + std::to_string(j + 1); };
  switch (t.kind) {
    case FeatureTerm::Kind::Intercept: return "1";
    case FeatureTerm::Kind::Arg: return arg_col(t.j);
    case FeatureTerm::Kind::Cov: return "x" + std::to_string(t.k + 1);
    case FeatureTerm::Kind::ArgCov: return arg_col(t.j) + "*x" + std::to_string(t.k + 1);
    case FeatureTerm::Kind::ArgPower: return arg_col(t.j) + "^" + std::to_string(t.power);
    case FeatureTerm::Kind::ArgMean: return "mean(" + arg + ")";
  }
  return "?";
}

int parse_index(const std::string& token, std::size_t from, const std::string& whole) {
  int value = 0;
  const char* first = token.data() + from;
  const char* last = token.data() + token.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last || value < 1) {
    fail(ErrorCode::InvalidArgument, "cannot parse basis term '" + whole + "'");
  }
  return value - 1;
}

// Parses "y", "w2" or "w" into an argument column index.
int parse_arg(const std::string& arg, const std::string& token, const std::string& whole) {
  if (token.rfind(arg, 0) != 0) fail(ErrorCode::InvalidArgument, "unknown basis term '" + whole + "'");
  if (token.size() == arg.size()) return 0;
  return parse_index(token, arg.size(), whole);
}

}  // namespace

Eigen::MatrixXd FeatureMap::evaluate(const Eigen::MatrixXd& arg, const Eigen::MatrixXd& x) const {
  const Eigen::Index n = arg.rows();
  if (x.rows() != n) fail(ErrorCode::DimensionMismatch, "basis inputs differ in length");
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(terms_.size()));
  for (std::size_t c = 0; c < terms_.size(); ++c) {
    const FeatureTerm& t = terms_[c];
    auto col = out.col(static_cast<Eigen::Index>(c));
    auto need_arg = [&](int j) {
      if (j < 0 || j >= arg.cols()) fail(ErrorCode::DimensionMismatch, "basis term references a missing " + arg_name_ + " column");
    };
    auto need_cov = [&](int k) {
      if (k < 0 || k >= x.cols()) fail(ErrorCode::DimensionMismatch, "basis term references a missing covariate");
    };
    switch (t.kind) {
      case FeatureTerm::Kind::Intercept: col.setOnes(); break;
      case FeatureTerm::Kind::Arg: need_arg(t.j); col = arg.col(t.j); break;
      case FeatureTerm::Kind::Cov: need_cov(t.k); col = x.col(t.k); break;
      case FeatureTerm::Kind::ArgCov:
        need_arg(t.j);
        need_cov(t.k);
        col = arg.col(t.j).cwiseProduct(x.col(t.k));
        break;
      case FeatureTerm::Kind::ArgPower:
        need_arg(t.j);
        col = arg.col(t.j).array().pow(t.power).matrix();
        break;
      case FeatureTerm::Kind::ArgMean:
        if (arg.cols() == 0) fail(ErrorCode::DimensionMismatch, "mean of an empty argument block");
        col = arg.rowwise().mean();
        break;
    }
  }
  return out;
}

std::vector<std::string> FeatureMap::descriptors() const {
  std::vector<std::string> out;
  out.reserve(terms_.size());
  for (const auto& t : terms_) out.push_back(name_of(arg_name_, t));
  return out;
}

std::optional<std::size_t> FeatureMap::index_of(const std::string& descriptor) const {
  const auto names = descriptors();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == descriptor) return i;
  }
  return std::nullopt;
}

FeatureMap FeatureMap::parse(const std::string& arg_name, const std::string& text) {
  std::vector<FeatureTerm> terms;
  if (text.empty() || text == "none") return FeatureMap(arg_name, terms);
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    const std::string whole = token;
    std::erase(token, ' ');
    FeatureTerm t;
    if (token == "1") {
      t.kind = FeatureTerm::Kind::Intercept;
    } else if (token == "mean(" + arg_name + ")") {
      t.kind = FeatureTerm::Kind::ArgMean;
    } else if (const auto star = token.find('*'); star != std::string::npos) {
      t.kind = FeatureTerm::Kind::ArgCov;
      t.j = parse_arg(arg_name, token.substr(0, star), whole);
      const std::string cov = token.substr(star + 1);
      if (cov.size() < 2 || cov[0] != 'x') fail(ErrorCode::InvalidArgument, "unknown basis term '" + whole + "'");
      t.k = parse_index(cov, 1, whole);
    } else if (const auto caret = token.find('^'); caret != std::string::npos) {
      t.kind = FeatureTerm::Kind::ArgPower;
      t.j = parse_arg(arg_name, token.substr(0, caret), whole);
      t.power = parse_index(token, caret + 1, whole) + 1;
    } else if (!token.empty() && token[0] == 'x') {
      t.kind = FeatureTerm::Kind::Cov;
      t.k = parse_index(token, 1, whole);
    } else {
      t.kind = FeatureTerm::Kind::Arg;
      t.j = parse_arg(arg_name, token, whole);
    }
    terms.push_back(t);
  }
  return FeatureMap(arg_name, terms);
}

FeatureMap linear_basis(const std::string& arg_name, int arg_dim, int x_dim) {
  std::vector<FeatureTerm> terms;
  terms.push_back({FeatureTerm::Kind::Intercept});
  for (int j = 0; j < arg_dim; ++j) terms.push_back({FeatureTerm::Kind::Arg, j});
  for (int k = 0; k < x_dim; ++k) terms.push_back({FeatureTerm::Kind::Cov, 0, k});
  return FeatureMap(arg_name, terms);
}

FeatureMap interacted_basis(const std::string& arg_name, int arg_dim, int x_dim) {
  FeatureMap base = linear_basis(arg_name, arg_dim, x_dim);
  std::vector<FeatureTerm> terms = base.terms();
  for (int j = 0; j < arg_dim; ++j) {
    for (int k = 0; k < x_dim; ++k) terms.push_back({FeatureTerm::Kind::ArgCov, j, k});
  }
  return FeatureMap(arg_name, terms);
}

}  // namespace spc
