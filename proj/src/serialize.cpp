#include "spc/serialize.hpp"

#include <cmath>

#include "spc/error.hpp"

namespace spc {

Json number_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number_json(v[i]));
  return out;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
  return out;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) fail(ErrorCode::ParseError, "expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(ErrorCode::ParseError, "expected a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index cols_if_empty) {
  if (!j.is_array()) fail(ErrorCode::ParseError, "expected an array of rows");
  if (j.empty()) return Eigen::MatrixXd(0, cols_if_empty);
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::VectorXd row = vector_from_json(j[static_cast<std::size_t>(r)]);
    if (row.size() != cols) fail(ErrorCode::ParseError, "ragged matrix");
    m.row(r) = row.transpose();
  }
  return m;
}

Json interval_json(std::pair<double, double> ci) { return Json::array({number_json(ci.first), number_json(ci.second)}); }

Json to_json(const Standardizer& s) {
  Json kept = Json::array();
  for (const auto k : s.kept) kept.push_back(k);
  return {{"mean", vector_json(s.mean)}, {"scale", vector_json(s.scale)}, {"kept", kept}, {"input_dim", s.input_dim}};
}

Standardizer standardizer_from_json(const Json& j) {
  Standardizer s;
  s.mean = vector_from_json(j.at("mean"));
  s.scale = vector_from_json(j.at("scale"));
  for (const auto& k : j.at("kept")) s.kept.push_back(k.get<Eigen::Index>());
  s.input_dim = j.at("input_dim").get<Eigen::Index>();
  return s;
}

Json to_json(const KernelFunctionEstimate& est) {
  return {{"anchors", matrix_json(est.anchors)},
          {"anchor_dim", est.anchors.cols()},
          {"gamma", vector_json(est.gamma)},
          {"bandwidth", est.kernel.bandwidth},
          {"standardizer", to_json(est.standardizer)},
          {"adversary_bandwidth", est.adversary_kernel.bandwidth},
          {"adversary_standardizer", to_json(est.adversary_standardizer)},
          {"lambda_f", est.lambda_f},
          {"lambda_g", est.lambda_g}};
}

KernelFunctionEstimate kernel_estimate_from_json(const Json& j) {
  try {
    KernelFunctionEstimate est;
    est.anchors = matrix_from_json(j.at("anchors"), j.at("anchor_dim").get<Eigen::Index>());
    est.gamma = vector_from_json(j.at("gamma"));
    est.kernel.bandwidth = j.at("bandwidth").get<double>();
    est.standardizer = standardizer_from_json(j.at("standardizer"));
    est.adversary_kernel.bandwidth = j.at("adversary_bandwidth").get<double>();
    est.adversary_standardizer = standardizer_from_json(j.at("adversary_standardizer"));
    est.lambda_f = j.at("lambda_f").get<double>();
    est.lambda_g = j.at("lambda_g").get<double>();
    if (est.gamma.size() != est.anchors.rows()) fail(ErrorCode::ParseError, "gamma and anchors differ in length");
    return est;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("kernel estimate: ") + e.what());
  }
}

Json to_json(const MinimaxHyper& h) {
  return {{"lambda_f", h.lambda_f}, {"lambda_g", h.lambda_g}, {"kappa_f", h.kappa_f}, {"kappa_g", h.kappa_g}};
}

Json to_json(const NuisanceInfo& info) {
  Json j = {{"fitted", info.fitted}};
  if (info.fitted) {
    j["odds"] = to_json(info.odds);
    j["bridge"] = to_json(info.bridge);
    j["ratio_remedy"] = info.remedy_applied;
  }
  return j;
}

namespace {

Json named_coefficients(const std::vector<std::string>& names, const Eigen::VectorXd& theta, Eigen::Index begin) {
  Json out = Json::object();
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = number_json(theta[begin + static_cast<Eigen::Index>(i)]);
  return out;
}

}  // namespace

Json to_json(const GmmFit& fit) {
  return {{"kind", to_string(fit.kind)},
          {"psi_hat", number_json(fit.psi_hat)},
          {"se", number_json(fit.psi_se)},
          {"psi1", number_json(fit.theta[0])},
          {"psi0", number_json(fit.theta[1])},
          {"alpha", named_coefficients(fit.alpha_names, fit.theta, fit.layout.alpha_begin)},
          {"eta", named_coefficients(fit.eta_names, fit.theta, fit.layout.eta_begin)},
          {"objective", number_json(fit.objective)},
          {"lambda", fit.lambda},
          {"n", fit.n},
          {"flags",
           {{"singular_weight", fit.flags.singular_weight},
            {"singular_jacobian_product", fit.flags.singular_jacobian_product},
            {"non_convergence", fit.flags.non_convergence},
            {"iterations", fit.flags.iterations},
            {"chosen_start", fit.flags.chosen_start}}}};
}

Json to_json(const CrossFitResult& r, bool with_influence) {
  Json folds = Json::array();
  for (const auto& info : r.fold_info) folds.push_back(to_json(info));
  Json j = {{"psi_hat", number_json(r.psi_hat)},
            {"sigma2_hat", number_json(r.sigma2_hat)},
            {"se", number_json(r.se())},
            {"ci", interval_json(r.ci)},
            {"per_fold", vector_json(r.per_fold_psi)},
            {"n", r.n},
            {"n_treated", r.n_treated},
            {"folds", r.folds.k},
            {"fold_nuisance", folds}};
  if (with_influence) j["influence_values"] = vector_json(r.influence_values);
  return j;
}

Json to_json(const MedianAdjusted& m) {
  Json psis = Json::array();
  Json sig = Json::array();
  for (const auto& [p, s] : m.reps) {
    psis.push_back(number_json(p));
    sig.push_back(number_json(s));
  }
  return {{"psi_median", number_json(m.psi_median)},
          {"sigma2_median", number_json(m.sigma2_median)},
          {"reps", m.reps.size()},
          {"psi_reps", psis},
          {"sigma2_reps", sig}};
}

Json to_json(const BootstrapResult& b) {
  return {{"variance", number_json(b.variance)}, {"q_low", number_json(b.q_low)}, {"q_high", number_json(b.q_high)}};
}

Json to_json(const SensitivityCurve& c) {
  Json pts = Json::array();
  for (const auto& p : c.estimates) {
    Json e = {{"alpha_w", p.alpha_w}, {"ok", p.ok}};
    if (p.ok) {
      e["psi"] = number_json(p.psi);
      e["se"] = number_json(p.se);
      e["ci"] = interval_json(p.ci);
      e["alpha_y"] = p.alpha_y ? number_json(*p.alpha_y) : Json(nullptr);
    } else {
      e["error"] = p.error;
    }
    pts.push_back(e);
  }
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"grid", c.grid},
          {"estimates", pts},
          {"landmarks",
           {{"ci_contains_zero", opt(c.landmarks.ci_contains_zero)},
            {"psi_positive", opt(c.landmarks.psi_positive)},
            {"overlaps_crude", opt(c.landmarks.overlaps_crude)}}}};
}

Json to_json(const OveridResult& r) {
  return {{"psi_small", number_json(r.psi_small)},
          {"psi_large", number_json(r.psi_large)},
          {"difference", number_json(r.difference())},
          {"se", number_json(r.se())},
          {"varsigma2", number_json(r.varsigma2)},
          {"t_stat", number_json(r.t_stat)},
          {"p_value", number_json(r.p_value)},
          {"alpha", r.alpha_level},
          {"reject", r.reject}};
}

Json to_json(const DidResult& r) {
  return {{"psi_hat", number_json(r.psi_hat)}, {"se", number_json(r.se)}, {"ci", interval_json(r.ci)}};
}

Json to_json(const CocaOlsFit& r) {
  return {{"psi_hat", number_json(r.psi_hat)},
          {"se", number_json(r.se)},
          {"beta", vector_json(r.beta)},
          {"vhat", matrix_json(r.vhat)},
          {"sigma2", number_json(r.sigma2)},
          {"unstable", r.unstable}};
}

Json to_json(const CocaGridResult& r) {
  return {{"grid", r.grid}, {"wald", r.wald}, {"accepted", r.accepted}};
}

}  // namespace spc
