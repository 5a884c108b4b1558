#pragma once

#include <Eigen/Dense>

#include "json.hpp"

#include "spc/baselines.hpp"
#include "spc/diagnostics.hpp"
#include "spc/gmm.hpp"
#include "spc/minimax.hpp"
#include "spc/semiparametric.hpp"

namespace spc {

using Json = nlohmann::ordered_json;

Json vector_json(const Eigen::VectorXd& v);
Json matrix_json(const Eigen::MatrixXd& m);  // array of rows
Eigen::VectorXd vector_from_json(const Json& j);
Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index cols_if_empty = 0);
/// NaN and infinities become null.
Json number_json(double v);
Json interval_json(std::pair<double, double> ci);

Json to_json(const Standardizer& s);
Standardizer standardizer_from_json(const Json& j);

/// Doubles are written in shortest round-trip form, so reading back is exact.
Json to_json(const KernelFunctionEstimate& est);
KernelFunctionEstimate kernel_estimate_from_json(const Json& j);

Json to_json(const MinimaxHyper& h);
Json to_json(const NuisanceInfo& info);
Json to_json(const GmmFit& fit);
Json to_json(const CrossFitResult& r, bool with_influence = false);
Json to_json(const MedianAdjusted& m);
Json to_json(const BootstrapResult& b);
Json to_json(const SensitivityCurve& c);
Json to_json(const OveridResult& r);
Json to_json(const DidResult& r);
Json to_json(const CocaOlsFit& r);
Json to_json(const CocaGridResult& r);

}  // namespace spc
