#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

namespace hazefield {

// Central finite differences of f at x, one coordinate at a time.
Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                 double h);

// Worst coordinate-wise relative error. Coordinates whose magnitude is tiny
// next to the largest numeric entry are measured against a floor of
// 1e-3 * max|numeric| so that roundoff in near-zero entries does not dominate.
double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric);

struct GradCheckRow {
  std::string component;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  Eigen::Index probes = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::uint64_t seed = 0;
  std::vector<GradCheckRow> rows;

  bool all_pass() const;
  nlohmann::json to_json() const;
  std::string table() const;
};

inline constexpr double kPipelineGradTolerance = 1e-3;
inline constexpr double kLossGradTolerance = 1e-4;

// Compares every analytic gradient against central differences on random
// small float64 instances (grid <= 8^3, images <= 16x16).
GradCheckReport run_gradcheck(std::uint64_t seed);

}  // namespace hazefield
