#pragma once

#include <string>

namespace vmsim {

/// One-sided check lhs <= rhs + tol. slack = rhs - lhs.
struct EstimateResult {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  double tol = 0.0;
  bool pass = true;

  static EstimateResult make(std::string name, double lhs, double rhs, double tol) {
    EstimateResult r;
    r.name = std::move(name);
    r.lhs = lhs;
    r.rhs = rhs;
    r.slack = rhs - lhs;
    r.tol = tol;
    r.pass = lhs <= rhs + tol;
    return r;
  }
};

/// Two-sided identity check: residual = |lhs - rhs|.
struct IdentityResult {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
};

}  // namespace vmsim
