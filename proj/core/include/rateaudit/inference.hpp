#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rateaudit/mixedmodel.hpp"

namespace rateaudit {

enum class TestKind { Z, WaldChi2, LR };

std::string_view to_string(TestKind kind);

struct TestResult {
  TestKind kind = TestKind::Z;
  std::vector<std::string> terms;  // tested coefficients (Z, Wald)
  double statistic = 0.0;
  int df = 0;
  std::string reference;  // reference distribution, e.g. "N(0,1)", "chi2(8)"
  double p_value = 1.0;
  /// Boundary-corrected p-value for LR tests of an added variance component.
  std::optional<double> alt_p_value;
  std::string alt_reference;
  std::string null_model;
  std::string alt_model;
};

/// The two models cannot be compared by a likelihood-ratio test.
class ComparisonRefused : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// beta / se with a two-sided standard-normal p-value.
TestResult z_test(const ModelFit& fit, std::string_view term);
TestResult z_test(double estimate, double standard_error);

/// Joint chi-square test that every coefficient in `terms` is zero.
TestResult wald_omnibus(const ModelFit& fit, const std::vector<std::string>& terms);
/// All fixed terms except the intercept.
TestResult wald_omnibus(const ModelFit& fit);

/// Deviance difference of nested REML fits sharing data and fixed part.
TestResult lr_test(const ModelFit& null_fit, const ModelFit& alt_fit);

/// p-value of the 50:50 mixture of chi2(df - 1) and chi2(df).
double boundary_mixture_p(double statistic, int df);

}  // namespace rateaudit
