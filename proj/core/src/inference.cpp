#include "rateaudit/inference.hpp"

#include <algorithm>
#include <cmath>

#include "rateaudit/special_functions.hpp"

namespace rateaudit {

namespace {

std::string chi2_name(int df) { return "chi2(" + std::to_string(df) + ")"; }

bool is_prefix(const std::vector<std::string>& shorter, const std::vector<std::string>& longer) {
  return shorter.size() <= longer.size() && std::equal(shorter.begin(), shorter.end(), longer.begin());
}

}  // namespace

std::string_view to_string(TestKind kind) {
  switch (kind) {
    case TestKind::Z: return "Z";
    case TestKind::WaldChi2: return "WALD_CHI2";
    case TestKind::LR: return "LR";
  }
  return "?";
}

TestResult z_test(double estimate, double standard_error) {
  if (!(standard_error > 0.0) || !std::isfinite(standard_error)) {
    throw std::domain_error("z test needs a positive, finite standard error");
  }
  TestResult r;
  r.kind = TestKind::Z;
  r.statistic = estimate / standard_error;
  r.reference = "N(0,1)";
  r.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(r.statistic)));
  return r;
}

TestResult z_test(const ModelFit& fit, std::string_view term) {
  const std::size_t k = fit.term_index(term);
  const auto i = static_cast<Eigen::Index>(k);
  TestResult r = z_test(fit.beta(i), fit.beta_se(i));
  r.terms = {std::string(term)};
  r.alt_model = std::string(to_string(fit.spec.id));
  return r;
}

TestResult wald_omnibus(const ModelFit& fit, const std::vector<std::string>& terms) {
  if (terms.empty()) throw std::invalid_argument("wald test needs at least one term");
  const auto m = static_cast<Eigen::Index>(terms.size());
  Eigen::VectorXd b(m);
  Eigen::MatrixXd c(m, m);
  std::vector<Eigen::Index> idx;
  for (const auto& t : terms) idx.push_back(static_cast<Eigen::Index>(fit.term_index(t)));
  for (Eigen::Index a = 0; a < m; ++a) {
    b(a) = fit.beta(idx[static_cast<std::size_t>(a)]);
    for (Eigen::Index e = 0; e < m; ++e) {
      c(a, e) = fit.beta_cov(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(e)]);
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(c);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      (ldlt.vectorD().array() <= 0.0).any()) {
    throw std::domain_error("wald test: coefficient covariance is singular on the tested subset");
  }
  TestResult r;
  r.kind = TestKind::WaldChi2;
  r.terms = terms;
  r.statistic = m == 1 ? b(0) * b(0) / c(0, 0) : b.dot(ldlt.solve(b));
  r.df = static_cast<int>(m);
  r.reference = chi2_name(r.df);
  r.p_value = chi2_sf(r.statistic, r.df);
  r.alt_model = std::string(to_string(fit.spec.id));
  return r;
}

TestResult wald_omnibus(const ModelFit& fit) {
  std::vector<std::string> terms;
  for (const auto& t : fit.spec.fixed_terms) {
    if (t != term::kIntercept) terms.push_back(t);
  }
  return wald_omnibus(fit, terms);
}

double boundary_mixture_p(double statistic, int df) {
  if (df < 1) throw std::invalid_argument("boundary mixture needs df >= 1");
  return 0.5 * chi2_sf(statistic, df - 1) + 0.5 * chi2_sf(statistic, df);
}

TestResult lr_test(const ModelFit& null_fit, const ModelFit& alt_fit) {
  if (null_fit.spec.fixed_terms != alt_fit.spec.fixed_terms) {
    throw ComparisonRefused(
        "REML deviances are only comparable between models with identical fixed parts (" +
        std::string(to_string(null_fit.spec.id)) + " has " +
        std::to_string(null_fit.spec.fixed_terms.size()) + " fixed terms, " +
        std::string(to_string(alt_fit.spec.id)) + " has " +
        std::to_string(alt_fit.spec.fixed_terms.size()) +
        "); assess fixed-effect differences with a Z or Wald test");
  }
  if (null_fit.n_obs != alt_fit.n_obs || null_fit.data_fingerprint != alt_fit.data_fingerprint) {
    throw ComparisonRefused("likelihood-ratio test needs both models fitted to the same data");
  }
  const auto& rn = null_fit.spec.random_terms;
  const auto& ra = alt_fit.spec.random_terms;
  if (!is_prefix(rn, ra)) {
    throw ComparisonRefused("random part of " + std::string(to_string(null_fit.spec.id)) +
                            " is not nested in that of " + std::string(to_string(alt_fit.spec.id)) +
                            " (check argument order: null model first)");
  }

  TestResult r;
  r.kind = TestKind::LR;
  r.null_model = std::string(to_string(null_fit.spec.id));
  r.alt_model = std::string(to_string(alt_fit.spec.id));
  r.statistic = std::max(0.0, null_fit.deviance - alt_fit.deviance);
  r.df = static_cast<int>(alt_fit.spec.n_covariance_params() - null_fit.spec.n_covariance_params());
  r.reference = chi2_name(r.df);
  r.p_value = chi2_sf(r.statistic, r.df);
  if (ra.size() == rn.size() + 1) {
    // One added random term puts the null on the boundary of the alternative.
    r.alt_p_value = boundary_mixture_p(r.statistic, r.df);
    r.alt_reference = "0.5*chi2(" + std::to_string(r.df - 1) + ") + 0.5*chi2(" +
                      std::to_string(r.df) + ")";
  }
  return r;
}

}  // namespace rateaudit
