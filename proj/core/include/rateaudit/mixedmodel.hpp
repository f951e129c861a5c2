#pragma once

// Linear mixed-effects models with question-level random effects, fitted by
// restricted maximum likelihood.
//
// Marginal model per question j:
//   y_j ~ N(X_j beta, V_j),  V_j = Z_j Psi Z_j' + sigma^2 I
// The optimizer works on the log-Cholesky factor of the relative covariance
// of the random effects with each Z column scaled to unit root-mean-square:
// Psi / sigma^2 = S^-1 L L' S^-1, S = diag(rms(Z_k)) (diagonal of L stored as
// logs, column-major lower triangle); sigma^2 and beta are profiled out.
// Without the scaling the num_words slope terms live on a scale ~1e-2 and the
// deviance surface is badly conditioned. Every likelihood evaluation
// uses per-question sufficient statistics (Z'Z, Z'X, Z'y) and the Woodbury
// identity, so its cost is independent of the question sizes.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rateaudit/featurize.hpp"
#include "rateaudit/optimize.hpp"

namespace rateaudit {

namespace term {
inline constexpr std::string_view kIntercept = "intercept";
inline constexpr std::string_view kNumWords = "num_words";
inline constexpr std::string_view kGrammarScore = "grammar_score";
inline constexpr std::string_view kWordFreq = "word_freq_d";
inline constexpr std::string_view kAvgNumWords = "avg_num_words";
inline constexpr std::string_view kConstructMMR = "construct_MMR";
inline constexpr std::string_view kConstructIMR = "construct_IMR";
inline constexpr std::string_view kConstructMAP = "construct_MAP";
inline constexpr std::string_view kInteraction = "grammar_score:word_freq_d";
}  // namespace term

enum class ModelId { OLS, M1, M2, M3 };

std::string_view to_string(ModelId id);

struct ModelSpec {
  ModelId id = ModelId::M1;
  std::vector<std::string> fixed_terms;   // intercept first
  bool include_interaction = false;
  std::vector<std::string> random_terms;  // empty for OLS

  static ModelSpec model1();
  static ModelSpec model2();
  static ModelSpec model3();
  /// Single-level regression with the fixed part of M1 (or M2/M3 when `interaction`).
  static ModelSpec ols(bool interaction = false);
  static ModelSpec from_id(ModelId id);

  std::size_t n_covariance_params() const {
    const std::size_t q = random_terms.size();
    return q * (q + 1) / 2;
  }
  bool operator==(const ModelSpec&) const = default;
};

struct Design {
  ModelSpec spec;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;  // N x p, columns in spec.fixed_terms order
  Eigen::MatrixXd Z;  // N x q, random-effect columns stacked over questions
  std::vector<std::string> cluster_ids;             // sorted
  std::vector<std::vector<std::size_t>> cluster_rows;  // row indices per cluster, input order

  std::size_t n_obs() const noexcept { return static_cast<std::size_t>(y.size()); }
  std::size_t n_fixed() const noexcept { return static_cast<std::size_t>(X.cols()); }
  std::size_t n_random() const noexcept { return static_cast<std::size_t>(Z.cols()); }
  std::size_t n_clusters() const noexcept { return cluster_ids.size(); }

  /// Z_j: the random-effect design block for one question.
  Eigen::MatrixXd z_block(std::size_t cluster) const;
  Eigen::MatrixXd x_block(std::size_t cluster) const;
  Eigen::VectorXd y_block(std::size_t cluster) const;

  /// Order-independent digest of (cluster, y, X) used to check two fits share data.
  std::uint64_t fingerprint() const;
};

class DesignError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// XᵀV⁻¹X is singular; `columns` names the fixed terms that are linear
/// combinations of earlier ones.
class RankDeficientError : public std::runtime_error {
 public:
  explicit RankDeficientError(std::vector<std::string> columns);
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

Design build_design(std::span<const FeatureRow> rows, const ModelSpec& spec);

/// Terms of X that are (numerically) linear combinations of preceding columns.
std::vector<std::string> collinear_columns(const Design& design);

/// Profiled quantities at a given relative Cholesky factor L (Psi / sigma^2 = L L').
struct RemlEvaluation {
  double deviance = 0.0;  // -2 * restricted log-likelihood, beta and sigma^2 profiled
  Eigen::VectorXd beta;
  Eigen::MatrixXd xtwx;   // X' W^-1 X with V = sigma^2 W
  double sigma2 = 0.0;
  double weighted_rss = 0.0;
  double log_det_w = 0.0;
  double log_det_xtwx = 0.0;
};

RemlEvaluation evaluate_reml(const Design& design, const Eigen::MatrixXd& relative_chol);

/// Decodes log-Cholesky parameters for a q x q factor.
Eigen::MatrixXd theta_to_cholesky(std::span<const double> theta, std::size_t q);

/// Root-mean-square of each random-effect column (1 for an all-zero column).
Eigen::VectorXd random_effect_scales(const Design& design);

/// Relative Cholesky factor S^-1 L for log-Cholesky parameters theta.
Eigen::MatrixXd relative_cholesky(const Design& design, std::span<const double> theta);

/// REML deviance at log-Cholesky parameters theta (size q(q+1)/2).
double reml_deviance(const Design& design, std::span<const double> theta);

/// -2 restricted log-likelihood at an explicit (Psi, sigma^2) without profiling sigma^2.
double reml_deviance_unprofiled(const Design& design, const Eigen::MatrixXd& psi, double sigma2);

struct CovarianceComponents {
  std::vector<std::string> terms;
  Eigen::MatrixXd psi;  // q x q
  double sigma2 = 0.0;

  double sd(std::size_t k) const;
  /// Correlation between the first two random terms; NaN when undefined.
  double corr() const;
  double sigma() const;
};

struct NamedValue {
  std::string name;
  double value = 0.0;
};

struct ModelFit {
  ModelSpec spec;
  Eigen::VectorXd beta;
  Eigen::VectorXd beta_se;
  Eigen::MatrixXd beta_cov;
  CovarianceComponents cov_components;
  double reml_loglik = 0.0;
  double deviance = 0.0;
  bool converged = true;
  int iterations = 0;
  int evaluations = 0;
  std::vector<bool> boundary;  // per random term: variance reported as exactly 0
  bool on_boundary = false;
  std::vector<double> theta;   // reml_deviance coordinates of the full structure
  /// Random-effect parameter estimates on the sd/corr scale with standard errors.
  std::vector<NamedValue> vc_estimates;
  std::vector<NamedValue> vc_standard_errors;
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
  std::uint64_t data_fingerprint = 0;

  std::size_t term_index(std::string_view term) const;  // throws std::out_of_range
};

struct FitOptions {
  SimplexOptions simplex;
  double boundary_tolerance = 1e-10;  // relative variance treated as 0
  bool variance_component_se = true;
};

ModelFit fit_reml(const Design& design, const FitOptions& options = {});
ModelFit fit_reml(std::span<const FeatureRow> rows, const ModelSpec& spec,
                  const FitOptions& options = {});

/// Ordinary least squares; its deviance is the REML criterion at Psi = 0 so it
/// nests under random-intercept fits for likelihood-ratio testing.
ModelFit fit_ols(const Design& design);
ModelFit fit_ols(std::span<const FeatureRow> rows, const std::vector<std::string>& fixed_terms);

struct RandomEffectPrediction {
  std::vector<std::string> cluster_ids;
  std::vector<std::string> terms;
  Eigen::MatrixXd values;  // J x q
};

/// Empirical-Bayes predictions Psi Z_j' V_j^-1 (y_j - X_j beta).
RandomEffectPrediction predict_random_effects(const ModelFit& fit, const Design& design);

}  // namespace rateaudit
