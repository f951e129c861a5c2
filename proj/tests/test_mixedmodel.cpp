#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "rateaudit/mixedmodel.hpp"
#include "rateaudit/simulate.hpp"

using namespace rateaudit;

namespace {

FeatureRow row(std::string qid, double y, std::int64_t num_words = 0) {
  FeatureRow r;
  r.response_id = qid + "-" + std::to_string(y) + "-" + std::to_string(num_words);
  r.question_id = std::move(qid);
  r.rating = y;
  r.num_words = num_words;
  return r;
}

ModelSpec intercept_only(bool random) {
  ModelSpec s;
  s.id = random ? ModelId::M1 : ModelId::OLS;
  s.fixed_terms = {"intercept"};
  if (random) s.random_terms = {"intercept"};
  return s;
}

// Dense -2 REML log-likelihood straight from the marginal covariance.
double dense_reml_deviance(const Design& d, const Eigen::MatrixXd& psi, double sigma2) {
  const auto n = static_cast<Eigen::Index>(d.n_obs());
  Eigen::MatrixXd V = sigma2 * Eigen::MatrixXd::Identity(n, n);
  for (const auto& rows : d.cluster_rows) {
    for (auto a : rows) {
      for (auto b : rows) {
        const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
        V(ia, ib) += (d.Z.row(ia) * psi * d.Z.row(ib).transpose())(0, 0);
      }
    }
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(V);
  const Eigen::MatrixXd vinv_x = ldlt.solve(d.X);
  const Eigen::MatrixXd xtvx = d.X.transpose() * vinv_x;
  const Eigen::VectorXd beta = xtvx.ldlt().solve(vinv_x.transpose() * d.y);
  const Eigen::VectorXd r = d.y - d.X * beta;
  const double log_det_v = ldlt.vectorD().array().log().sum();
  const double log_det_xtvx = std::log(xtvx.determinant());
  const double p = static_cast<double>(d.n_fixed());
  return (static_cast<double>(n) - p) * std::log(2.0 * std::numbers::pi) + log_det_v + log_det_xtvx +
         r.dot(ldlt.solve(r));
}

std::vector<FeatureRow> small_m3_data(std::uint64_t seed, std::size_t J = 12, std::size_t n = 25) {
  GeneratorConfig cfg = reference_config();
  cfg.J = J;
  cfg.n_per_question = {n};
  cfg.seed = seed;
  cfg.psi << 0.3, -0.002, -0.002, 0.0004;
  return generate(cfg).rows;
}

const std::vector<FeatureRow> kAnova = {row("a", 1), row("a", 3), row("b", 2),
                                        row("b", 4), row("c", 5), row("c", 7)};

}  // namespace

TEST_CASE("balanced one-way layout reproduces the ANOVA estimators") {
  // cluster means 2, 3, 6; MSW = 2, MSB = 26/3, Psi = (MSB - MSW) / 2
  const ModelFit fit = fit_reml(kAnova, intercept_only(true));
  CHECK(fit.beta(0) == doctest::Approx(11.0 / 3.0).epsilon(1e-9));
  CHECK(fit.cov_components.sigma2 == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(fit.cov_components.psi(0, 0) == doctest::Approx(10.0 / 3.0).epsilon(1e-6));
  CHECK_FALSE(fit.on_boundary);
  // Var(grand mean) = (Psi + sigma^2 / 2) / 3
  CHECK(fit.beta_se(0) == doctest::Approx(std::sqrt((10.0 / 3.0 + 1.0) / 3.0)).epsilon(1e-6));
}

TEST_CASE("BLUPs shrink cluster-mean deviations by n Psi / (n Psi + sigma^2)") {
  const Design d = build_design(kAnova, intercept_only(true));
  const ModelFit fit = fit_reml(d);
  const auto pred = predict_random_effects(fit, d);
  REQUIRE(pred.values.rows() == 3);
  const double k = 10.0 / 13.0;
  CHECK(pred.values(0, 0) == doctest::Approx(k * (2.0 - 11.0 / 3.0)).epsilon(1e-6));
  CHECK(pred.values(1, 0) == doctest::Approx(k * (3.0 - 11.0 / 3.0)).epsilon(1e-6));
  CHECK(pred.values(2, 0) == doctest::Approx(k * (6.0 - 11.0 / 3.0)).epsilon(1e-6));
  CHECK(std::abs(pred.values.col(0).sum()) < 1e-9);
}

TEST_CASE("no between-cluster signal lands on the boundary and matches OLS") {
  const std::vector<FeatureRow> rows = {row("a", 1), row("a", 3), row("b", 3),
                                        row("b", 1), row("c", 2), row("c", 2)};
  const ModelFit mixed = fit_reml(rows, intercept_only(true));
  const ModelFit ols = fit_ols(rows, {"intercept"});
  CHECK(mixed.on_boundary);
  CHECK(mixed.boundary == std::vector<bool>{true});
  CHECK(mixed.cov_components.psi(0, 0) == 0.0);
  CHECK(mixed.beta(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(mixed.beta(0) - ols.beta(0)) < 1e-12);
  CHECK(mixed.deviance == doctest::Approx(ols.deviance).epsilon(1e-12));
  CHECK(std::isnan(mixed.vc_standard_errors[0].value));
}

TEST_CASE("OLS reproduces a hand-computed line fit") {
  const std::vector<FeatureRow> rows = {row("a", 2, 1), row("a", 3, 2), row("b", 5, 3), row("b", 6, 4)};
  const ModelFit fit = fit_ols(rows, {"intercept", "num_words"});
  CHECK(fit.beta(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fit.beta(1) == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(fit.cov_components.sigma2 == doctest::Approx(0.1).epsilon(1e-10));
  CHECK(fit.beta_se(0) == doctest::Approx(std::sqrt(0.15)).epsilon(1e-10));
  CHECK(fit.beta_se(1) == doctest::Approx(std::sqrt(0.02)).epsilon(1e-10));
}

TEST_CASE("Woodbury deviance equals the dense marginal computation") {
  const auto rows = small_m3_data(11, 6, 9);
  const Design d = build_design(rows, ModelSpec::model3());
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-2.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> theta = {u(gen), u(gen), u(gen)};
    const Eigen::MatrixXd L = relative_cholesky(d, theta);
    const RemlEvaluation ev = evaluate_reml(d, L);
    const Eigen::MatrixXd psi = ev.sigma2 * L * L.transpose();
    const double dense = dense_reml_deviance(d, psi, ev.sigma2);
    CHECK(reml_deviance(d, theta) == doctest::Approx(dense).epsilon(1e-9));
    CHECK(reml_deviance_unprofiled(d, psi, ev.sigma2) == doctest::Approx(dense).epsilon(1e-9));
    // the profiled sigma^2 is the minimizer along the sigma^2 ray
    CHECK(reml_deviance_unprofiled(d, psi * 1.1, ev.sigma2 * 1.1) > dense);
    CHECK(reml_deviance_unprofiled(d, psi * 0.9, ev.sigma2 * 0.9) > dense);
  }
}

TEST_CASE("log-Cholesky decoding") {
  const std::vector<double> theta = {std::log(2.0), 0.5, std::log(3.0)};
  const Eigen::MatrixXd L = theta_to_cholesky(theta, 2);
  CHECK(L(0, 0) == doctest::Approx(2.0));
  CHECK(L(1, 0) == doctest::Approx(0.5));
  CHECK(L(1, 1) == doctest::Approx(3.0));
  CHECK(L(0, 1) == 0.0);
}

TEST_CASE("gradient of the deviance vanishes at an interior optimum") {
  const auto rows = small_m3_data(5, 20, 40);
  const Design d = build_design(rows, ModelSpec::model3());
  const ModelFit fit = fit_reml(d);
  REQUIRE(fit.converged);
  REQUIRE_FALSE(fit.on_boundary);
  REQUIRE(fit.theta.size() == 3);
  for (std::size_t k = 0; k < fit.theta.size(); ++k) {
    const double h = 1e-5;
    auto plus = fit.theta, minus = fit.theta;
    plus[k] += h;
    minus[k] -= h;
    const double g = (reml_deviance(d, plus) - reml_deviance(d, minus)) / (2.0 * h);
    CHECK_MESSAGE(std::abs(g) < 1e-3, "component ", k, " gradient ", g);
  }
}

TEST_CASE("fits are invariant to row order") {
  auto rows = small_m3_data(8, 10, 20);
  const ModelFit ref = fit_reml(rows, ModelSpec::model3());
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 3; ++trial) {
    std::shuffle(rows.begin(), rows.end(), gen);
    const ModelFit fit = fit_reml(rows, ModelSpec::model3());
    CHECK(fit.deviance == ref.deviance);
    CHECK(fit.beta == ref.beta);
    CHECK(fit.cov_components.psi == ref.cov_components.psi);
    CHECK(fit.data_fingerprint == ref.data_fingerprint);
  }
}

TEST_CASE("design shapes for the three models") {
  const auto rows = small_m3_data(2, 4, 6);
  const Design d1 = build_design(rows, ModelSpec::model1());
  const Design d2 = build_design(rows, ModelSpec::model2());
  const Design d3 = build_design(rows, ModelSpec::model3());
  CHECK(d1.X.cols() == 8);
  CHECK(d2.X.cols() == 9);
  CHECK(d3.X.cols() == 9);
  CHECK(d1.Z.cols() == 1);
  CHECK(d2.Z.cols() == 1);
  CHECK(d3.Z.cols() == 2);
  CHECK(d3.n_clusters() == 4);
  CHECK(d3.n_obs() == 24);
  CHECK(std::is_sorted(d3.cluster_ids.begin(), d3.cluster_ids.end()));
  // the interaction column is the product of its parts
  for (Eigen::Index i = 0; i < d3.X.rows(); ++i) CHECK(d3.X(i, 8) == d3.X(i, 2) * d3.X(i, 3));
  // random slope column is num_words
  CHECK(d3.Z.col(1) == d3.X.col(1));
}

TEST_CASE("rank deficiency names the offending column") {
  auto rows = small_m3_data(4, 6, 10);
  for (auto& r : rows) r.construct_MMR = 0;
  try {
    fit_reml(rows, ModelSpec::model1());
    FAIL("expected RankDeficientError");
  } catch (const RankDeficientError& e) {
    CHECK(e.columns() == std::vector<std::string>{"construct_MMR"});
  }
  CHECK_THROWS_AS(fit_ols(rows, ModelSpec::model1().fixed_terms), RankDeficientError);
}

TEST_CASE("design errors") {
  CHECK_THROWS_AS(build_design(std::vector<FeatureRow>{}, ModelSpec::model1()), DesignError);
  ModelSpec bad = intercept_only(true);
  bad.fixed_terms.push_back("shoe_size");
  CHECK_THROWS_AS(build_design(kAnova, bad), DesignError);
  const std::vector<FeatureRow> one_cluster = {row("a", 1), row("a", 2), row("a", 4)};
  CHECK_THROWS_AS(fit_reml(one_cluster, intercept_only(true)), DesignError);
}

TEST_CASE("nested fits are ordered by deviance") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto rows = small_m3_data(seed, 15, 30);
    const ModelFit ols = fit_ols(rows, ModelSpec::model2().fixed_terms);
    const ModelFit m2 = fit_reml(rows, ModelSpec::model2());
    const ModelFit m3 = fit_reml(rows, ModelSpec::model3());
    CHECK(m3.deviance <= m2.deviance);
    CHECK(m2.deviance <= ols.deviance);
  }
}

TEST_CASE("variance-component estimates are named and consistent") {
  const auto rows = small_m3_data(6, 20, 40);
  const ModelFit fit = fit_reml(rows, ModelSpec::model3());
  REQUIRE(fit.vc_estimates.size() == 4);
  CHECK(fit.vc_estimates[0].name == "sd(intercept)");
  CHECK(fit.vc_estimates[1].name == "sd(num_words)");
  CHECK(fit.vc_estimates[2].name == "corr(num_words,intercept)");
  CHECK(fit.vc_estimates[3].name == "sd(residual)");
  CHECK(fit.vc_estimates[0].value == doctest::Approx(fit.cov_components.sd(0)));
  CHECK(fit.vc_estimates[2].value == doctest::Approx(fit.cov_components.corr()));
  CHECK(fit.vc_estimates[3].value == doctest::Approx(fit.cov_components.sigma()));
  for (const auto& se : fit.vc_standard_errors) CHECK(se.value > 0.0);
  CHECK(fit.reml_loglik == doctest::Approx(-0.5 * fit.deviance));
}

// Reference fits of tests/data/m3_fixture.csv by an independent REML
// implementation (statsmodels MixedLM, best of lbfgs/bfgs/nm/powell).
TEST_CASE("agrees with an independent REML implementation") {
  const auto rows = read_feature_table(std::string(RATEAUDIT_TEST_DATA_DIR) + "/m3_fixture.csv");
  REQUIRE(rows.size() == 300);

  SUBCASE("random intercept") {
    const ModelFit fit = fit_reml(rows, ModelSpec::model1());
    const double beta[] = {-1.14086525091,   0.0119540211875, -0.0605601274195, 0.584268438374,
                           0.0987170583635, -0.658155599625,  0.0902155305838,  -0.638922192986};
    for (int k = 0; k < 8; ++k) CHECK(fit.beta(k) == doctest::Approx(beta[k]).epsilon(1e-7));
    CHECK(fit.reml_loglik == doctest::Approx(-434.976934585956).epsilon(1e-10));
    CHECK(fit.cov_components.psi(0, 0) == doctest::Approx(0.139066972368).epsilon(1e-6));
    CHECK(fit.cov_components.sigma2 == doctest::Approx(0.952821458533).epsilon(1e-8));
  }
  SUBCASE("correlated random intercept and slope") {
    const ModelFit fit = fit_reml(rows, ModelSpec::model3());
    const double beta[] = {-0.725173497391, 0.0110120131637, -0.0675812322244, 0.538914370298, 0.0863572173442,
                           -0.662116924591, -0.0925374082624, -0.55309697522,  0.0346622840678};
    for (int k = 0; k < 9; ++k) CHECK(std::abs(fit.beta(k) - beta[k]) < 5e-4 * std::max(1.0, std::abs(beta[k])));
    // at least as good an optimum, and not implausibly better
    CHECK(fit.reml_loglik >= -435.711248728888 - 1e-9);
    CHECK(fit.reml_loglik <= -435.711248728888 + 1e-6);
    CHECK(fit.cov_components.psi(0, 0) == doctest::Approx(0.3257750676).epsilon(1e-3));
    CHECK(fit.cov_components.psi(1, 0) == doctest::Approx(-0.00406724355337).epsilon(1e-3));
    CHECK(fit.cov_components.psi(1, 1) == doctest::Approx(6.48198524355e-05).epsilon(1e-3));
    CHECK(fit.cov_components.sigma2 == doctest::Approx(0.945748016138).epsilon(1e-5));
  }
}

TEST_CASE("noiseless data: OLS recovers the generating coefficients") {
  GeneratorConfig c = reference_config();
  c.J = 6;
  c.n_per_question = {10};
  c.sigma = 0.0;
  c.psi.setZero();
  c.beta[4] = 0.02;
  c.beta[5] = -0.3;
  const auto rows = generate(c).rows;
  const ModelFit fit = fit_ols(rows, ModelSpec::model2().fixed_terms);
  for (int k = 0; k < 9; ++k) CHECK(std::abs(fit.beta(k) - c.beta[static_cast<std::size_t>(k)]) < 1e-8);
  CHECK(fit.cov_components.sigma2 > 0.0);
  CHECK(fit.cov_components.sigma2 < 1e-20);
}

TEST_CASE("predicted random effects track the realized ones") {
  GeneratorConfig c = reference_config();
  c.J = 200;
  c.n_per_question = {50};
  c.seed = 31;
  const auto sim = generate(c);
  const Design d = build_design(sim.rows, ModelSpec::model3());
  const ModelFit fit = fit_reml(d);
  const auto pred = predict_random_effects(fit, d);
  // question ids are zero-padded, so sorted order equals generation order
  REQUIRE(pred.cluster_ids == sim.truth.question_ids);
  auto corr = [&](Eigen::Index k) {
    const Eigen::VectorXd a = pred.values.col(k).array() - pred.values.col(k).mean();
    const Eigen::VectorXd b = sim.truth.zeta.col(k).array() - sim.truth.zeta.col(k).mean();
    return a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
  };
  CHECK(corr(0) > 0.8);
  // Slope: per-question sampling variance sigma^2 / (n var(num_words)) ~ 9.3e-5
  // against Psi22 = 1.44e-4, so reliability ~0.61 and the expected correlation ~0.78.
  CHECK(corr(1) > 0.65);
}
