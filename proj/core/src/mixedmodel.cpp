#include "rateaudit/mixedmodel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>

namespace rateaudit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double covariate_value(const FeatureRow& row, std::string_view name) {
  if (name == term::kIntercept) return 1.0;
  if (name == term::kNumWords) return static_cast<double>(row.num_words);
  if (name == term::kGrammarScore) return static_cast<double>(row.grammar_score);
  if (name == term::kWordFreq) return static_cast<double>(row.word_freq_d);
  if (name == term::kAvgNumWords) return row.avg_num_words;
  if (name == term::kConstructMMR) return static_cast<double>(row.construct_MMR);
  if (name == term::kConstructIMR) return static_cast<double>(row.construct_IMR);
  if (name == term::kConstructMAP) return static_cast<double>(row.construct_MAP);
  if (name == term::kInteraction) {
    return static_cast<double>(row.grammar_score) * static_cast<double>(row.word_freq_d);
  }
  throw DesignError("unknown model term '" + std::string(name) + "'");
}

std::vector<std::string> base_fixed_terms() {
  return {std::string(term::kIntercept),     std::string(term::kNumWords),
          std::string(term::kGrammarScore),  std::string(term::kWordFreq),
          std::string(term::kAvgNumWords),   std::string(term::kConstructMMR),
          std::string(term::kConstructIMR),  std::string(term::kConstructMAP)};
}

/// Cholesky factor of a symmetric PSD matrix; pivots that vanish yield zero columns.
Eigen::MatrixXd psd_cholesky(const Eigen::MatrixXd& a) {
  const Eigen::Index q = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d <= 0.0) continue;
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < q; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

// Per-question sufficient statistics accumulated in a canonical row order so
// the likelihood is bit-identical under any permutation of the input rows.
class RemlProblem {
 public:
  explicit RemlProblem(const Design& d) : n_(d.n_obs()), p_(d.n_fixed()), q_(d.n_random()) {
    const auto p = static_cast<Eigen::Index>(p_);
    const auto q = static_cast<Eigen::Index>(q_);
    xtx_ = Eigen::MatrixXd::Zero(p, p);
    xty_ = Eigen::VectorXd::Zero(p);
    yty_ = 0.0;
    clusters_.reserve(d.n_clusters());
    for (const auto& rows : d.cluster_rows) {
      std::vector<std::size_t> order(rows);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
        if (d.y(ia) != d.y(ib)) return d.y(ia) < d.y(ib);
        for (Eigen::Index c = 0; c < p; ++c) {
          if (d.X(ia, c) != d.X(ib, c)) return d.X(ia, c) < d.X(ib, c);
        }
        for (Eigen::Index c = 0; c < q; ++c) {
          if (d.Z(ia, c) != d.Z(ib, c)) return d.Z(ia, c) < d.Z(ib, c);
        }
        return false;
      });
      ClusterStats s{Eigen::MatrixXd::Zero(q, q), Eigen::MatrixXd::Zero(q, p), Eigen::VectorXd::Zero(q)};
      Eigen::MatrixXd cxtx = Eigen::MatrixXd::Zero(p, p);
      Eigen::VectorXd cxty = Eigen::VectorXd::Zero(p);
      double cyty = 0.0;
      for (std::size_t r : order) {
        const auto i = static_cast<Eigen::Index>(r);
        const Eigen::RowVectorXd x = d.X.row(i);
        const Eigen::RowVectorXd z = d.Z.row(i);
        const double y = d.y(i);
        s.ztz.noalias() += z.transpose() * z;
        s.ztx.noalias() += z.transpose() * x;
        s.zty += z.transpose() * y;
        cxtx.noalias() += x.transpose() * x;
        cxty += x.transpose() * y;
        cyty += y * y;
      }
      xtx_ += cxtx;
      xty_ += cxty;
      yty_ += cyty;
      clusters_.push_back(std::move(s));
    }
  }

  std::size_t q() const noexcept { return q_; }

  RemlEvaluation evaluate(const Eigen::MatrixXd& lambda) const {
    RemlEvaluation ev;
    Eigen::MatrixXd xtwx = xtx_;
    Eigen::VectorXd xtwy = xty_;
    double ytwy = yty_;
    double log_det_w = 0.0;
    if (q_ > 0) {
      const auto q = static_cast<Eigen::Index>(q_);
      const Eigen::MatrixXd lt = lambda.transpose();
      for (const auto& s : clusters_) {
        Eigen::MatrixXd m = lt * s.ztz * lambda;
        m.diagonal().array() += 1.0;
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        const Eigen::MatrixXd lm = llt.matrixL();
        for (Eigen::Index k = 0; k < q; ++k) log_det_w += 2.0 * std::log(lm(k, k));
        const Eigen::MatrixXd c = llt.matrixL().solve(lt * s.ztx);
        const Eigen::VectorXd cy = llt.matrixL().solve(lt * s.zty);
        xtwx.noalias() -= c.transpose() * c;
        xtwy.noalias() -= c.transpose() * cy;
        ytwy -= cy.squaredNorm();
      }
    }
    Eigen::LLT<Eigen::MatrixXd> xllt(xtwx);
    if (xllt.info() != Eigen::Success) {
      ev.deviance = std::numeric_limits<double>::infinity();
      return ev;
    }
    ev.beta = xllt.solve(xtwy);
    ev.weighted_rss = std::max(0.0, ytwy - ev.beta.dot(xtwy));
    const double dof = static_cast<double>(n_ - p_);
    ev.sigma2 = std::max(ev.weighted_rss / dof, std::numeric_limits<double>::min());
    const Eigen::MatrixXd lx = xllt.matrixL();
    double log_det_x = 0.0;
    for (Eigen::Index k = 0; k < lx.rows(); ++k) log_det_x += 2.0 * std::log(lx(k, k));
    ev.log_det_w = log_det_w;
    ev.log_det_xtwx = log_det_x;
    ev.xtwx = std::move(xtwx);
    ev.deviance = dof * (1.0 + kLog2Pi + std::log(ev.sigma2)) + log_det_w + log_det_x;
    return ev;
  }

  double unprofiled(const Eigen::MatrixXd& psi, double sigma2) const {
    if (!(sigma2 > 0.0)) return std::numeric_limits<double>::infinity();
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q_),
                                                   static_cast<Eigen::Index>(q_));
    if (q_ > 0) {
      const Eigen::MatrixXd rel = psi / sigma2;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rel, Eigen::EigenvaluesOnly);
      if (eig.eigenvalues().minCoeff() < -1e-14 * std::max(1.0, rel.norm())) {
        return std::numeric_limits<double>::infinity();
      }
      lambda = psd_cholesky(rel);
    }
    const RemlEvaluation ev = evaluate(lambda);
    if (!std::isfinite(ev.deviance)) return ev.deviance;
    const double n = static_cast<double>(n_), p = static_cast<double>(p_);
    return (n - p) * (std::log(sigma2) + kLog2Pi) + ev.log_det_w + ev.log_det_xtwx +
           ev.weighted_rss / sigma2;
  }

 private:
  struct ClusterStats {
    Eigen::MatrixXd ztz;
    Eigen::MatrixXd ztx;
    Eigen::VectorXd zty;
  };

  std::size_t n_, p_, q_;
  Eigen::MatrixXd xtx_;
  Eigen::VectorXd xty_;
  double yty_ = 0.0;
  std::vector<ClusterStats> clusters_;
};

// Log-Cholesky parameters of the active terms, embedded in a q x q factor and
// mapped back from column-scaled to raw random-effect units.
Eigen::MatrixXd embed_cholesky(std::span<const double> theta, const std::vector<std::size_t>& active,
                               const Eigen::VectorXd& scales) {
  const auto q = scales.size();
  const Eigen::MatrixXd sub = theta_to_cholesky(theta, active.size());
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(q, q);
  for (std::size_t a = 0; a < active.size(); ++a) {
    const auto ra = static_cast<Eigen::Index>(active[a]);
    for (std::size_t b = 0; b <= a; ++b) {
      l(ra, static_cast<Eigen::Index>(active[b])) =
          sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) / scales(ra);
    }
  }
  return l;
}

std::string sd_name(std::string_view term) { return "sd(" + std::string(term) + ")"; }

// Random-effect parameters on the sd/corr scale: sd of each active term, the
// correlation when two terms are active, then the residual sd.
struct VcLayout {
  std::vector<std::size_t> active;
  bool has_corr = false;
};

void decode_vc(const VcLayout& layout, std::size_t q, std::span<const double> phi,
               Eigen::MatrixXd& psi, double& sigma2) {
  psi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
  for (std::size_t a = 0; a < layout.active.size(); ++a) {
    const auto k = static_cast<Eigen::Index>(layout.active[a]);
    psi(k, k) = phi[a] * phi[a];
  }
  if (layout.has_corr) {
    const auto i = static_cast<Eigen::Index>(layout.active[0]);
    const auto j = static_cast<Eigen::Index>(layout.active[1]);
    psi(i, j) = psi(j, i) = phi[2] * phi[0] * phi[1];
  }
  sigma2 = phi.back() * phi.back();
}

void fill_variance_components(ModelFit& fit, const RemlProblem& problem) {
  const auto& cc = fit.cov_components;
  const std::size_t q = cc.terms.size();
  VcLayout layout;
  for (std::size_t k = 0; k < q; ++k) {
    if (!fit.boundary[k]) layout.active.push_back(k);
  }
  layout.has_corr = layout.active.size() == 2;

  std::vector<double> phi;
  std::vector<std::string> names;
  for (std::size_t k : layout.active) {
    phi.push_back(cc.sd(k));
    names.push_back(sd_name(cc.terms[k]));
  }
  if (layout.has_corr) {
    phi.push_back(cc.corr());
    names.push_back("corr(" + cc.terms[layout.active[1]] + "," + cc.terms[layout.active[0]] + ")");
  }
  phi.push_back(cc.sigma());
  names.push_back("sd(residual)");

  const std::size_t m = phi.size();
  std::vector<double> se(m, std::numeric_limits<double>::quiet_NaN());
  if (fit.converged) {
    auto f = [&](const std::vector<double>& x) {
      Eigen::MatrixXd psi;
      double s2 = 0.0;
      decode_vc(layout, q, x, psi, s2);
      return problem.unprofiled(psi, s2);
    };
    std::vector<double> h(m);
    for (std::size_t i = 0; i < m; ++i) h[i] = 1e-4 * std::max(std::abs(phi[i]), 1e-3);
    if (layout.has_corr) {
      // keep the corr perturbation inside (-1, 1)
      h[2] = std::min(h[2], 0.5 * (1.0 - std::abs(phi[2])));
    }
    Eigen::MatrixXd hess(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    const double f0 = f(phi);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i; j < m; ++j) {
        double val;
        if (i == j) {
          auto xp = phi, xm = phi;
          xp[i] += h[i];
          xm[i] -= h[i];
          val = (f(xp) - 2.0 * f0 + f(xm)) / (h[i] * h[i]);
        } else {
          auto pp = phi, pm = phi, mp = phi, mm = phi;
          pp[i] += h[i]; pp[j] += h[j];
          pm[i] += h[i]; pm[j] -= h[j];
          mp[i] -= h[i]; mp[j] += h[j];
          mm[i] -= h[i]; mm[j] -= h[j];
          val = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h[i] * h[j]);
        }
        hess(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = val;
        hess(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = val;
      }
    }
    // Observed information is half the Hessian of the deviance.
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * hess);
    if (llt.info() == Eigen::Success && hess.allFinite()) {
      const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(hess.rows(), hess.cols()));
      for (std::size_t i = 0; i < m; ++i) {
        se[i] = std::sqrt(cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
      }
    }
  }

  fit.vc_estimates.clear();
  fit.vc_standard_errors.clear();
  std::size_t a = 0;
  for (std::size_t k = 0; k < q; ++k) {
    if (fit.boundary[k]) {
      fit.vc_estimates.push_back({sd_name(cc.terms[k]), 0.0});
      fit.vc_standard_errors.push_back({sd_name(cc.terms[k]), std::numeric_limits<double>::quiet_NaN()});
    } else {
      fit.vc_estimates.push_back({names[a], phi[a]});
      fit.vc_standard_errors.push_back({names[a], se[a]});
      ++a;
    }
  }
  for (std::size_t i = layout.active.size(); i < m; ++i) {
    fit.vc_estimates.push_back({names[i], phi[i]});
    fit.vc_standard_errors.push_back({names[i], se[i]});
  }
}

void finish_fit(ModelFit& fit, const Design& design, const RemlProblem& problem,
                const Eigen::MatrixXd& lambda, const FitOptions& options) {
  const RemlEvaluation ev = problem.evaluate(lambda);
  if (!std::isfinite(ev.deviance)) throw RankDeficientError(collinear_columns(design));
  fit.beta = ev.beta;
  fit.beta_cov = ev.sigma2 * ev.xtwx.llt().solve(
                                 Eigen::MatrixXd::Identity(ev.xtwx.rows(), ev.xtwx.cols()));
  fit.beta_se = fit.beta_cov.diagonal().array().sqrt();
  fit.cov_components.terms = design.spec.random_terms;
  fit.cov_components.psi = ev.sigma2 * lambda * lambda.transpose();
  fit.cov_components.sigma2 = ev.sigma2;
  fit.reml_loglik = -0.5 * ev.deviance;
  fit.deviance = -2.0 * fit.reml_loglik;
  fit.n_obs = design.n_obs();
  fit.n_clusters = design.n_clusters();
  fit.data_fingerprint = design.fingerprint();
  if (options.variance_component_se) fill_variance_components(fit, problem);
}

void check_fittable(const Design& design) {
  if (design.n_obs() <= design.n_fixed()) {
    throw DesignError("need more observations (" + std::to_string(design.n_obs()) +
                      ") than fixed terms (" + std::to_string(design.n_fixed()) + ")");
  }
  auto bad = collinear_columns(design);
  if (!bad.empty()) throw RankDeficientError(std::move(bad));
}

}  // namespace

std::string_view to_string(ModelId id) {
  switch (id) {
    case ModelId::OLS: return "OLS";
    case ModelId::M1: return "M1";
    case ModelId::M2: return "M2";
    case ModelId::M3: return "M3";
  }
  return "?";
}

ModelSpec ModelSpec::model1() {
  return {ModelId::M1, base_fixed_terms(), false, {std::string(term::kIntercept)}};
}

ModelSpec ModelSpec::model2() {
  auto terms = base_fixed_terms();
  terms.emplace_back(term::kInteraction);
  return {ModelId::M2, std::move(terms), true, {std::string(term::kIntercept)}};
}

ModelSpec ModelSpec::model3() {
  auto spec = model2();
  spec.id = ModelId::M3;
  spec.random_terms.emplace_back(term::kNumWords);
  return spec;
}

ModelSpec ModelSpec::ols(bool interaction) {
  auto spec = interaction ? model2() : model1();
  spec.id = ModelId::OLS;
  spec.random_terms.clear();
  return spec;
}

ModelSpec ModelSpec::from_id(ModelId id) {
  switch (id) {
    case ModelId::OLS: return ols(false);
    case ModelId::M1: return model1();
    case ModelId::M2: return model2();
    case ModelId::M3: return model3();
  }
  throw std::invalid_argument("unknown model id");
}

RankDeficientError::RankDeficientError(std::vector<std::string> columns)
    : std::runtime_error([&] {
        std::string msg = "fixed-effect design is rank deficient; collinear column(s):";
        for (const auto& c : columns) msg += " " + c;
        return msg;
      }()),
      columns_(std::move(columns)) {}

Eigen::MatrixXd Design::z_block(std::size_t cluster) const {
  const auto& rows = cluster_rows.at(cluster);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), Z.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = Z.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Eigen::MatrixXd Design::x_block(std::size_t cluster) const {
  const auto& rows = cluster_rows.at(cluster);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Eigen::VectorXd Design::y_block(std::size_t cluster) const {
  const auto& rows = cluster_rows.at(cluster);
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

std::uint64_t Design::fingerprint() const {
  // Sum of per-row FNV-1a digests: commutative, so row order does not matter.
  constexpr std::uint64_t kOffset = 1469598103934665603ULL;
  constexpr std::uint64_t kPrime = 1099511628211ULL;
  auto mix = [](std::uint64_t h, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFFU;
      h *= kPrime;
    }
    return h;
  };
  std::uint64_t total = n_obs();
  for (std::size_t c = 0; c < cluster_ids.size(); ++c) {
    std::uint64_t cluster_hash = kOffset;
    for (char ch : cluster_ids[c]) cluster_hash = mix(cluster_hash, static_cast<unsigned char>(ch));
    for (std::size_t r : cluster_rows[c]) {
      const auto i = static_cast<Eigen::Index>(r);
      std::uint64_t h = mix(cluster_hash, std::bit_cast<std::uint64_t>(y(i)));
      for (Eigen::Index k = 0; k < X.cols(); ++k) h = mix(h, std::bit_cast<std::uint64_t>(X(i, k)));
      total += h;
    }
  }
  return total;
}

Design build_design(std::span<const FeatureRow> rows, const ModelSpec& spec) {
  if (rows.empty()) throw DesignError("no observations");
  if (spec.fixed_terms.empty()) throw DesignError("model has no fixed terms");
  Design d;
  d.spec = spec;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(spec.fixed_terms.size());
  const auto q = static_cast<Eigen::Index>(spec.random_terms.size());
  d.y.resize(n);
  d.X.resize(n, p);
  d.Z.resize(n, q);
  std::map<std::string, std::vector<std::size_t>> clusters;
  for (Eigen::Index i = 0; i < n; ++i) {
    const FeatureRow& row = rows[static_cast<std::size_t>(i)];
    if (row.question_id.empty()) {
      throw DesignError("row " + std::to_string(i + 1) + " has an empty question_id");
    }
    d.y(i) = row.rating;
    for (Eigen::Index k = 0; k < p; ++k) {
      d.X(i, k) = covariate_value(row, spec.fixed_terms[static_cast<std::size_t>(k)]);
    }
    for (Eigen::Index k = 0; k < q; ++k) {
      d.Z(i, k) = covariate_value(row, spec.random_terms[static_cast<std::size_t>(k)]);
    }
    if (!std::isfinite(d.y(i)) || !d.X.row(i).allFinite() || !d.Z.row(i).allFinite()) {
      throw DesignError("row " + std::to_string(i + 1) + " has a non-finite value");
    }
    clusters[row.question_id].push_back(static_cast<std::size_t>(i));
  }
  for (auto& [id, members] : clusters) {
    d.cluster_ids.push_back(id);
    d.cluster_rows.push_back(std::move(members));
  }
  return d;
}

std::vector<std::string> collinear_columns(const Design& design) {
  // Gram-Schmidt on unit-scaled columns; a column whose residual after
  // projection on the accepted ones is negligible is flagged.
  std::vector<std::string> dependent;
  std::vector<Eigen::VectorXd> basis;
  for (Eigen::Index k = 0; k < design.X.cols(); ++k) {
    Eigen::VectorXd v = design.X.col(k);
    const double norm = v.norm();
    if (norm == 0.0) {
      dependent.push_back(design.spec.fixed_terms[static_cast<std::size_t>(k)]);
      continue;
    }
    v /= norm;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) v -= b.dot(v) * b;
    }
    const double resid = v.norm();
    if (resid < 1e-9) {
      dependent.push_back(design.spec.fixed_terms[static_cast<std::size_t>(k)]);
    } else {
      basis.push_back(v / resid);
    }
  }
  return dependent;
}

Eigen::MatrixXd theta_to_cholesky(std::span<const double> theta, std::size_t q) {
  if (theta.size() != q * (q + 1) / 2) {
    throw std::invalid_argument("expected " + std::to_string(q * (q + 1) / 2) +
                                " covariance parameters, got " + std::to_string(theta.size()));
  }
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
  std::size_t idx = 0;
  for (std::size_t col = 0; col < q; ++col) {
    for (std::size_t row = col; row < q; ++row, ++idx) {
      if (!std::isfinite(theta[idx])) throw std::invalid_argument("non-finite covariance parameter");
      l(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) =
          row == col ? std::exp(theta[idx]) : theta[idx];
    }
  }
  return l;
}

RemlEvaluation evaluate_reml(const Design& design, const Eigen::MatrixXd& relative_chol) {
  if (relative_chol.rows() != static_cast<Eigen::Index>(design.n_random()) ||
      relative_chol.cols() != static_cast<Eigen::Index>(design.n_random())) {
    throw std::invalid_argument("relative Cholesky factor has the wrong shape");
  }
  return RemlProblem(design).evaluate(relative_chol);
}

Eigen::VectorXd random_effect_scales(const Design& design) {
  Eigen::VectorXd s(design.Z.cols());
  const double n = static_cast<double>(std::max<std::size_t>(1, design.n_obs()));
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    const double rms = std::sqrt(design.Z.col(k).squaredNorm() / n);
    s(k) = rms > 0.0 ? rms : 1.0;
  }
  return s;
}

Eigen::MatrixXd relative_cholesky(const Design& design, std::span<const double> theta) {
  const Eigen::VectorXd s = random_effect_scales(design);
  return s.cwiseInverse().asDiagonal() * theta_to_cholesky(theta, design.n_random());
}

double reml_deviance(const Design& design, std::span<const double> theta) {
  return RemlProblem(design).evaluate(relative_cholesky(design, theta)).deviance;
}

double reml_deviance_unprofiled(const Design& design, const Eigen::MatrixXd& psi, double sigma2) {
  return RemlProblem(design).unprofiled(psi, sigma2);
}

double CovarianceComponents::sd(std::size_t k) const {
  return std::sqrt(std::max(0.0, psi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))));
}

double CovarianceComponents::corr() const {
  if (psi.rows() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double denom = sd(0) * sd(1);
  if (denom <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return psi(1, 0) / denom;
}

double CovarianceComponents::sigma() const { return std::sqrt(sigma2); }

std::size_t ModelFit::term_index(std::string_view name) const {
  for (std::size_t i = 0; i < spec.fixed_terms.size(); ++i) {
    if (spec.fixed_terms[i] == name) return i;
  }
  throw std::out_of_range("model has no term '" + std::string(name) + "'");
}

ModelFit fit_reml(const Design& design, const FitOptions& options) {
  const std::size_t q = design.n_random();
  if (q == 0) return fit_ols(design);
  if (design.n_clusters() < 2) throw DesignError("random-effects model needs at least 2 questions");
  check_fittable(design);

  const RemlProblem problem(design);
  const Eigen::VectorXd scales = random_effect_scales(design);
  ModelFit fit;
  fit.spec = design.spec;

  struct Candidate {
    std::vector<std::size_t> active;
    Eigen::MatrixXd lambda;
    double deviance;
    bool converged;
  };
  std::optional<Candidate> best;

  // Full structure first, then each boundary face (subsets of random terms
  // with the remaining variances fixed at exactly zero). Ties keep the
  // larger structure.
  std::vector<unsigned> masks((1u << q));
  std::iota(masks.begin(), masks.end(), 0u);
  std::stable_sort(masks.begin(), masks.end(), [](unsigned a, unsigned b) {
    return std::popcount(a) > std::popcount(b);
  });
  for (unsigned mask : masks) {
    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < q; ++k) {
      if (mask & (1u << k)) active.push_back(k);
    }
    Candidate cand{active, {}, 0.0, true};
    if (active.empty()) {
      cand.lambda = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
      cand.deviance = problem.evaluate(cand.lambda).deviance;
    } else {
      auto objective = [&](std::span<const double> theta) {
        return problem.evaluate(embed_cholesky(theta, active, scales)).deviance;
      };
      // Start at relative sd 1 / rms(column), zero correlation.
      std::vector<double> start(active.size() * (active.size() + 1) / 2, 0.0);
      SimplexResult res = minimize_simplex(objective, std::move(start), options.simplex);
      if (res.converged) refine_newton(objective, res);
      fit.iterations += res.iterations;
      fit.evaluations += res.evaluations;
      cand.lambda = embed_cholesky(res.x, active, scales);
      cand.deviance = res.value;
      cand.converged = res.converged;
      if (active.size() == q) fit.theta = res.x;
    }
    if (!best || cand.deviance < best->deviance) best = std::move(cand);
  }

  fit.converged = best->converged;
  Eigen::MatrixXd lambda = best->lambda;
  fit.boundary.assign(q, false);
  const Eigen::MatrixXd rel = lambda * lambda.transpose();
  for (std::size_t k = 0; k < q; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    if (rel(kk, kk) < options.boundary_tolerance) {
      fit.boundary[k] = true;
      fit.on_boundary = true;
    }
  }
  if (fit.on_boundary) {
    Eigen::MatrixXd trimmed = rel;
    for (std::size_t k = 0; k < q; ++k) {
      if (!fit.boundary[k]) continue;
      trimmed.row(static_cast<Eigen::Index>(k)).setZero();
      trimmed.col(static_cast<Eigen::Index>(k)).setZero();
    }
    lambda = psd_cholesky(trimmed);
  }
  finish_fit(fit, design, problem, lambda, options);
  return fit;
}

ModelFit fit_reml(std::span<const FeatureRow> rows, const ModelSpec& spec, const FitOptions& options) {
  return fit_reml(build_design(rows, spec), options);
}

ModelFit fit_ols(const Design& design) {
  check_fittable(design);
  Design plain = design;
  if (plain.n_random() > 0) {
    plain.spec.random_terms.clear();
    plain.Z.resize(plain.Z.rows(), 0);
  }
  plain.spec.id = ModelId::OLS;
  const RemlProblem problem(plain);
  ModelFit fit;
  fit.spec = plain.spec;
  finish_fit(fit, plain, problem, Eigen::MatrixXd(0, 0), FitOptions{});
  return fit;
}

ModelFit fit_ols(std::span<const FeatureRow> rows, const std::vector<std::string>& fixed_terms) {
  ModelSpec spec;
  spec.id = ModelId::OLS;
  spec.fixed_terms = fixed_terms;
  spec.include_interaction =
      std::find(fixed_terms.begin(), fixed_terms.end(), term::kInteraction) != fixed_terms.end();
  return fit_ols(build_design(rows, spec));
}

RandomEffectPrediction predict_random_effects(const ModelFit& fit, const Design& design) {
  if (fit.spec.random_terms != design.spec.random_terms ||
      fit.spec.fixed_terms != design.spec.fixed_terms) {
    throw std::invalid_argument("fit and design describe different models");
  }
  RandomEffectPrediction out;
  out.cluster_ids = design.cluster_ids;
  out.terms = design.spec.random_terms;
  const auto q = static_cast<Eigen::Index>(design.n_random());
  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(design.n_clusters()), q);
  if (q == 0) return out;
  const Eigen::MatrixXd& psi = fit.cov_components.psi;
  const double sigma2 = fit.cov_components.sigma2;
  for (std::size_t j = 0; j < design.n_clusters(); ++j) {
    const Eigen::MatrixXd z = design.z_block(j);
    const Eigen::VectorXd resid = design.y_block(j) - design.x_block(j) * fit.beta;
    // Psi Z'(Z Psi Z' + s2 I)^-1 r  ==  Psi (Z'Z Psi + s2 I)^-1 Z' r
    Eigen::MatrixXd m = z.transpose() * z * psi;
    m.diagonal().array() += sigma2;
    out.values.row(static_cast<Eigen::Index>(j)) =
        (psi * m.partialPivLu().solve(z.transpose() * resid)).transpose();
  }
  return out;
}

}  // namespace rateaudit
