#include "rateaudit/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace rateaudit {

namespace {

struct Vertex {
  std::vector<double> x;
  double f;
};

class SimplexRun {
 public:
  SimplexRun(const Objective& f, const SimplexOptions& opt, SimplexResult& stats)
      : f_(f), opt_(opt), stats_(stats) {}

  double eval(const std::vector<double>& x) {
    ++stats_.evaluations;
    const double v = f_(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  }

  // Returns true when tolerances were met before the iteration budget ran out.
  bool run(Vertex& best) {
    const std::size_t n = best.x.size();
    std::vector<Vertex> s;
    s.push_back(best);
    for (std::size_t i = 0; i < n; ++i) {
      Vertex v{best.x, 0.0};
      v.x[i] += opt_.initial_step;
      v.f = eval(v.x);
      s.push_back(std::move(v));
    }

    std::vector<double> centroid(n), trial(n);
    auto point = [&](double t, const std::vector<double>& worst) {
      // centroid + t * (centroid - worst)
      for (std::size_t k = 0; k < n; ++k) trial[k] = centroid[k] + t * (centroid[k] - worst[k]);
      return trial;
    };

    while (stats_.iterations < opt_.max_iterations) {
      std::stable_sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
      if (converged(s)) {
        best = s.front();
        return true;
      }
      ++stats_.iterations;

      std::fill(centroid.begin(), centroid.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) centroid[k] += s[i].x[k];
      }
      for (double& c : centroid) c /= static_cast<double>(n);

      Vertex& worst = s.back();
      const double f_best = s.front().f;
      const double f_second = s[n - 1].f;

      Vertex reflected{point(1.0, worst.x), 0.0};
      reflected.f = eval(reflected.x);
      if (reflected.f < f_best) {
        Vertex expanded{point(2.0, worst.x), 0.0};
        expanded.f = eval(expanded.x);
        worst = expanded.f < reflected.f ? std::move(expanded) : std::move(reflected);
        continue;
      }
      if (reflected.f < f_second) {
        worst = std::move(reflected);
        continue;
      }
      const bool outside = reflected.f < worst.f;
      Vertex contracted{point(outside ? 0.5 : -0.5, worst.x), 0.0};
      contracted.f = eval(contracted.x);
      if (contracted.f < (outside ? reflected.f : worst.f)) {
        worst = std::move(contracted);
        continue;
      }
      for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t k = 0; k < n; ++k) s[i].x[k] = s[0].x[k] + 0.5 * (s[i].x[k] - s[0].x[k]);
        s[i].f = eval(s[i].x);
      }
    }
    std::stable_sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    best = s.front();
    return false;
  }

 private:
  bool converged(const std::vector<Vertex>& s) const {
    const double f_lo = s.front().f;
    const double f_hi = s.back().f;
    if (!std::isfinite(f_hi)) return false;
    if (f_hi - f_lo > opt_.f_tol * std::max(1.0, std::abs(f_lo))) return false;
    for (std::size_t i = 1; i < s.size(); ++i) {
      for (std::size_t k = 0; k < s[i].x.size(); ++k) {
        if (std::abs(s[i].x[k] - s[0].x[k]) > opt_.x_tol) return false;
      }
    }
    return true;
  }

  const Objective& f_;
  const SimplexOptions& opt_;
  SimplexResult& stats_;
};

}  // namespace

SimplexResult minimize_simplex(const Objective& f, std::vector<double> x0,
                               const SimplexOptions& options) {
  if (x0.empty()) throw std::invalid_argument("minimize_simplex: empty starting point");
  SimplexResult result;
  SimplexRun runner(f, options, result);
  Vertex best{std::move(x0), 0.0};
  best.f = runner.eval(best.x);

  bool ok = runner.run(best);
  while (ok && result.restarts < options.max_restarts) {
    const double before = best.f;
    ++result.restarts;
    ok = runner.run(best);
    if (!(before - best.f > options.f_tol * std::max(1.0, std::abs(best.f)))) break;
  }
  result.x = std::move(best.x);
  result.value = best.f;
  result.converged = ok;
  return result;
}

void refine_newton(const Objective& f, SimplexResult& result, int max_steps) {
  const auto n = static_cast<Eigen::Index>(result.x.size());
  if (n == 0) return;
  std::vector<double> x = result.x;
  double fx = result.value;
  auto eval = [&](const std::vector<double>& at) {
    ++result.evaluations;
    const double v = f(at);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  // Near the optimum the predicted decrease drops below rounding noise in f;
  // steps are judged by the gradient norm there, with f allowed to rise by
  // at most this much.
  const double slack = 1e-12 * std::max(1.0, std::abs(fx));
  double best_gnorm = std::numeric_limits<double>::infinity();
  std::vector<double> best_x = x;
  double best_f = fx;

  for (int step = 0; step <= max_steps; ++step) {
    std::vector<double> h(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) h[k] = 1e-4 * std::max(1.0, std::abs(x[k]));

    Eigen::VectorXd g(n);
    Eigen::MatrixXd H(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      auto xp = x, xm = x;
      xp[ui] += h[ui];
      xm[ui] -= h[ui];
      const double fp = eval(xp), fm = eval(xm);
      g(i) = (fp - fm) / (2.0 * h[ui]);
      H(i, i) = (fp - 2.0 * fx + fm) / (h[ui] * h[ui]);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) {
        const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
        auto a = x, b = x, c = x, d = x;
        a[ui] += h[ui], a[uj] += h[uj];
        b[ui] += h[ui], b[uj] -= h[uj];
        c[ui] -= h[ui], c[uj] += h[uj];
        d[ui] -= h[ui], d[uj] -= h[uj];
        H(i, j) = H(j, i) = (eval(a) - eval(b) - eval(c) + eval(d)) / (4.0 * h[ui] * h[uj]);
      }
    }
    if (!g.allFinite() || !H.allFinite()) break;
    const double gnorm = g.lpNorm<Eigen::Infinity>();
    if (gnorm >= best_gnorm) break;
    best_gnorm = gnorm;
    best_x = x;
    best_f = fx;
    if (step == max_steps) break;

    const Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd dir = -llt.solve(g);
    bool moved = false;
    for (double t = 1.0; t > 1e-6; t *= 0.5) {
      auto trial = x;
      for (std::size_t k = 0; k < x.size(); ++k) trial[k] += t * dir(static_cast<Eigen::Index>(k));
      const double ft = eval(trial);
      if (ft <= fx + slack) {
        x = std::move(trial);
        fx = ft;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (best_f <= result.value + slack) {
    result.x = std::move(best_x);
    result.value = best_f;
  }
}

}  // namespace rateaudit
