#include "rateaudit/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace rateaudit {

namespace {

using ojson = nlohmann::ordered_json;

ojson number(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

std::string fixed3(double v) {
  if (!std::isfinite(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  std::string s(buf);
  if (s == "-0.000") s = "0.000";
  return s;
}

std::string pretty_term(const std::string& term) {
  if (term == "grammar_score:word_freq_d") return "word_freq_d*grammar_score";
  return term;
}

ojson test_to_json(const TestResult& t) {
  ojson j;
  j["kind"] = std::string(to_string(t.kind));
  if (!t.terms.empty()) j["terms"] = t.terms;
  if (!t.null_model.empty()) j["null_model"] = t.null_model;
  if (!t.alt_model.empty()) j["alt_model"] = t.alt_model;
  j["statistic"] = number(t.statistic);
  j["df"] = t.df;
  j["reference"] = t.reference;
  j["p"] = number(t.p_value);
  if (t.alt_p_value) {
    j["p_boundary_mixture"] = number(*t.alt_p_value);
    j["boundary_reference"] = t.alt_reference;
  }
  return j;
}

ojson fit_to_json(const FitSummary& s) {
  const ModelFit& f = s.fit;
  ojson j;
  j["model"] = std::string(to_string(f.spec.id));
  j["n_obs"] = f.n_obs;
  j["n_questions"] = f.n_clusters;
  j["fixed_terms"] = f.spec.fixed_terms;
  j["random_terms"] = f.spec.random_terms;
  ojson beta = ojson::object(), se = ojson::object(), z = ojson::object(), p = ojson::object();
  for (std::size_t k = 0; k < f.spec.fixed_terms.size(); ++k) {
    const auto& name = f.spec.fixed_terms[k];
    const auto i = static_cast<Eigen::Index>(k);
    beta[name] = number(f.beta(i));
    se[name] = number(f.beta_se(i));
    z[name] = number(s.z_tests[k].statistic);
    p[name] = number(s.z_tests[k].p_value);
  }
  j["beta"] = beta;
  j["se"] = se;
  j["z"] = z;
  j["p"] = p;

  const auto& cc = f.cov_components;
  ojson psi = ojson::object();
  for (std::size_t a = 0; a < cc.terms.size(); ++a) {
    const auto ia = static_cast<Eigen::Index>(a);
    psi["var(" + cc.terms[a] + ")"] = number(cc.psi(ia, ia));
  }
  for (std::size_t a = 1; a < cc.terms.size(); ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      psi["cov(" + cc.terms[a] + "," + cc.terms[b] + ")"] =
          number(cc.psi(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
    }
  }
  j["psi"] = psi;
  ojson vc = ojson::object(), vc_se = ojson::object();
  for (std::size_t k = 0; k < f.vc_estimates.size(); ++k) {
    vc[f.vc_estimates[k].name] = number(f.vc_estimates[k].value);
    vc_se[f.vc_standard_errors[k].name] = number(f.vc_standard_errors[k].value);
  }
  j["random_effects"] = {{"estimate", vc}, {"se", vc_se}};
  j["sigma"] = number(cc.sigma());
  j["sigma2"] = number(cc.sigma2);
  j["loglik"] = number(f.reml_loglik);
  j["deviance"] = number(f.deviance);
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  ojson boundary = ojson::object();
  for (std::size_t k = 0; k < cc.terms.size(); ++k) boundary[cc.terms[k]] = static_cast<bool>(f.boundary[k]);
  j["boundary"] = boundary;
  j["on_boundary"] = f.on_boundary;
  j["wald"] = test_to_json(s.wald);
  return j;
}

}  // namespace

FitSummary summarize(ModelFit fit) {
  FitSummary s{std::move(fit), {}, {}};
  for (const auto& t : s.fit.spec.fixed_terms) s.z_tests.push_back(z_test(s.fit, t));
  s.wald = wald_omnibus(s.fit);
  return s;
}

std::string model_label(ModelId id) {
  switch (id) {
    case ModelId::OLS: return "Single-level linear regression";
    case ModelId::M1: return "Model 1: random intercepts, no interaction";
    case ModelId::M2: return "Model 2: random intercepts with the grammar_score x word_freq_d interaction";
    case ModelId::M3: return "Model 3: random intercepts and num_words slopes, with the interaction";
  }
  return "?";
}

std::string model_fit_json(const FitSummary& summary) { return fit_to_json(summary).dump(2); }

std::string test_result_json(const TestResult& test) { return test_to_json(test).dump(2); }

std::string fit_report_json(std::span<const FitSummary> fits, std::span<const TestResult> comparisons) {
  ojson doc;
  doc["models"] = ojson::array();
  for (const auto& f : fits) doc["models"].push_back(fit_to_json(f));
  doc["comparisons"] = ojson::array();
  for (const auto& t : comparisons) doc["comparisons"].push_back(test_to_json(t));
  return doc.dump(2) + "\n";
}

std::string fit_report_markdown(std::span<const FitSummary> fits,
                                std::span<const TestResult> comparisons) {
  std::ostringstream out;
  for (const auto& s : fits) {
    const ModelFit& f = s.fit;
    out << "## " << model_label(f.spec.id) << "\n\n";
    out << "N = " << f.n_obs << " responses, J = " << f.n_clusters
        << " questions, REML deviance = " << fixed3(f.deviance)
        << ", converged = " << (f.converged ? "yes" : "no");
    if (f.on_boundary) out << ", boundary fit";
    out << "\n\n";
    out << "| covariate | coefficient | std. error | Z | P > Z |\n";
    out << "|---|---:|---:|---:|---:|\n";
    for (std::size_t k = 0; k < f.spec.fixed_terms.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      out << "| " << pretty_term(f.spec.fixed_terms[k]) << " | " << fixed3(f.beta(i)) << " | "
          << fixed3(f.beta_se(i)) << " | " << fixed3(s.z_tests[k].statistic) << " | "
          << fixed3(s.z_tests[k].p_value) << " |\n";
    }
    out << "\n| random effect | estimate | std. error |\n";
    out << "|---|---:|---:|\n";
    for (std::size_t k = 0; k < f.vc_estimates.size(); ++k) {
      std::string name = f.vc_estimates[k].name;
      if (auto pos = name.find(','); pos != std::string::npos) name.insert(pos + 1, " ");
      out << "| " << name << " | " << fixed3(f.vc_estimates[k].value) << " | "
          << fixed3(f.vc_standard_errors[k].value) << " |\n";
    }
    out << "\nWald chi-square(" << s.wald.df << ") = " << fixed3(s.wald.statistic)
        << ", p = " << fixed3(s.wald.p_value) << "\n\n";
  }
  if (!comparisons.empty()) {
    out << "## Likelihood-ratio tests\n\n";
    out << "| null | alternative | statistic | df | p | p (boundary mixture) |\n";
    out << "|---|---|---:|---:|---:|---:|\n";
    for (const auto& t : comparisons) {
      out << "| " << t.null_model << " | " << t.alt_model << " | " << fixed3(t.statistic) << " | "
          << t.df << " | " << fixed3(t.p_value) << " | "
          << (t.alt_p_value ? fixed3(*t.alt_p_value) : std::string("-")) << " |\n";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace rateaudit
