#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rateaudit/corpus.hpp"
#include "rateaudit/csv.hpp"
#include "rateaudit/featurize.hpp"
#include "rateaudit/inference.hpp"
#include "rateaudit/mixedmodel.hpp"
#include "rateaudit/report.hpp"
#include "rateaudit/simulate.hpp"

namespace rateaudit::cli {

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << content;
  if (!f) throw std::runtime_error("error writing '" + path + "'");
}

ColumnMap apply_overrides(const std::vector<std::string>& overrides) {
  ColumnMap map;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--column expects logical=header, got '" + o + "'");
    const std::string logical = o.substr(0, eq);
    const std::string header = o.substr(eq + 1);
    if (logical == "response_id") map.response_id = header;
    else if (logical == "student_id") map.student_id = header;
    else if (logical == "question_id") map.question_id = header;
    else if (logical == "construct") map.construct = header;
    else if (logical == "text") map.text = header;
    else if (logical == "rating") map.rating = header;
    else if (logical == "rating_max") map.rating_max = header;
    else throw std::invalid_argument("unknown logical column '" + logical + "'");
  }
  return map;
}

std::vector<ModelId> selected_models(ModelSelection s) {
  switch (s) {
    case ModelSelection::M1: return {ModelId::M1};
    case ModelSelection::M2: return {ModelId::M2};
    case ModelSelection::M3: return {ModelId::M3};
    case ModelSelection::All: return {ModelId::M1, ModelId::M2, ModelId::M3};
  }
  return {};
}

FitOptions fit_options(const RunConfig& config) {
  FitOptions o;
  o.simplex.max_iterations = config.max_iterations;
  return o;
}

ModelId parse_model(const std::string& s, bool allow_ols) {
  if (s == "1") return ModelId::M1;
  if (s == "2") return ModelId::M2;
  if (s == "3") return ModelId::M3;
  if (allow_ols && (s == "ols" || s == "0")) return ModelId::OLS;
  throw std::invalid_argument("unknown model '" + s + "'");
}

}  // namespace

int cmd_featurize(const RunConfig& config, const std::vector<std::string>& column_overrides,
                  std::ostream& out) {
  const Corpus corpus = load_corpus(config.input, apply_overrides(column_overrides));
  out << format_summary(corpus_summary(corpus));
  FeatureOptions options;
  options.trigram_k = config.trigram_k;
  options.threads = config.threads;
  const auto rows = build_feature_table(corpus, options);
  const std::string csv = feature_table_csv(rows);
  if (config.out_csv.empty()) {
    out << csv;
  } else {
    write_file(config.out_csv, csv);
    out << "wrote " << rows.size() << " feature rows to " << config.out_csv << "\n";
  }
  return kSuccess;
}

int cmd_fit(const RunConfig& config, std::ostream& out) {
  const auto rows = read_feature_table(config.input);
  const auto ids = selected_models(config.models);

  std::vector<std::future<ModelFit>> jobs;
  for (ModelId id : ids) {
    jobs.push_back(std::async(std::launch::async, [&rows, &config, id] {
      return fit_reml(rows, ModelSpec::from_id(id), fit_options(config));
    }));
  }
  std::vector<FitSummary> fits;
  for (auto& j : jobs) fits.push_back(summarize(j.get()));

  std::vector<TestResult> comparisons;
  auto find = [&](ModelId id) -> const ModelFit* {
    for (const auto& f : fits) {
      if (f.fit.spec.id == id) return &f.fit;
    }
    return nullptr;
  };
  if (const ModelFit* m1 = find(ModelId::M1)) {
    const ModelFit ols = fit_ols(rows, m1->spec.fixed_terms);
    comparisons.push_back(lr_test(ols, *m1));
  }
  if (const ModelFit* m2 = find(ModelId::M2)) {
    if (const ModelFit* m3 = find(ModelId::M3)) comparisons.push_back(lr_test(*m2, *m3));
  }

  const std::string json = fit_report_json(fits, comparisons);
  const std::string md = fit_report_markdown(fits, comparisons);
  if (!config.out_json.empty()) write_file(config.out_json, json);
  if (!config.out_md.empty()) write_file(config.out_md, md);
  if (config.out_md.empty()) out << md;

  bool all_converged = true;
  for (const auto& f : fits) {
    if (!f.fit.converged) {
      all_converged = false;
      out << "warning: " << to_string(f.fit.spec.id) << " did not converge\n";
    }
  }
  return all_converged ? kSuccess : kNotConverged;
}

int cmd_compare(const RunConfig& config, const std::string& null_model, const std::string& alt_model,
                std::ostream& out) {
  const ModelId null_id = parse_model(null_model, true);
  const ModelId alt_id = parse_model(alt_model, false);
  const auto rows = read_feature_table(config.input);
  const ModelSpec alt_spec = ModelSpec::from_id(alt_id);
  const ModelSpec null_spec =
      null_id == ModelId::OLS ? ModelSpec::ols(alt_spec.include_interaction) : ModelSpec::from_id(null_id);
  if (null_spec.fixed_terms != alt_spec.fixed_terms) {
    // Refuse before spending time on fits.
    throw ComparisonRefused(
        "REML deviances are only comparable between models with identical fixed parts; " +
        std::string(to_string(null_id)) + " and " + std::string(to_string(alt_id)) +
        " differ in fixed effects (use the Z test of the interaction term instead)");
  }
  const ModelFit null_fit = fit_reml(rows, null_spec, fit_options(config));
  const ModelFit alt_fit = fit_reml(rows, alt_spec, fit_options(config));
  const TestResult test = lr_test(null_fit, alt_fit);
  const std::string json = test_result_json(test) + "\n";
  if (config.out_json.empty()) {
    out << json;
  } else {
    write_file(config.out_json, json);
  }
  out << "LR " << test.null_model << " vs " << test.alt_model << ": statistic = " << test.statistic
      << ", df = " << test.df << ", p = " << test.p_value;
  if (test.alt_p_value) out << ", boundary-mixture p = " << *test.alt_p_value;
  out << "\n";
  return null_fit.converged && alt_fit.converged ? kSuccess : kNotConverged;
}

int cmd_simulate(const RunConfig& config, const std::string& config_path, std::ostream& out) {
  GeneratorConfig gen = config_path.empty() ? reference_config() : load_generator_config(config_path);
  if (config.seed) gen.seed = *config.seed;
  const SimulatedData data = generate(gen);
  const std::string csv = feature_table_csv(data.rows);
  if (config.out_csv.empty()) {
    out << csv;
  } else {
    write_file(config.out_csv, csv);
    out << "wrote " << data.rows.size() << " rows (" << gen.J << " questions) to " << config.out_csv
        << "\n";
  }
  if (!config.out_json.empty()) write_file(config.out_json, truth_json(data.truth) + "\n");
  return kSuccess;
}

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audit constructed-response ratings with non-content features and mixed models",
               "rateaudit"};
  app.require_subcommand(1);

  RunConfig config;
  std::vector<std::string> columns;
  std::string model = "all";
  std::string null_model, alt_model, config_path;

  auto* featurize = app.add_subcommand("featurize", "Validate a response corpus and export model features");
  featurize->add_option("--input", config.input, "Response corpus CSV")->required()->check(CLI::ExistingFile);
  featurize->add_option("--output,-o", config.out_csv, "Feature table CSV (stdout when omitted)");
  featurize->add_option("--trigram-k", config.trigram_k, "Number of top trigrams per question")
      ->check(CLI::PositiveNumber);
  featurize->add_option("--rules", config.rules_version, "Grammar rule-set version")->check(CLI::IsMember({"v1"}));
  featurize->add_option("--threads", config.threads, "Worker threads")->check(CLI::PositiveNumber);
  featurize->add_option("--column", columns, "Column mapping logical=header (repeatable)");

  auto* fit = app.add_subcommand("fit", "Fit models 1-3 by REML and write coefficient tables");
  fit->add_option("--input", config.input, "Feature table CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--model", model, "1, 2, 3 or all")->check(CLI::IsMember({"1", "2", "3", "all"}));
  fit->add_option("--out-json", config.out_json, "JSON report path");
  fit->add_option("--out-md", config.out_md, "Markdown report path (stdout when omitted)");
  fit->add_option("--max-iterations", config.max_iterations, "Optimizer iteration budget per model")
      ->check(CLI::PositiveNumber);

  auto* compare = app.add_subcommand("compare", "Likelihood-ratio test between nested models");
  compare->add_option("--input", config.input, "Feature table CSV")->required()->check(CLI::ExistingFile);
  compare->add_option("--null", null_model, "ols, 1, 2 or 3")->required();
  compare->add_option("--alt", alt_model, "1, 2 or 3")->required();
  compare->add_option("--out-json", config.out_json, "JSON result path (stdout when omitted)");
  compare->add_option("--max-iterations", config.max_iterations, "Optimizer iteration budget per model")
      ->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic feature table");
  simulate->add_option("--config", config_path, "Generator config JSON (built-in defaults when omitted)")
      ->check(CLI::ExistingFile);
  simulate->add_option("--seed", config.seed, "Override the config seed");
  simulate->add_option("--output,-o", config.out_csv, "Feature table CSV (stdout when omitted)");
  simulate->add_option("--out-json", config.out_json, "Truth JSON path");

  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kFailure;
  }

  try {
    if (model == "1") config.models = ModelSelection::M1;
    else if (model == "2") config.models = ModelSelection::M2;
    else if (model == "3") config.models = ModelSelection::M3;
    else config.models = ModelSelection::All;

    if (featurize->parsed()) return cmd_featurize(config, columns, out);
    if (fit->parsed()) return cmd_fit(config, out);
    if (compare->parsed()) return cmd_compare(config, null_model, alt_model, out);
    if (simulate->parsed()) return cmd_simulate(config, config_path, out);
  } catch (const ValidationError& e) {
    err << "validation failed: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const csv::ParseError& e) {
    err << "validation failed: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const ConfigError& e) {
    err << "validation failed: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const ComparisonRefused& e) {
    err << "comparison refused: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace rateaudit::cli
