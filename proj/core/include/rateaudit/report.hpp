#pragma once

#include <span>
#include <string>

#include "rateaudit/inference.hpp"
#include "rateaudit/mixedmodel.hpp"

namespace rateaudit {

/// Fit plus the per-term Z tests and the omnibus Wald test computed from it.
struct FitSummary {
  ModelFit fit;
  std::vector<TestResult> z_tests;  // one per fixed term, in term order
  TestResult wald;
};

FitSummary summarize(ModelFit fit);

std::string model_label(ModelId id);

/// Full-precision JSON (NaN written as null). Key order is fixed.
std::string model_fit_json(const FitSummary& summary);
std::string test_result_json(const TestResult& test);
std::string fit_report_json(std::span<const FitSummary> fits, std::span<const TestResult> comparisons);

/// Markdown with a fixed-effects block and a random-effects block per model,
/// numbers at 3 decimals.
std::string fit_report_markdown(std::span<const FitSummary> fits,
                                std::span<const TestResult> comparisons);

}  // namespace rateaudit
