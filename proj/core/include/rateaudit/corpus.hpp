#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rateaudit {

/// Construct measured by a question. PRA is the reference category for dummy coding.
enum class Construct { PRA = 0, MMR = 1, MAP = 2, IMR = 3 };

inline constexpr std::array<Construct, 4> kAllConstructs = {Construct::PRA, Construct::MMR,
                                                            Construct::MAP, Construct::IMR};

std::string_view to_string(Construct c);
std::optional<Construct> parse_construct(std::string_view label);

struct ResponseRecord {
  std::string response_id;
  std::string student_id;
  std::string question_id;
  Construct construct = Construct::PRA;
  std::string text;
  int rating = 0;
  int rating_max = 4;

  bool operator==(const ResponseRecord&) const = default;
};

struct ValidationIssue {
  std::size_t row = 0;  // 1-based data row, header excluded
  std::string message;
};

/// Raised when one or more records violate a corpus invariant. Every
/// offending row is listed; valid rows are never reported.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<ValidationIssue> issues);
  const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<ValidationIssue> issues_;
};

/// Source-header names for the seven logical columns.
struct ColumnMap {
  std::string response_id = "response_id";
  std::string student_id = "student_id";
  std::string question_id = "question_id";
  std::string construct = "construct";
  std::string text = "text";
  std::string rating = "rating";
  std::string rating_max = "rating_max";
};

/// Immutable, validated collection of responses grouped by question.
class Corpus {
 public:
  /// Validates every record; throws ValidationError listing all bad rows.
  static Corpus from_records(std::vector<ResponseRecord> records);

  const std::vector<ResponseRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }

  /// Question ids in order of first appearance.
  const std::vector<std::string>& question_ids() const noexcept { return question_order_; }
  bool has_question(std::string_view question_id) const;
  /// Record positions for a question, in file order. Throws std::out_of_range.
  std::span<const std::size_t> positions(std::string_view question_id) const;

 private:
  Corpus() = default;

  std::vector<ResponseRecord> records_;
  std::vector<std::string> question_order_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> question_index_;
};

struct CorpusSummary {
  std::size_t n_responses = 0;
  std::size_t n_students = 0;
  std::size_t n_questions = 0;
  std::array<std::size_t, 4> questions_per_construct{};  // indexed by Construct
  std::vector<std::pair<std::string, std::size_t>> responses_per_question;
  double mean_responses_per_question = 0.0;
};

CorpusSummary corpus_summary(const Corpus& corpus);
std::string format_summary(const CorpusSummary& summary);

Corpus parse_corpus(std::string_view csv_text, const ColumnMap& columns = {});
Corpus load_corpus(const std::string& path, const ColumnMap& columns = {});

/// Writes the canonical seven-column CSV (logical column names as header).
void write_corpus(std::ostream& out, const Corpus& corpus);

}  // namespace rateaudit
