#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rateaudit/corpus.hpp"
#include "rateaudit/grammar.hpp"

namespace rateaudit {

/// Maximal runs of non-whitespace bytes, in order. Whitespace is the ASCII set
/// " \t\n\v\f\r"; chunks are not otherwise normalized.
std::vector<std::string> tokenize(std::string_view text);

std::size_t count_tokens(std::string_view text);

using Trigram = std::array<std::string, 3>;

struct RankedTrigram {
  Trigram tokens;
  std::size_t count = 0;
  bool operator==(const RankedTrigram&) const = default;
};

/// Most frequent case-folded trigrams of a question's top-rated responses.
struct TrigramSet {
  std::string question_id;
  int source_level = 0;
  std::vector<RankedTrigram> trigrams;  // frequency desc, then lexicographic asc

  bool empty() const noexcept { return trigrams.empty(); }
};

/// Ranks every consecutive case-folded trigram in `texts` and keeps the first k.
std::vector<RankedTrigram> rank_trigrams(std::span<const std::string> texts, std::size_t k);

/// Mines responses of `question_id` whose rating equals the question's rating_max.
/// Throws std::out_of_range for an unknown question, std::invalid_argument for k == 0.
TrigramSet top_trigrams(const Corpus& corpus, std::string_view question_id, std::size_t k = 5);

/// 1 when any trigram of the set occurs in the case-folded tokens of `text`.
int word_freq_flag(std::string_view text, const TrigramSet& trigrams);

double avg_num_words(const Corpus& corpus, std::string_view question_id);

struct FeatureRow {
  std::string response_id;
  std::string question_id;
  double rating = 0.0;
  std::int64_t num_words = 0;
  std::int64_t grammar_score = 0;
  int word_freq_d = 0;
  double avg_num_words = 0.0;
  int construct_MMR = 0;
  int construct_IMR = 0;
  int construct_MAP = 0;

  bool operator==(const FeatureRow&) const = default;
};

struct FeatureOptions {
  std::size_t trigram_k = 5;
  const RuleSet* rules = nullptr;  // default_rules() when null
  unsigned threads = 1;
};

/// One row per record, in corpus order. Output is identical for any thread count.
std::vector<FeatureRow> build_feature_table(const Corpus& corpus, const FeatureOptions& options = {});

/// Trigram sets for every question, in question order (as used by build_feature_table).
std::vector<TrigramSet> mine_all_trigrams(const Corpus& corpus, std::size_t k = 5);

/// Stable export column order.
inline constexpr std::array<std::string_view, 10> kFeatureColumns = {
    "response_id",   "question_id",   "rating",        "num_words",     "grammar_score",
    "word_freq_d",   "avg_num_words", "construct_MMR", "construct_IMR", "construct_MAP"};

void write_feature_table(std::ostream& out, std::span<const FeatureRow> rows);
std::string feature_table_csv(std::span<const FeatureRow> rows);

/// Throws ValidationError naming rows with malformed or non-finite fields.
std::vector<FeatureRow> parse_feature_table(std::string_view csv_text);
std::vector<FeatureRow> read_feature_table(const std::string& path);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace rateaudit
