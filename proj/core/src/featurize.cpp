#include "rateaudit/featurize.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "rateaudit/csv.hpp"

namespace rateaudit {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

std::vector<std::string> folded_tokens(std::string_view text) {
  auto tokens = tokenize(text);
  for (auto& t : tokens) t = fold_case(t);
  return tokens;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = is_space(c);
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

std::vector<RankedTrigram> rank_trigrams(std::span<const std::string> texts, std::size_t k) {
  std::map<Trigram, std::size_t> counts;
  for (const auto& text : texts) {
    const auto tokens = folded_tokens(text);
    for (std::size_t i = 0; i + 2 < tokens.size(); ++i) {
      ++counts[Trigram{tokens[i], tokens[i + 1], tokens[i + 2]}];
    }
  }
  std::vector<RankedTrigram> ranked;
  ranked.reserve(counts.size());
  for (auto& [tri, n] : counts) ranked.push_back({tri, n});
  // std::map iteration is already lexicographic, so a stable sort on count
  // yields count desc, then lexicographic asc.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.count > b.count; });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

TrigramSet top_trigrams(const Corpus& corpus, std::string_view question_id, std::size_t k) {
  if (k == 0) throw std::invalid_argument("trigram k must be at least 1");
  const auto positions = corpus.positions(question_id);
  const auto& records = corpus.records();
  TrigramSet set;
  set.question_id = std::string(question_id);
  set.source_level = records[positions.front()].rating_max;

  std::vector<std::string> top_texts;
  for (std::size_t pos : positions) {
    if (records[pos].rating == records[pos].rating_max) top_texts.push_back(records[pos].text);
  }
  set.trigrams = rank_trigrams(top_texts, k);
  return set;
}

int word_freq_flag(std::string_view text, const TrigramSet& trigrams) {
  if (trigrams.empty()) return 0;
  const auto tokens = folded_tokens(text);
  for (std::size_t i = 0; i + 2 < tokens.size(); ++i) {
    for (const auto& t : trigrams.trigrams) {
      if (t.tokens[0] == tokens[i] && t.tokens[1] == tokens[i + 1] && t.tokens[2] == tokens[i + 2]) {
        return 1;
      }
    }
  }
  return 0;
}

double avg_num_words(const Corpus& corpus, std::string_view question_id) {
  const auto positions = corpus.positions(question_id);
  std::size_t total = 0;
  for (std::size_t pos : positions) total += count_tokens(corpus.records()[pos].text);
  return static_cast<double>(total) / static_cast<double>(positions.size());
}

std::vector<TrigramSet> mine_all_trigrams(const Corpus& corpus, std::size_t k) {
  std::vector<TrigramSet> sets;
  for (const auto& qid : corpus.question_ids()) sets.push_back(top_trigrams(corpus, qid, k));
  return sets;
}

std::vector<FeatureRow> build_feature_table(const Corpus& corpus, const FeatureOptions& options) {
  if (options.trigram_k == 0) throw std::invalid_argument("trigram k must be at least 1");
  const RuleSet& rules = options.rules ? *options.rules : default_rules();
  const auto& records = corpus.records();
  const auto& questions = corpus.question_ids();
  std::vector<FeatureRow> rows(records.size());

  auto featurize_question = [&](std::size_t q) {
    const auto& qid = questions[q];
    const TrigramSet trigrams = top_trigrams(corpus, qid, options.trigram_k);
    const auto positions = corpus.positions(qid);
    std::size_t total_tokens = 0;
    for (std::size_t pos : positions) {
      const auto& rec = records[pos];
      FeatureRow& row = rows[pos];
      row.response_id = rec.response_id;
      row.question_id = rec.question_id;
      row.rating = static_cast<double>(rec.rating);
      row.num_words = static_cast<std::int64_t>(count_tokens(rec.text));
      row.grammar_score = grammar_score(rec.text, rules);
      row.word_freq_d = word_freq_flag(rec.text, trigrams);
      row.construct_MMR = rec.construct == Construct::MMR;
      row.construct_IMR = rec.construct == Construct::IMR;
      row.construct_MAP = rec.construct == Construct::MAP;
      total_tokens += static_cast<std::size_t>(row.num_words);
    }
    const double mean = static_cast<double>(total_tokens) / static_cast<double>(positions.size());
    for (std::size_t pos : positions) rows[pos].avg_num_words = mean;
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads,
                                                           static_cast<unsigned>(questions.size())));
  if (threads <= 1) {
    for (std::size_t q = 0; q < questions.size(); ++q) featurize_question(q);
    return rows;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t q = next++; q < questions.size(); q = next++) featurize_question(q);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("cannot format double");
  return std::string(buf, ptr);
}

void write_feature_table(std::ostream& out, std::span<const FeatureRow> rows) {
  csv::write_row(out, std::vector<std::string>(kFeatureColumns.begin(), kFeatureColumns.end()));
  for (const auto& r : rows) {
    csv::write_row(out, {r.response_id, r.question_id, format_double(r.rating),
                         std::to_string(r.num_words), std::to_string(r.grammar_score),
                         std::to_string(r.word_freq_d), format_double(r.avg_num_words),
                         std::to_string(r.construct_MMR), std::to_string(r.construct_IMR),
                         std::to_string(r.construct_MAP)});
  }
}

std::string feature_table_csv(std::span<const FeatureRow> rows) {
  std::ostringstream out;
  write_feature_table(out, rows);
  return out.str();
}

std::vector<FeatureRow> parse_feature_table(std::string_view csv_text) {
  const csv::Table table = csv::parse_table(csv_text);
  std::array<std::size_t, kFeatureColumns.size()> col{};
  std::string missing;
  for (std::size_t k = 0; k < kFeatureColumns.size(); ++k) {
    col[k] = table.column(kFeatureColumns[k]);
    if (col[k] == csv::Table::npos) missing += " " + std::string(kFeatureColumns[k]);
  }
  if (!missing.empty()) throw ValidationError({{0, "missing column(s):" + missing}});

  std::vector<FeatureRow> rows;
  std::vector<ValidationIssue> issues;
  rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r].fields;
    FeatureRow row;
    row.response_id = f[col[0]];
    row.question_id = f[col[1]];
    std::vector<std::string> bad;
    auto real = [&](std::size_t k, double& dst) {
      if (!parse_number(f[col[k]], dst) || !std::isfinite(dst)) bad.emplace_back(kFeatureColumns[k]);
    };
    auto integer = [&](std::size_t k, auto& dst, bool binary) {
      if (!parse_number(f[col[k]], dst) || dst < 0 || (binary && dst > 1)) {
        bad.emplace_back(kFeatureColumns[k]);
      }
    };
    real(2, row.rating);
    integer(3, row.num_words, false);
    integer(4, row.grammar_score, false);
    integer(5, row.word_freq_d, true);
    real(6, row.avg_num_words);
    integer(7, row.construct_MMR, true);
    integer(8, row.construct_IMR, true);
    integer(9, row.construct_MAP, true);
    if (bad.empty() && row.construct_MMR + row.construct_IMR + row.construct_MAP > 1) {
      bad.emplace_back("construct dummies (more than one set)");
    }
    if (!bad.empty()) {
      std::string msg = "invalid value in";
      for (const auto& b : bad) msg += " " + b;
      issues.push_back({r + 1, msg});
    }
    rows.push_back(std::move(row));
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return rows;
}

std::vector<FeatureRow> read_feature_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature table '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_feature_table(buf.str());
}

}  // namespace rateaudit
