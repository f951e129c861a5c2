#include "rateaudit/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "rateaudit/csv.hpp"

namespace rateaudit {

namespace {

std::string join_issues(const std::vector<ValidationIssue>& issues) {
  std::ostringstream out;
  out << issues.size() << " invalid row(s)";
  for (const auto& issue : issues) out << "\n  row " << issue.row << ": " << issue.message;
  return out.str();
}

std::optional<int> parse_int(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

}  // namespace

std::string_view to_string(Construct c) {
  switch (c) {
    case Construct::PRA: return "PRA";
    case Construct::MMR: return "MMR";
    case Construct::MAP: return "MAP";
    case Construct::IMR: return "IMR";
  }
  return "?";
}

std::optional<Construct> parse_construct(std::string_view label) {
  for (Construct c : kAllConstructs) {
    if (to_string(c) == label) return c;
  }
  return std::nullopt;
}

ValidationError::ValidationError(std::vector<ValidationIssue> issues)
    : std::runtime_error(join_issues(issues)), issues_(std::move(issues)) {}

Corpus Corpus::from_records(std::vector<ResponseRecord> records) {
  std::vector<ValidationIssue> issues;
  std::set<std::string, std::less<>> seen_ids;
  // First row of each question with a usable scale fixes its construct and scale.
  std::map<std::string, std::size_t, std::less<>> question_anchor;

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::size_t row = i + 1;
    std::vector<std::string> problems;
    if (r.rating_max != 3 && r.rating_max != 4) {
      problems.push_back("rating_max " + std::to_string(r.rating_max) + " is not 3 or 4");
    } else if (r.rating < 0 || r.rating > r.rating_max) {
      problems.push_back("rating " + std::to_string(r.rating) + " outside [0, " +
                         std::to_string(r.rating_max) + "]");
    }
    if (!seen_ids.insert(r.response_id).second) {
      problems.push_back("duplicate response_id '" + r.response_id + "'");
    }
    if (r.rating_max == 3 || r.rating_max == 4) {
      auto [it, inserted] = question_anchor.emplace(r.question_id, i);
      if (!inserted) {
        const auto& anchor = records[it->second];
        if (anchor.construct != r.construct || anchor.rating_max != r.rating_max) {
          problems.push_back("question '" + r.question_id +
                             "' has inconsistent construct or rating_max (first seen at row " +
                             std::to_string(it->second + 1) + ")");
        }
      }
    }
    for (auto& p : problems) issues.push_back({row, std::move(p)});
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));

  Corpus corpus;
  corpus.records_ = std::move(records);
  for (std::size_t i = 0; i < corpus.records_.size(); ++i) {
    const auto& qid = corpus.records_[i].question_id;
    auto [it, inserted] = corpus.question_index_.try_emplace(qid);
    if (inserted) corpus.question_order_.push_back(qid);
    it->second.push_back(i);
  }
  return corpus;
}

bool Corpus::has_question(std::string_view question_id) const {
  return question_index_.find(question_id) != question_index_.end();
}

std::span<const std::size_t> Corpus::positions(std::string_view question_id) const {
  auto it = question_index_.find(question_id);
  if (it == question_index_.end()) {
    throw std::out_of_range("unknown question_id '" + std::string(question_id) + "'");
  }
  return it->second;
}

CorpusSummary corpus_summary(const Corpus& corpus) {
  CorpusSummary s;
  s.n_responses = corpus.size();
  std::set<std::string_view> students;
  for (const auto& r : corpus.records()) students.insert(r.student_id);
  s.n_students = students.size();
  s.n_questions = corpus.question_ids().size();
  for (const auto& qid : corpus.question_ids()) {
    auto pos = corpus.positions(qid);
    s.responses_per_question.emplace_back(qid, pos.size());
    ++s.questions_per_construct[static_cast<std::size_t>(corpus.records()[pos.front()].construct)];
  }
  if (s.n_questions > 0) {
    s.mean_responses_per_question =
        static_cast<double>(s.n_responses) / static_cast<double>(s.n_questions);
  }
  return s;
}

std::string format_summary(const CorpusSummary& s) {
  std::ostringstream out;
  out << "responses: " << s.n_responses << "\n"
      << "students: " << s.n_students << "\n"
      << "questions: " << s.n_questions << "\n"
      << "mean responses per question: " << s.mean_responses_per_question << "\n";
  for (Construct c : kAllConstructs) {
    out << "questions in " << to_string(c) << ": "
        << s.questions_per_construct[static_cast<std::size_t>(c)] << "\n";
  }
  return out.str();
}

Corpus parse_corpus(std::string_view csv_text, const ColumnMap& columns) {
  const csv::Table table = csv::parse_table(csv_text);

  const std::array<std::pair<const char*, const std::string*>, 7> wanted = {{
      {"response_id", &columns.response_id},
      {"student_id", &columns.student_id},
      {"question_id", &columns.question_id},
      {"construct", &columns.construct},
      {"text", &columns.text},
      {"rating", &columns.rating},
      {"rating_max", &columns.rating_max},
  }};
  std::array<std::size_t, 7> col{};
  std::vector<std::string> missing;
  for (std::size_t k = 0; k < wanted.size(); ++k) {
    col[k] = table.column(*wanted[k].second);
    if (col[k] == csv::Table::npos) {
      missing.push_back(std::string(wanted[k].first) + " (header '" + *wanted[k].second + "')");
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing column(s):";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError({{0, msg}});
  }

  std::vector<ResponseRecord> records;
  std::vector<ValidationIssue> issues;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r].fields;
    ResponseRecord rec;
    rec.response_id = f[col[0]];
    rec.student_id = f[col[1]];
    rec.question_id = f[col[2]];
    rec.text = f[col[4]];
    bool ok = true;
    if (auto c = parse_construct(f[col[3]])) {
      rec.construct = *c;
    } else {
      issues.push_back({r + 1, "unknown construct label '" + f[col[3]] + "'"});
      ok = false;
    }
    auto rating = parse_int(f[col[5]]);
    auto rating_max = parse_int(f[col[6]]);
    if (!rating) {
      issues.push_back({r + 1, "rating '" + f[col[5]] + "' is not an integer"});
      ok = false;
    }
    if (!rating_max) {
      issues.push_back({r + 1, "rating_max '" + f[col[6]] + "' is not an integer"});
      ok = false;
    }
    if (!ok) {
      // Keep the row slot so later row numbers stay aligned; mark it
      // so record-level checks don't double report.
      rec.rating = 0;
      rec.rating_max = 4;
      rec.response_id = "\x01invalid-row-" + std::to_string(r + 1);
      rec.question_id = "\x01invalid-row-" + std::to_string(r + 1);
    } else {
      rec.rating = *rating;
      rec.rating_max = *rating_max;
    }
    records.push_back(std::move(rec));
  }

  std::optional<Corpus> corpus;
  try {
    corpus = Corpus::from_records(std::move(records));
  } catch (const ValidationError& e) {
    issues.insert(issues.end(), e.issues().begin(), e.issues().end());
  }
  if (!issues.empty()) {
    std::stable_sort(issues.begin(), issues.end(),
                     [](const auto& a, const auto& b) { return a.row < b.row; });
    throw ValidationError(std::move(issues));
  }
  return std::move(*corpus);
}

Corpus load_corpus(const std::string& path, const ColumnMap& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str(), columns);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  csv::write_row(out, {"response_id", "student_id", "question_id", "construct", "text", "rating",
                       "rating_max"});
  for (const auto& r : corpus.records()) {
    csv::write_row(out, {r.response_id, r.student_id, r.question_id, std::string(to_string(r.construct)),
                         r.text, std::to_string(r.rating), std::to_string(r.rating_max)});
  }
}

}  // namespace rateaudit
