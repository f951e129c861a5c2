#include "rateaudit/grammar.hpp"

#include <algorithm>

#include "rateaudit/featurize.hpp"

namespace rateaudit {

namespace {

bool is_clause_end(char c) {
  return c == '.' || c == '!' || c == '?' || c == ',' || c == ';' || c == ':';
}

bool is_sentence_end(char c) { return c == '.' || c == '!' || c == '?'; }

bool has_letter(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
  });
}

// Multi-token rules may not span a token that closes a clause.
bool joinable(const std::vector<std::string>& raw, std::size_t first, std::size_t count) {
  if (first + count > raw.size()) return false;
  for (std::size_t i = first; i + 1 < first + count; ++i) {
    if (is_clause_end(raw[i].back())) return false;
  }
  return true;
}

RuleSet make_v1() {
  RuleSet r;
  r.version = "v1";
  for (const char* adj : {"fast", "much", "many", "big", "small", "late", "early", "high", "low",
                          "slow", "hard", "easy", "long", "short", "far", "steep", "large"}) {
    r.confusion_bigrams.emplace("to", adj);
  }
  for (const char* cmp : {"more", "less", "greater", "bigger", "smaller", "larger", "faster",
                          "slower", "higher", "lower", "rather", "other"}) {
    r.confusion_bigrams.emplace(cmp, "then");
  }
  for (const char* modal : {"could", "would", "should", "must", "might"}) {
    r.confusion_bigrams.emplace(modal, "of");
  }
  r.confusion_bigrams.emplace("your", "welcome");
  r.confusion_bigrams.emplace("its", "self");
  r.confusion_bigrams.emplace("alot", "of");

  r.nonstandard_forms = {"runned", "goed",  "thinked", "bringed", "teached", "catched",
                         "buyed",  "writed", "falled", "taked",   "eated",   "drinked",
                         "swimmed", "knowed", "growed", "throwed", "drawed", "speaked",
                         "breaked", "choosed", "brung", "gived",   "comed",   "maked",
                         "sayed",  "telled", "finded", "getted",  "putted",  "hitted"};

  r.base_form_triggers = {"to",     "will",   "would",  "can",      "could",  "should",
                          "shall",  "must",   "may",    "might",    "did",    "does",
                          "do",     "didn't", "doesn't", "don't",   "won't",  "can't",
                          "couldn't", "shouldn't", "wouldn't"};
  r.past_forms_after_base_trigger = {"ran",   "went",   "came",   "took",    "gave",  "ate",
                                     "wrote", "began",  "drank",  "swam",    "knew",  "grew",
                                     "threw", "drew",   "flew",   "spoke",   "broke", "chose",
                                     "forgot", "brought", "thought", "taught", "caught", "bought"};

  r.perfect_triggers = {"have", "has", "had", "having", "i've", "we've", "they've", "you've"};
  r.past_not_participle = {"went",  "ran",   "came",  "took", "gave",  "ate",   "wrote",
                           "began", "drank", "swam",  "knew", "grew",  "threw", "drew",
                           "flew",  "spoke", "broke", "chose", "forgot"};

  r.redundant_phrases = {
      {"return", "back"},     {"revert", "back"},      {"repeat", "again"},
      {"add", "up", "together"}, {"join", "together"}, {"combine", "together"},
      {"final", "outcome"},   {"end", "result"},       {"past", "history"},
      {"each", "and", "every"}, {"exact", "same"},     {"first", "began"},
      {"still", "remains"},   {"true", "fact"},        {"free", "gift"},
      {"close", "proximity"}, {"basic", "fundamentals"}, {"reason", "is", "because"},
      {"reason", "why", "is", "because"}, {"circle", "around"}, {"plan", "ahead"},
      {"merge", "together"},  {"sum", "total"},
  };
  return r;
}

}  // namespace

std::string_view to_string(GrammarRule rule) {
  switch (rule) {
    case GrammarRule::SentenceCapitalization: return "sentence_capitalization";
    case GrammarRule::ConfusedWord: return "confused_word";
    case GrammarRule::RepeatedWord: return "repeated_word";
    case GrammarRule::VerbForm: return "verb_form";
    case GrammarRule::RedundantPhrase: return "redundant_phrase";
  }
  return "?";
}

const RuleSet& default_rules() {
  static const RuleSet rules = make_v1();
  return rules;
}

std::string fold_case(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string normalize_word(std::string_view token) {
  constexpr std::string_view lead = "\"'([{";
  constexpr std::string_view trail = ".,;:!?\"')]}";
  while (!token.empty() && lead.find(token.front()) != std::string_view::npos) token.remove_prefix(1);
  while (!token.empty() && trail.find(token.back()) != std::string_view::npos) token.remove_suffix(1);
  return fold_case(token);
}

std::vector<GrammarViolation> grammar_violations(std::string_view text, const RuleSet& rules) {
  const std::vector<std::string> raw = tokenize(text);
  std::vector<std::string> norm;
  norm.reserve(raw.size());
  for (const auto& t : raw) norm.push_back(normalize_word(t));

  std::vector<GrammarViolation> out;
  bool sentence_start = true;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::string& tok = raw[i];

    if (sentence_start && tok.front() >= 'a' && tok.front() <= 'z') {
      out.push_back({GrammarRule::SentenceCapitalization, i});
    }
    sentence_start = is_sentence_end(tok.back());

    if (rules.nonstandard_forms.contains(norm[i])) out.push_back({GrammarRule::VerbForm, i});

    if (joinable(raw, i, 2)) {
      const std::string& a = norm[i];
      const std::string& b = norm[i + 1];
      if (!a.empty() && a == b && has_letter(a)) out.push_back({GrammarRule::RepeatedWord, i});
      if (rules.confusion_bigrams.contains({a, b})) out.push_back({GrammarRule::ConfusedWord, i});
      if ((rules.base_form_triggers.contains(a) && rules.past_forms_after_base_trigger.contains(b)) ||
          (rules.perfect_triggers.contains(a) && rules.past_not_participle.contains(b))) {
        out.push_back({GrammarRule::VerbForm, i});
      }
    }

    for (const auto& phrase : rules.redundant_phrases) {
      if (!joinable(raw, i, phrase.size())) continue;
      if (std::equal(phrase.begin(), phrase.end(), norm.begin() + static_cast<std::ptrdiff_t>(i))) {
        out.push_back({GrammarRule::RedundantPhrase, i});
      }
    }
  }
  return out;
}

int grammar_score(std::string_view text, const RuleSet& rules) {
  return static_cast<int>(grammar_violations(text, rules).size());
}

}  // namespace rateaudit
