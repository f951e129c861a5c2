#pragma once

// Deterministic rule-based grammar/spelling checker. The rule table is fixed
// and versioned so scores reproduce exactly across runs and platforms.

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rateaudit {

enum class GrammarRule {
  SentenceCapitalization,  // sentence-initial word starts lowercase
  ConfusedWord,            // "to fast", "more then", "could of"
  RepeatedWord,            // "the the"
  VerbForm,                // "runned", "will ran", "had went"
  RedundantPhrase,         // "return back", "end result"
};

std::string_view to_string(GrammarRule rule);

struct RuleSet {
  std::string version;
  // Bigrams (normalized) that indicate a confused word pair.
  std::set<std::pair<std::string, std::string>> confusion_bigrams;
  // Non-existent regularized forms flagged wherever they appear.
  std::set<std::string, std::less<>> nonstandard_forms;
  // Words that demand a base verb form next ("to", modals, do-support).
  std::set<std::string, std::less<>> base_form_triggers;
  std::set<std::string, std::less<>> past_forms_after_base_trigger;
  // Perfect auxiliaries followed by a simple past that differs from the participle.
  std::set<std::string, std::less<>> perfect_triggers;
  std::set<std::string, std::less<>> past_not_participle;
  std::vector<std::vector<std::string>> redundant_phrases;
};

/// The shipped rule table ("v1").
const RuleSet& default_rules();

struct GrammarViolation {
  GrammarRule rule;
  std::size_t token;  // index of the first token involved
};

/// Lowercase ASCII letters; other bytes (including UTF-8 sequences) pass through.
std::string fold_case(std::string_view s);

/// Case-folded word with surrounding punctuation stripped; used for lexicon lookups.
std::string normalize_word(std::string_view token);

std::vector<GrammarViolation> grammar_violations(std::string_view text,
                                                 const RuleSet& rules = default_rules());

/// Total number of rule violations in `text`.
int grammar_score(std::string_view text, const RuleSet& rules = default_rules());

}  // namespace rateaudit
