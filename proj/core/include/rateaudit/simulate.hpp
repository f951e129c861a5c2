#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rateaudit/featurize.hpp"

namespace rateaudit {

/// Portable random stream: std::mt19937_64 (whose output sequence is fixed by
/// the C++ standard) with hand-written transforms, so draws reproduce
/// bit-for-bit on every platform. Standard-library distributions are
/// implementation-defined and are not used.
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Standard normal (Marsaglia polar method).
  double normal();
  /// Poisson by Knuth's product method; mean must be <= 50.
  std::int64_t poisson(double mean);
  /// Failures before the first success, by inversion.
  std::int64_t geometric(double success_prob);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct CovariateLaw {
  double num_words_mean = 30.0;  // 1 + negative binomial(r, p) with this mean
  int num_words_dispersion = 5;  // r
  double grammar_mean = 1.0;     // Poisson mean
  double word_freq_p = 0.4;      // Bernoulli probability
};

struct GeneratorConfig {
  std::size_t J = 31;
  /// Responses per question: one entry (constant) or J entries.
  std::vector<std::size_t> n_per_question = {179};
  /// Generating coefficients in Model-3 design order: intercept, num_words,
  /// grammar_score, word_freq_d, avg_num_words, construct_MMR, construct_IMR,
  /// construct_MAP, grammar_score:word_freq_d.
  std::array<double, 9> beta{};
  /// Covariance of (random intercept, random num_words slope).
  Eigen::Matrix2d psi = Eigen::Matrix2d::Zero();
  double sigma = 1.0;
  CovariateLaw covariates;
  std::uint64_t seed = 1;
  /// Round ratings to integers clamped to [0, 4]. Off by default: rounding
  /// biases parameter recovery.
  bool round_ratings = false;

  std::size_t responses_in(std::size_t question) const {
    return n_per_question.size() == 1 ? n_per_question[0] : n_per_question.at(question);
  }
};

class ConfigError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Throws ConfigError naming the offending field.
void validate(const GeneratorConfig& config);

struct SimulationTruth {
  GeneratorConfig config;
  std::vector<std::string> question_ids;
  Eigen::MatrixXd zeta;  // J x 2 realized (intercept, slope) deviations
};

struct SimulatedData {
  std::vector<FeatureRow> rows;
  SimulationTruth truth;
};

/// Draws a corpus from the random-coefficients model. Models 1 and 2 are the
/// special cases psi(1,1) = psi(1,0) = 0 (and beta[8] = 0 for Model 1).
SimulatedData generate(const GeneratorConfig& config);

/// Default generating values: reported-scale fixed effects and random-slope
/// parameters, 31 questions of 179 responses, question-level effects zero.
/// Covariate laws are a guess.
GeneratorConfig reference_config();

GeneratorConfig parse_generator_config(std::string_view json_text);
GeneratorConfig load_generator_config(const std::string& path);
std::string generator_config_json(const GeneratorConfig& config);
std::string truth_json(const SimulationTruth& truth);

}  // namespace rateaudit
