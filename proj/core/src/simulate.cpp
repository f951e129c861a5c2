#include "rateaudit/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rateaudit {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 9> kBetaNames = {
    "intercept",     "num_words",     "grammar_score", "word_freq_d",
    "avg_num_words", "construct_MMR", "construct_IMR", "construct_MAP",
    "grammar_score:word_freq_d"};

std::string pad(std::size_t value, std::size_t width) {
  std::string s = std::to_string(value);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

std::size_t digits(std::size_t n) { return std::to_string(n).size(); }

template <typename T>
T get_field(const json& obj, std::string_view key, std::string_view path) {
  try {
    return obj.at(std::string(key)).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("invalid config field '" + std::string(path) + "'");
  }
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    std::string_view prefix) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config field '" + std::string(prefix) + key + "'");
    }
  }
}

}  // namespace

double PortableRng::uniform() {
  for (;;) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

double PortableRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

std::int64_t PortableRng::poisson(double mean) {
  if (!(mean >= 0.0) || mean > 50.0) throw std::domain_error("poisson mean must be in [0, 50]");
  const double limit = std::exp(-mean);
  std::int64_t k = 0;
  double prod = uniform();
  while (prod > limit) {
    ++k;
    prod *= uniform();
  }
  return k;
}

std::int64_t PortableRng::geometric(double success_prob) {
  if (!(success_prob > 0.0) || success_prob > 1.0) {
    throw std::domain_error("geometric probability must be in (0, 1]");
  }
  if (success_prob == 1.0) return 0;
  return static_cast<std::int64_t>(std::floor(std::log(uniform()) / std::log1p(-success_prob)));
}

void validate(const GeneratorConfig& c) {
  if (c.J < 2) throw ConfigError("invalid config field 'J': need at least 2 questions");
  if (c.n_per_question.size() != 1 && c.n_per_question.size() != c.J) {
    throw ConfigError("invalid config field 'n_j': give one count or exactly J counts");
  }
  for (std::size_t n : c.n_per_question) {
    if (n < 1) throw ConfigError("invalid config field 'n_j': every count must be >= 1");
  }
  for (std::size_t k = 0; k < c.beta.size(); ++k) {
    if (!std::isfinite(c.beta[k])) {
      throw ConfigError("invalid config field 'beta." + std::string(kBetaNames[k]) + "'");
    }
  }
  if (!c.psi.allFinite() || c.psi(0, 1) != c.psi(1, 0)) {
    throw ConfigError("invalid config field 'psi': must be a finite symmetric matrix");
  }
  if (c.psi(0, 0) < 0.0 || c.psi(1, 1) < 0.0 ||
      c.psi(1, 0) * c.psi(1, 0) > c.psi(0, 0) * c.psi(1, 1) * (1.0 + 1e-12)) {
    throw ConfigError("invalid config field 'psi': covariance is not positive semidefinite");
  }
  if (!(c.sigma >= 0.0) || !std::isfinite(c.sigma)) {
    throw ConfigError("invalid config field 'sigma': must be finite and >= 0");
  }
  const auto& law = c.covariates;
  if (!(law.num_words_mean > 1.0)) {
    throw ConfigError("invalid config field 'covariates.num_words_mean': must exceed 1");
  }
  if (law.num_words_dispersion < 1) {
    throw ConfigError("invalid config field 'covariates.num_words_dispersion': must be >= 1");
  }
  if (!(law.grammar_mean >= 0.0) || law.grammar_mean > 50.0) {
    throw ConfigError("invalid config field 'covariates.grammar_mean': must be in [0, 50]");
  }
  if (!(law.word_freq_p >= 0.0) || law.word_freq_p > 1.0) {
    throw ConfigError("invalid config field 'covariates.word_freq_p': must be in [0, 1]");
  }
}

SimulatedData generate(const GeneratorConfig& config) {
  validate(config);
  PortableRng rng(config.seed);
  const auto& law = config.covariates;
  const auto& b = config.beta;
  const double r = static_cast<double>(law.num_words_dispersion);
  const double nb_success = r / (r + law.num_words_mean - 1.0);

  // Factor psi = L L'; tolerate a singular psi.
  const double l11 = std::sqrt(config.psi(0, 0));
  const double l21 = l11 > 0.0 ? config.psi(1, 0) / l11 : 0.0;
  const double l22 = std::sqrt(std::max(0.0, config.psi(1, 1) - l21 * l21));

  SimulatedData out;
  out.truth.config = config;
  out.truth.zeta.resize(static_cast<Eigen::Index>(config.J), 2);
  const std::size_t width = std::max<std::size_t>(3, digits(config.J));

  for (std::size_t j = 0; j < config.J; ++j) {
    const std::string qid = "q" + pad(j + 1, width);
    out.truth.question_ids.push_back(qid);
    // Both normals are drawn for every question so streams line up across
    // intercept-only and random-slope configurations.
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    const double zeta1 = l11 * z1;
    const double zeta2 = l21 * z1 + l22 * z2;
    out.truth.zeta(static_cast<Eigen::Index>(j), 0) = zeta1;
    out.truth.zeta(static_cast<Eigen::Index>(j), 1) = zeta2;

    const Construct construct = kAllConstructs[j % kAllConstructs.size()];
    const std::size_t n = config.responses_in(j);
    const std::size_t first = out.rows.size();
    std::int64_t total_words = 0;
    const std::size_t rwidth = std::max<std::size_t>(4, digits(n));
    for (std::size_t i = 0; i < n; ++i) {
      FeatureRow row;
      row.response_id = qid + "-r" + pad(i + 1, rwidth);
      row.question_id = qid;
      std::int64_t words = 1;
      for (int k = 0; k < law.num_words_dispersion; ++k) words += rng.geometric(nb_success);
      row.num_words = words;
      row.grammar_score = rng.poisson(law.grammar_mean);
      row.word_freq_d = rng.bernoulli(law.word_freq_p) ? 1 : 0;
      row.construct_MMR = construct == Construct::MMR;
      row.construct_IMR = construct == Construct::IMR;
      row.construct_MAP = construct == Construct::MAP;
      total_words += words;
      out.rows.push_back(std::move(row));
    }
    const double avg = static_cast<double>(total_words) / static_cast<double>(n);
    for (std::size_t i = first; i < out.rows.size(); ++i) {
      FeatureRow& row = out.rows[i];
      row.avg_num_words = avg;
      const double nw = static_cast<double>(row.num_words);
      const double gs = static_cast<double>(row.grammar_score);
      const double wf = static_cast<double>(row.word_freq_d);
      double rating = b[0] + (b[1] + zeta2) * nw + b[2] * gs + b[3] * wf + b[4] * avg +
                      b[5] * row.construct_MMR + b[6] * row.construct_IMR +
                      b[7] * row.construct_MAP + b[8] * gs * wf + zeta1 +
                      config.sigma * rng.normal();
      if (config.round_ratings) rating = std::clamp(std::round(rating), 0.0, 4.0);
      row.rating = rating;
    }
  }
  return out;
}

GeneratorConfig reference_config() {
  GeneratorConfig c;
  c.J = 31;
  c.n_per_question = {179};
  c.beta = {1.448, 0.010, -0.084, 0.706, 0.0, 0.0, 0.0, 0.0, -0.119};
  const double sd_intercept = 0.552;
  const double sd_slope = 0.012;
  const double corr = -0.761;
  c.psi << sd_intercept * sd_intercept, corr * sd_intercept * sd_slope,
      corr * sd_intercept * sd_slope, sd_slope * sd_slope;
  c.sigma = 0.956;
  c.seed = 1;
  return c;
}

GeneratorConfig parse_generator_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(doc, {"J", "n_j", "beta", "psi", "sigma", "covariates", "seed", "round_ratings"}, "");

  GeneratorConfig c;
  c.beta.fill(0.0);
  if (doc.contains("J")) c.J = get_field<std::size_t>(doc, "J", "J");
  if (doc.contains("n_j")) {
    const auto& n = doc["n_j"];
    if (n.is_array()) {
      c.n_per_question = get_field<std::vector<std::size_t>>(doc, "n_j", "n_j");
    } else {
      c.n_per_question = {get_field<std::size_t>(doc, "n_j", "n_j")};
    }
  }
  if (doc.contains("beta")) {
    const auto& beta = doc["beta"];
    if (!beta.is_object()) throw ConfigError("invalid config field 'beta'");
    for (const auto& [key, value] : beta.items()) {
      auto it = std::find(kBetaNames.begin(), kBetaNames.end(), key);
      if (it == kBetaNames.end()) throw ConfigError("unknown config field 'beta." + key + "'");
      if (!value.is_number()) throw ConfigError("invalid config field 'beta." + key + "'");
      c.beta[static_cast<std::size_t>(it - kBetaNames.begin())] = value.get<double>();
    }
  }
  if (doc.contains("psi")) {
    const auto& psi = doc["psi"];
    if (!psi.is_object()) throw ConfigError("invalid config field 'psi'");
    reject_unknown(psi, {"psi11", "psi22", "psi21"}, "psi.");
    const double p11 = psi.contains("psi11") ? get_field<double>(psi, "psi11", "psi.psi11") : 0.0;
    const double p22 = psi.contains("psi22") ? get_field<double>(psi, "psi22", "psi.psi22") : 0.0;
    const double p21 = psi.contains("psi21") ? get_field<double>(psi, "psi21", "psi.psi21") : 0.0;
    c.psi << p11, p21, p21, p22;
  }
  if (doc.contains("sigma")) c.sigma = get_field<double>(doc, "sigma", "sigma");
  if (doc.contains("covariates")) {
    const auto& cov = doc["covariates"];
    if (!cov.is_object()) throw ConfigError("invalid config field 'covariates'");
    reject_unknown(cov, {"num_words_mean", "num_words_dispersion", "grammar_mean", "word_freq_p"},
                   "covariates.");
    auto& law = c.covariates;
    if (cov.contains("num_words_mean")) {
      law.num_words_mean = get_field<double>(cov, "num_words_mean", "covariates.num_words_mean");
    }
    if (cov.contains("num_words_dispersion")) {
      law.num_words_dispersion =
          get_field<int>(cov, "num_words_dispersion", "covariates.num_words_dispersion");
    }
    if (cov.contains("grammar_mean")) {
      law.grammar_mean = get_field<double>(cov, "grammar_mean", "covariates.grammar_mean");
    }
    if (cov.contains("word_freq_p")) {
      law.word_freq_p = get_field<double>(cov, "word_freq_p", "covariates.word_freq_p");
    }
  }
  if (doc.contains("seed")) c.seed = get_field<std::uint64_t>(doc, "seed", "seed");
  if (doc.contains("round_ratings")) c.round_ratings = get_field<bool>(doc, "round_ratings", "round_ratings");
  validate(c);
  return c;
}

GeneratorConfig load_generator_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_generator_config(buf.str());
}

namespace {

json config_to_json(const GeneratorConfig& c) {
  json beta = json::object();
  for (std::size_t k = 0; k < kBetaNames.size(); ++k) beta[std::string(kBetaNames[k])] = c.beta[k];
  json doc;
  doc["J"] = c.J;
  if (c.n_per_question.size() == 1) {
    doc["n_j"] = c.n_per_question[0];
  } else {
    doc["n_j"] = c.n_per_question;
  }
  doc["beta"] = beta;
  doc["psi"] = {{"psi11", c.psi(0, 0)}, {"psi22", c.psi(1, 1)}, {"psi21", c.psi(1, 0)}};
  doc["sigma"] = c.sigma;
  doc["covariates"] = {{"num_words_mean", c.covariates.num_words_mean},
                       {"num_words_dispersion", c.covariates.num_words_dispersion},
                       {"grammar_mean", c.covariates.grammar_mean},
                       {"word_freq_p", c.covariates.word_freq_p}};
  doc["seed"] = c.seed;
  doc["round_ratings"] = c.round_ratings;
  return doc;
}

}  // namespace

std::string generator_config_json(const GeneratorConfig& config) {
  return config_to_json(config).dump(2);
}

std::string truth_json(const SimulationTruth& truth) {
  json doc;
  doc["config"] = config_to_json(truth.config);
  json zeta = json::array();
  for (std::size_t j = 0; j < truth.question_ids.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    zeta.push_back({{"question_id", truth.question_ids[j]},
                    {"intercept", truth.zeta(i, 0)},
                    {"num_words", truth.zeta(i, 1)}});
  }
  doc["zeta"] = std::move(zeta);
  return doc.dump(2);
}

}  // namespace rateaudit
