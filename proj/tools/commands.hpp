#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rateaudit::cli {

enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,
  kValidationFailure = 2,
  kNotConverged = 3,
};

enum class ModelSelection { M1, M2, M3, All };

struct RunConfig {
  std::string input;
  ModelSelection models = ModelSelection::All;
  std::string out_csv;
  std::string out_json;
  std::string out_md;
  std::string rules_version = "v1";
  std::size_t trigram_k = 5;
  unsigned threads = 1;
  int max_iterations = 10000;  // optimizer budget per model
  std::optional<std::uint64_t> seed;
};

/// Runs one invocation (argv[0] is the program name). Never throws.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

int cmd_featurize(const RunConfig& config, const std::vector<std::string>& column_overrides,
                  std::ostream& out);
int cmd_fit(const RunConfig& config, std::ostream& out);
int cmd_compare(const RunConfig& config, const std::string& null_model, const std::string& alt_model,
                std::ostream& out);
int cmd_simulate(const RunConfig& config, const std::string& config_path, std::ostream& out);

}  // namespace rateaudit::cli
