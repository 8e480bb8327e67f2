#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bbdm/data_synth.hpp"
#include "bbdm/training.hpp"
#include "json.hpp"

namespace bbdm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a CLI run needs. The JSON form is flat for the training keys,
/// with "model" nested and the corpus keys under "data".
struct RunConfig {
  TrainConfig train;
  CorpusParams corpus;
  int test_count = 16;
  std::string encoder = "pixel";

  /// Desk-scale CLI defaults (T = 50, 10 sampling steps, batch 8).
  static RunConfig defaults();
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Built-in defaults, overlaid by the config file, overlaid by key=value
/// overrides. Dotted keys address nested objects ("model.base_channels=16").
/// Values parse as JSON when they can and fall back to strings. Unknown keys
/// are rejected.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);

/// Applies one "key=value" override to a JSON document in place.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace bbdm
