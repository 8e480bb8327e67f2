#include "bbdm/config.hpp"

#include <fstream>

namespace bbdm {

using nlohmann::json;

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.train.steps = 50;
  c.train.sampler.steps = 10;
  c.train.batch_size = 8;
  c.train.lr = 5e-5;
  c.train.scale = 1.0;
  return c;
}

void to_json(json& j, const RunConfig& c) {
  j = c.train;
  j["data"] = json{{"n", c.corpus.n},
                   {"size", c.corpus.size},
                   {"test_count", c.test_count},
                   {"beta_range", {c.corpus.beta_lo, c.corpus.beta_hi}},
                   {"A_range", {c.corpus.a_lo, c.corpus.a_hi}}};
  j["encoder"] = c.encoder;
}

void from_json(const json& j, RunConfig& c) {
  c.train = j.get<TrainConfig>();
  const RunConfig d = RunConfig::defaults();
  c.corpus = d.corpus;
  c.test_count = d.test_count;
  if (j.contains("data")) {
    const json& data = j.at("data");
    c.corpus.n = data.value("n", d.corpus.n);
    c.corpus.size = data.value("size", d.corpus.size);
    c.test_count = data.value("test_count", d.test_count);
    if (data.contains("beta_range")) {
      c.corpus.beta_lo = data.at("beta_range").at(0).get<double>();
      c.corpus.beta_hi = data.at("beta_range").at(1).get<double>();
    }
    if (data.contains("A_range")) {
      c.corpus.a_lo = data.at("A_range").at(0).get<double>();
      c.corpus.a_hi = data.at("A_range").at(1).get<double>();
    }
  }
  c.encoder = j.value("encoder", d.encoder);
}

namespace {

void reject_unknown(const json& candidate, const json& reference, const std::string& prefix) {
  for (const auto& [key, value] : candidate.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (value.is_object() && reference.at(key).is_object()) reject_unknown(value, reference.at(key), path);
  }
}

}  // namespace

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  const json reference = RunConfig::defaults();
  json doc = reference;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("config file not found: " + file->string());
    json loaded;
    try {
      loaded = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("malformed config file " + file->string() + ": " + e.what());
    }
    if (!loaded.is_object()) throw ConfigError("config file must hold a JSON object");
    reject_unknown(loaded, reference, "");
    doc.merge_patch(loaded);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  try {
    RunConfig config = doc.get<RunConfig>();
    config.train.validate();
    return config;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace bbdm
