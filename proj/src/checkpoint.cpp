#include "bbdm/checkpoint.hpp"

#include <fstream>

#include "bbdm/tensor_io.hpp"

namespace bbdm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string file_name_for(const std::string& param) { return param + ".bin"; }

json read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw CheckpointError("checkpoint manifest not found: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const fs::path& dir, const PredictorNet& net, int stage, double scale) {
  fs::create_directories(dir);
  json params = json::array();
  for (const auto& p : net.named_parameters()) {
    write_tensor(dir / file_name_for(p.name), p.var.value());
    params.push_back({{"name", p.name}, {"file", file_name_for(p.name)}, {"shape", p.var.shape()}});
  }
  json manifest{{"format_version", kCheckpointVersion},
                {"stage", stage},
                {"T", net.steps()},
                {"s", scale},
                {"model", net.config()},
                {"parameters", params}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw CheckpointError("failed to write checkpoint manifest in " + dir.string());
}

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
  const json m = read_manifest(dir);
  try {
    if (m.at("format_version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + m.at("format_version").dump());
    }
    CheckpointInfo info;
    info.stage = m.at("stage").get<int>();
    info.steps = m.at("T").get<int>();
    info.scale = m.at("s").get<double>();
    info.model = m.at("model").get<ModelConfig>();
    return info;
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint manifest in " + dir.string() + " is missing fields: " + e.what());
  }
}

void require_compatible(const CheckpointInfo& info, const ModelConfig& expected, int steps, int stage) {
  if (info.stage != stage) {
    throw CheckpointError("checkpoint is stage " + std::to_string(info.stage) + ", expected stage " +
                          std::to_string(stage));
  }
  if (info.steps != steps) {
    throw CheckpointError("checkpoint trained with T=" + std::to_string(info.steps) + ", config has T=" +
                          std::to_string(steps));
  }
  if (!(info.model == expected)) {
    throw CheckpointError("checkpoint model " + json(info.model).dump() + " does not match config " +
                          json(expected).dump());
  }
}

Checkpoint load_checkpoint(const fs::path& dir) {
  Checkpoint ckpt;
  ckpt.info = read_checkpoint_info(dir);
  RngStream unused(0, 0);
  ckpt.net = std::make_unique<PredictorNet>(ckpt.info.model, ckpt.info.steps, unused);
  const json listed = read_manifest(dir).at("parameters");
  const auto& params = ckpt.net->named_parameters();
  if (listed.size() != params.size()) {
    throw CheckpointError("checkpoint lists " + std::to_string(listed.size()) + " parameters, model has " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = listed[i];
    if (entry.at("name").get<std::string>() != params[i].name) {
      throw CheckpointError("parameter order mismatch at " + params[i].name);
    }
    Tensor value = read_tensor<float>(dir / entry.at("file").get<std::string>());
    if (value.shape() != params[i].var.shape()) {
      throw CheckpointError("parameter " + params[i].name + " has shape " + to_string(value.shape()) +
                            ", expected " + to_string(params[i].var.shape()));
    }
    auto var = params[i].var;
    var.mutable_value() = std::move(value);
  }
  return ckpt;
}

}  // namespace bbdm
