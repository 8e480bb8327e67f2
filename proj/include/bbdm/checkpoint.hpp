#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>

#include "bbdm/predictor_net.hpp"

namespace bbdm {

/// On disk a checkpoint is a directory holding manifest.json plus one raw
/// tensor file per parameter, named by parameter path:
///
///   {"format_version": 1, "stage": 1, "T": 50, "s": 1.0,
///    "model": {...}, "parameters": [{"name": ..., "file": ..., "shape": [...]}]}
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointInfo {
  int stage = 1;
  int steps = 0;
  double scale = 1.0;
  ModelConfig model;
};

struct Checkpoint {
  CheckpointInfo info;
  std::unique_ptr<PredictorNet> net;
};

void save_checkpoint(const std::filesystem::path& dir, const PredictorNet& net, int stage, double scale);

/// Manifest only; cheap, touches no tensor payloads.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

/// Throws CheckpointError when the checkpoint cannot serve `expected`.
void require_compatible(const CheckpointInfo& info, const ModelConfig& expected, int steps, int stage);

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace bbdm
