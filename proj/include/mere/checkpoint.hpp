// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//
//   "MEREckpt" magic (8 bytes)
//   u64 length + version string
//   u64 length + JSON metadata (config snapshot, stage, training state)
//   u64 tensor count, then per tensor:
//     u64 length + name, u64 rank, rank x u64 dims, row-major f64 payload
//
// Integers and doubles are stored little-endian.
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mere/tensor.hpp"

namespace mere {

inline constexpr const char* kCheckpointVersion = "mere-checkpoint/1";

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct CheckpointData {
  std::string version = kCheckpointVersion;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

}  // namespace mere
