// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "quept/tensor.hpp"

namespace quept {

/// On-disk container: a human-readable key-value manifest plus named
/// little-endian float32 blobs with an offset/shape/checksum index.
/// Save -> load -> save is byte-identical; loads fail with distinct
/// errors for version mismatch, truncation and checksum damage.
struct ModelArtifact {
  struct Blob {
    std::string name;
    Tensor data;
  };

  std::vector<std::pair<std::string, std::string>> manifest;
  std::vector<Blob> tensors;

  void set_value(const std::string& key, const std::string& value);
  const std::string& value(const std::string& key) const;
  bool has_value(const std::string& key) const;

  void set_tensor(const std::string& name, Tensor t);
  const Tensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

void save_artifact(const ModelArtifact& artifact, const std::string& path);
ModelArtifact load_artifact(const std::string& path);

/// Shortest round-trip decimal form; used everywhere a float value is
/// placed in a text file so reruns stay byte-identical.
std::string format_float(double v);
double parse_float(const std::string& s);

std::uint32_t crc32(const void* data, std::size_t len);

}  // namespace quept
