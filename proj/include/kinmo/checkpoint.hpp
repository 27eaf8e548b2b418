#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "kinmo/config.hpp"
#include "kinmo/error.hpp"
#include "kinmo/nn/layers.hpp"

namespace kinmo {

// Binary layout (little-endian):
//   "KINMO1" | u32 len + component tag | u64 config digest | u32 len + config text
//   u32 blob count | per blob: u32 len + name, u32 rows, u32 cols, rows*cols f32 row-major
struct Checkpoint {
  std::string component;
  Config config;
  std::vector<std::pair<std::string, nn::Matrix>> blobs;

  void add(const std::string& name, const nn::Matrix& value);
  const nn::Matrix& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  template <class M>
  void add_module(M& module, const std::string& prefix) {
    module.visit(prefix, [&](const std::string& name, nn::Var& v) { add(name, v.value()); });
  }
  // Overwrites parameter values in place; shapes must match.
  template <class M>
  void load_module(M& module, const std::string& prefix) const {
    module.visit(prefix, [&](const std::string& name, nn::Var& v) {
      const nn::Matrix& m = get(name);
      if (m.rows() != v.value().rows() || m.cols() != v.value().cols())
        throw CheckpointError("blob " + name + " has shape " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()) + ", model expects " +
                              std::to_string(v.value().rows()) + "x" + std::to_string(v.value().cols()));
      v.node()->value = m;
    });
  }
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Also checks the component tag and, when `expected` is non-empty, the config digest.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& component,
                           const Config& expected = {});

// Rounds through float32 so in-memory weights match what a reload would see.
nn::Matrix to_stored_precision(const nn::Matrix& m);

}  // namespace kinmo
