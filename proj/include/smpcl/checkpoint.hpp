#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "smpcl/layers.hpp"

namespace smpcl {

// Single-file checkpoint:
//
//   SMPCLCKPT 1 f32 <entries> <meta>
//   meta <key> <value>                       (x meta)
//   tensor <name> <offset> <rank> <d0> ...   (x entries; offset in elements)
//   END
//   <little-endian float32 blob>
//
// Names and meta keys contain no whitespace; meta values run to end of line.
struct CheckpointData {
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<float> values;
  };
  std::map<std::string, std::string> meta;
  std::vector<Entry> entries;

  const Entry* find(const std::string& name) const;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params,
                     const std::map<std::string, std::string>& meta);

/// Throws ValidationError on a malformed or truncated file, naming the path.
CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Copies entries named prefix + name into every tensor of `params`. Missing
/// names and shape mismatches throw ValidationError.
template <typename T>
void assign_parameters(const CheckpointData& data, const ParameterSet<T>& params,
                       const std::string& prefix = "");

}  // namespace smpcl
