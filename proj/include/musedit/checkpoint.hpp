#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "musedit/common.hpp"
#include "musedit/nn/tape.hpp"

namespace musedit {

using json = nlohmann::json;

// Single-file model container: JSON header (config, tensor directory,
// mandatory format_version) followed by raw little-endian float64 payloads.
// Shared by the VAE, diffusion and embedder checkpoints.
struct Checkpoint {
  json meta;  // must contain "format_version"
  std::vector<std::pair<std::string, Mat>> tensors;

  void add_tensor(const std::string& name, const Mat& m) { tensors.emplace_back(name, m); }
  const Mat* find_tensor(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Dump / restore a ParamStore with an optional name prefix.
  void put_params(const nn::ParamStore& ps, const std::string& prefix);
  void get_params(nn::ParamStore& ps, const std::string& prefix) const;
};

// Digest of a canonical JSON dump; recorded in provenance files so outputs
// can be traced to the exact configuration that produced them.
std::string config_digest(const json& j);

}  // namespace musedit
