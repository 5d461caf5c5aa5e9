#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "nwinv/featnet.hpp"
#include "nwinv/linear_head.hpp"

namespace nwinv {

// Binary layout, all integers and floats little-endian:
//   "NWCK"  u32 version  u32 n_dims  u64 dims[n_dims]
//   per layer: weight [dims[l] x dims[l+1]] then bias [dims[l+1]], as f64
//   u8 has_head; if set: u64 feature_dim, u64 n_classes, weight, bias as f64
//   u64 metadata length, metadata as UTF-8 JSON
// The optional head is the ERM classifier or a trained probe; metadata key
// "head" says which.
struct Checkpoint {
  FeatureNet net;
  std::optional<LinearHead> head;
  nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
// FormatError on wrong magic, unsupported version, truncation or trailing
// bytes.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nwinv
