#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowdistill/generator.hpp"
#include "flowdistill/network.hpp"

namespace flowdistill::cli {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CheckpointKind : std::uint32_t { scene = 0, denoiser = 1, adapter = 2 };

// Binary layout, little-endian:
//   "FDCK" | u32 version | u32 kind | u32 rank | u64 shape[rank]
//   | u32 meta count | (u32 len, key bytes, u32 len, value bytes)*
//   | u64 config hash | u64 rng counter | u64 n | f64 payload[n] (row-major)
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  CheckpointKind kind = CheckpointKind::scene;
  std::vector<std::uint64_t> shape;
  std::map<std::string, std::string> meta;
  std::uint64_t config_hash = 0;
  std::uint64_t rng_counter = 0;
  std::vector<double> payload;

  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint scene_checkpoint(const Scene& scene, std::uint64_t config_hash, std::uint64_t rng_counter = 0);
Scene scene_from_checkpoint(const Checkpoint& ckpt);

Checkpoint denoiser_checkpoint(const MlpDenoiser& net, std::uint64_t config_hash, std::uint64_t rng_counter = 0);
std::shared_ptr<MlpDenoiser> denoiser_from_checkpoint(const Checkpoint& ckpt);

}  // namespace flowdistill::cli
