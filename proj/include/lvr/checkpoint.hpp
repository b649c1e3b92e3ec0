#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "lvr/adam.hpp"
#include "lvr/config.hpp"
#include "lvr/model.hpp"

namespace lvr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;

  bool operator==(const NamedTensor&) const = default;
};

// Running sums of the per-term losses for an unfinished epoch, so a resumed
// run logs the same epoch means as an uninterrupted one.
struct EpochAccumulator {
  std::array<double, 5> sums{};  // L, Ls, Lp, Le, Lf
  std::uint64_t count = 0;

  bool operator==(const EpochAccumulator&) const = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;  // to_ini() of the training config, loss weights included
  std::vector<NamedTensor> params;
  AdamState<float> adam;
  std::uint64_t step = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_position = 0;
  double best_val_psnr = -std::numeric_limits<double>::infinity();
  EpochAccumulator partial;

  bool operator==(const Checkpoint&) const = default;
};

// Layout (little endian): "LVRN", u32 version, u32 length + config text,
// parameter table, u64 Adam t, first-moment table, second-moment table,
// u64 step, u64 rng seed, u64 rng position, f64 best validation PSNR,
// 5 x f64 epoch sums, u64 epoch count. A table is u32 count then per entry
// u32 name length + name, u8 dtype (1 = f32), u32 rank, rank x u64 extents
// and the payload.
std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

// Writes through a temporary file and renames, so a crash never leaves a
// truncated checkpoint behind.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const TrainConfig& config, const Lvrnet<float>& net, const AdamState<float>& adam);

// Config stored in the checkpoint.
TrainConfig checkpoint_config(const Checkpoint& ckpt);

// Copies weights into `net`; throws when the architecture differs.
void load_weights(const Checkpoint& ckpt, Lvrnet<float>& net);
// Network built from the checkpoint's own config.
Lvrnet<float> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace lvr
