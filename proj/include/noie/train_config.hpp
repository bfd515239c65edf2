#pragma once

#include <cstdint>

#include "noie/types.hpp"

namespace noie {

struct TrainConfig {
  int epochs = 40;
  double lr0 = 1.0;
  double decay = 0.7;
  int decay_start_epoch = 11;
  double dropout = 0.3;
  int batch_size = 64;
  int partitions = 20;
  std::uint64_t seed = 1;
  double grad_clip_norm = 5.0;
  int precision = 64;  // 32 or 64

  void validate() const {
    if (epochs < 1) throw DataError("train config: epochs must be >= 1");
    if (!(decay > 0.0 && decay <= 1.0))
      throw DataError("train config: decay must be in (0,1]");
    if (decay_start_epoch < 1)
      throw DataError("train config: decay_start_epoch must be >= 1");
    if (batch_size < 1) throw DataError("train config: batch_size must be >= 1");
    if (partitions < 1) throw DataError("train config: partitions must be >= 1");
    if (grad_clip_norm <= 0.0)
      throw DataError("train config: grad_clip_norm must be positive");
    if (precision != 32 && precision != 64)
      throw DataError("train config: precision must be 32 or 64");
  }
};

// Constant lr0 before the decay epoch, then lr0 * decay^(epoch - start + 1).
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 1) throw DataError("lr_schedule: epoch must be >= 1");
  if (epoch < cfg.decay_start_epoch) return cfg.lr0;
  double lr = cfg.lr0;
  for (int e = cfg.decay_start_epoch; e <= epoch; ++e) lr *= cfg.decay;
  return lr;
}

}  // namespace noie
