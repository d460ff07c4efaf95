#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stpt/num/adam.hpp"
#include "stpt/num/tensor.hpp"

namespace stpt::model {

class STPTModel;

// On-disk layout (all integers little-endian):
//   byte 0          format version (currently 1)
//   u64             header length in bytes
//   header          UTF-8 "key=value" lines: the run config snapshot plus
//                   meta.* entries (update counter)
//   u64             record count
//   per record      u32 name length, name bytes, u32 rank, u64 extents...,
//                   float64 values (raw IEEE bits, so round-trips are exact)
// Parameter records use their registry names; optimizer state is stored as
// adam.m.<name>, adam.v.<name> and adam.t.<name>.
struct Checkpoint {
  std::map<std::string, std::string> config;
  std::int64_t update_counter = 0;
  std::vector<std::pair<std::string, std::pair<Shape, Arr>>> records;

  static constexpr std::uint8_t kVersion = 1;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  const std::pair<Shape, Arr>* find(const std::string& name) const;

  // Capture parameters (and optionally optimizer state) from a live model.
  static Checkpoint capture(const STPTModel& model, const AdamOptimizer* opt,
                            std::map<std::string, std::string> config,
                            std::int64_t update_counter);

  // Restore parameter values into an existing model of matching shape;
  // restores optimizer state when opt != nullptr and the records carry it.
  void restore(STPTModel& model, AdamOptimizer* opt = nullptr) const;

  bool has_optimizer_state() const;
};

// Arithmetic mean of the parameter tensors of K checkpoints with identical
// configs; optimizer state is dropped.
Checkpoint average_checkpoints(const std::vector<Checkpoint>& checkpoints);

}  // namespace stpt::model
