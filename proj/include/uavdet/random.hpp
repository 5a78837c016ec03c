// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace uavdet {

// Seedable random stream with a serializable state.
//
// Every draw goes through the raw 64-bit engine, and state()/restore() cover
// the full state. No distribution object caches values between
// calls.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  // Uniform double in [0, 1).
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller, one value per call.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Returns a uniformly random subset of `items` of size min(k, items.size()),
  // in the order it was drawn (partial Fisher-Yates).
  std::vector<std::size_t> choose(std::vector<std::size_t> items, std::size_t k);

  void shuffle(std::vector<std::size_t>& items);

  std::string state() const;
  void restore(const std::string& state);

  // Independent stream derived from this seed and a label.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

// FNV-1a, used for configuration hashes.
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace uavdet
