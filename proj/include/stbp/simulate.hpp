#pragma once

#include "stbp/model.hpp"

namespace stbp {

/// Counter-based per-draw randomness: one stream per (seed, t, k), so paths
/// are reproducible independent of iteration order.
std::uint64_t mix_counter(std::uint64_t seed, std::uint64_t t, std::uint64_t k);
double uniform01(std::uint64_t state);

struct SimConfig {
  int N = 1;
  std::uint64_t seed = 0;
  IntMatrix initial_window;  // d x K, default all-zero

  SimConfig() = default;
  SimConfig(int N_, std::uint64_t seed_) : N(N_), seed(seed_) {}
};

/// Exact sampling of the process: for each t, each location draws its
/// category by inverse CDF on the (M+1)-simplex, ground state last.
EventPanel simulate(const ModelSpec& spec, const ParamVector& beta, const SimConfig& config);

/// Entry (k,p) = fraction of times t = 1..N with omega_{tk} = p.
Matrix frequency_report(const EventPanel& panel);

}  // namespace stbp
