#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "samlab/rng.hpp"

namespace samlab {

enum class SamplingMode {
  /// i.i.d. uniform indices; the regime the convergence theory assumes.
  with_replacement,
  /// A fresh permutation per epoch cut into consecutive slices.
  epoch_shuffle,
};

std::string to_string(SamplingMode mode);
SamplingMode parse_sampling_mode(const std::string& text);

struct MiniBatch {
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
  /// All n indices in order; the deterministic b = n batch.
  static MiniBatch full(std::size_t n);
};

/// Draws mini-batches for one trajectory. A request for b = n always yields
/// the full ordered index set without consuming randomness.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, SamplingMode mode, Rng rng);

  /// Marks an epoch boundary (reshuffles in epoch_shuffle mode).
  void begin_epoch();
  MiniBatch next(std::size_t b);

  SamplingMode mode() const { return mode_; }

 private:
  std::size_t n_;
  SamplingMode mode_;
  Rng rng_;
  std::vector<std::size_t> perm_;
  std::size_t cursor_ = 0;
};

}  // namespace samlab
