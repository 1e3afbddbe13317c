#include "samlab/sampling.hpp"

#include <algorithm>
#include <numeric>

#include "samlab/types.hpp"

namespace samlab {

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::with_replacement ? "with_replacement"
                                                : "epoch_shuffle";
}

SamplingMode parse_sampling_mode(const std::string& text) {
  if (text == "with_replacement") return SamplingMode::with_replacement;
  if (text == "epoch_shuffle") return SamplingMode::epoch_shuffle;
  throw ConfigError("unknown sampling mode '" + text +
                    "' (expected with_replacement or epoch_shuffle)");
}

MiniBatch MiniBatch::full(std::size_t n) {
  MiniBatch batch;
  batch.indices.resize(n);
  std::iota(batch.indices.begin(), batch.indices.end(), std::size_t{0});
  return batch;
}

BatchSampler::BatchSampler(std::size_t n, SamplingMode mode, Rng rng)
    : n_(n), mode_(mode), rng_(std::move(rng)), perm_(n) {
  if (n == 0) throw ConfigError("sampler needs n >= 1");
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  cursor_ = n_;
}

void BatchSampler::begin_epoch() {
  if (mode_ == SamplingMode::epoch_shuffle) {
    std::shuffle(perm_.begin(), perm_.end(), rng_);
    cursor_ = 0;
  }
}

MiniBatch BatchSampler::next(std::size_t b) {
  if (b == 0 || b > n_) {
    throw Error("batch size " + std::to_string(b) + " outside [1, " +
                std::to_string(n_) + "]");
  }
  if (b == n_) return MiniBatch::full(n_);

  MiniBatch batch;
  if (mode_ == SamplingMode::with_replacement) {
    std::uniform_int_distribution<std::size_t> pick(0, n_ - 1);
    batch.indices.resize(b);
    for (auto& i : batch.indices) i = pick(rng_);
    return batch;
  }

  // Slices never straddle an epoch; the last one is short when b does not
  // divide n, which keeps ceil(n/b) steps per epoch.
  if (cursor_ >= n_) begin_epoch();
  const std::size_t take = std::min(b, n_ - cursor_);
  batch.indices.assign(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       perm_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
  cursor_ += take;
  return batch;
}

}  // namespace samlab
