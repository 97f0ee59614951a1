// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "myq/tensor.hpp"

namespace myq {

/// Synthetic input distribution: x[c][t] = mean[c] + scale[c] * N(0, 1).
struct DomainSpec {
  std::uint64_t seed = 0;
  std::vector<double> mean;   // per channel
  std::vector<double> scale;  // per channel, > 0
  std::size_t frames = 64;
  std::size_t count = 32;
  DType dtype = DType::f32;

  void validate() const;
};

/// Unit-variance zero-mean domain.
DomainSpec standard_domain(std::size_t channels, std::size_t frames, std::size_t count, std::uint64_t seed);

/// Channels [0, C/2) scaled by `first`, the rest by `second`.
DomainSpec split_scaled_domain(std::size_t channels, std::size_t frames, std::size_t count, std::uint64_t seed,
                               double first, double second);

/// `count` tensors of shape [C x frames], deterministic in the seed.
std::vector<Tensor> make_domain(const DomainSpec& spec);

}  // namespace myq
