// SPDX-License-Identifier: Apache-2.0
#include "myq/domain.hpp"

#include <cmath>
#include <random>

#include "myq/error.hpp"

namespace myq {

void DomainSpec::validate() const {
  if (mean.empty() || mean.size() != scale.size())
    throw ConfigError("domain mean and scale must have one entry per channel");
  for (double s : scale)
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("domain scales must be positive");
  for (double m : mean)
    if (!std::isfinite(m)) throw ConfigError("domain means must be finite");
  if (frames == 0) throw ConfigError("domain sample length must be positive");
}

DomainSpec standard_domain(std::size_t channels, std::size_t frames, std::size_t count, std::uint64_t seed) {
  DomainSpec d;
  d.seed = seed;
  d.mean.assign(channels, 0.0);
  d.scale.assign(channels, 1.0);
  d.frames = frames;
  d.count = count;
  return d;
}

DomainSpec split_scaled_domain(std::size_t channels, std::size_t frames, std::size_t count, std::uint64_t seed,
                               double first, double second) {
  DomainSpec d = standard_domain(channels, frames, count, seed);
  for (std::size_t c = 0; c < channels; ++c) d.scale[c] = c < channels / 2 ? first : second;
  return d;
}

std::vector<Tensor> make_domain(const DomainSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t C = spec.mean.size();
  std::vector<Tensor> out;
  out.reserve(spec.count);
  for (std::size_t n = 0; n < spec.count; ++n) {
    std::vector<double> v(C * spec.frames);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < spec.frames; ++t) v[c * spec.frames + t] = spec.mean[c] + spec.scale[c] * normal(rng);
    out.push_back(Tensor({C, spec.frames}, std::move(v), spec.dtype));
  }
  return out;
}

}  // namespace myq
