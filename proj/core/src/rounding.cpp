// SPDX-License-Identifier: Apache-2.0
#include "myq/rounding.hpp"

#include <cmath>

namespace myq {

double round_half_away(double x) noexcept { return std::round(x); }

std::int64_t round_half_away_to_int(double x) noexcept {
  return static_cast<std::int64_t>(std::round(x));
}

std::int64_t rounding_shift_right(int128 n, int shift) noexcept {
  if (shift <= 0) return static_cast<std::int64_t>(n << -shift);
  const int128 half = static_cast<int128>(1) << (shift - 1);
  if (n >= 0) return static_cast<std::int64_t>((n + half) >> shift);
  return -static_cast<std::int64_t>((-n + half) >> shift);
}

}  // namespace myq
