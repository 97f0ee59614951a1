// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace myq {

__extension__ using int128 = __int128;

// Round half away from zero. The single rounding rule used by every
// quantization and interpolation routine in the library.
double round_half_away(double x) noexcept;
std::int64_t round_half_away_to_int(double x) noexcept;

// Integer division n / 2^shift rounded half away from zero (shift >= 0).
std::int64_t rounding_shift_right(int128 n, int shift) noexcept;

}  // namespace myq
