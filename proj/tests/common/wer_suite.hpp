// SPDX-License-Identifier: Apache-2.0
// Edit-distance metrics against the full-table dynamic-programming oracle.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "myq/metrics.hpp"
#include "oracles.hpp"

namespace wer_suite {

struct SuiteResult {
  int pairs = 0;
  int mismatches = 0;
};

inline std::string random_word(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(1, 3), letter(0, 3);
  std::string w(static_cast<std::size_t>(len(rng)), 'a');
  for (auto& c : w) c = static_cast<char>('a' + letter(rng));
  return w;
}

/// Random word sequences (small alphabet so matches are common); WER and CER
/// must equal the oracle distance over the reference length exactly.
inline SuiteResult run(int pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len(1, 12), hyp_len(0, 12);
  SuiteResult r;
  for (int k = 0; k < pairs; ++k) {
    std::vector<std::string> ref(static_cast<std::size_t>(len(rng))), hyp(static_cast<std::size_t>(hyp_len(rng)));
    for (auto& w : ref) w = random_word(rng);
    for (auto& w : hyp) w = random_word(rng);
    const double expect_wer = static_cast<double>(oracle::levenshtein(ref, hyp)) / ref.size();
    std::string rs, hs;
    for (const auto& w : ref) rs += (rs.empty() ? "" : " ") + w;
    for (const auto& w : hyp) hs += (hs.empty() ? "" : " ") + w;
    const double expect_cer = static_cast<double>(oracle::levenshtein(rs, hs)) / rs.size();
    ++r.pairs;
    if (myq::wer(ref, hyp) != expect_wer || myq::cer(rs, hs) != expect_cer) ++r.mismatches;
  }
  return r;
}

}  // namespace wer_suite
