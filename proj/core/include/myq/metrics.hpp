// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "myq/model.hpp"
#include "myq/quantized_model.hpp"

namespace myq {

/// Unit-cost Levenshtein distance.
template <class T>
std::size_t edit_distance(std::span<const T> ref, std::span<const T> hyp);

/// Word error rate: edits / |ref|. An empty reference is a UsageError.
double wer(std::span<const std::string> ref, std::span<const std::string> hyp);
/// Character error rate over the bytes of the two strings.
double cer(std::string_view ref, std::string_view hyp);

std::vector<std::string> split_words(std::string_view s);

/// Spelling of a vocabulary token as a word ("a".."z", "ba", ...).
std::string token_word(std::size_t token);
/// One word per frame.
std::vector<std::string> transcript_words(std::span<const std::size_t> tokens);
std::string transcript_text(std::span<const std::size_t> tokens);

struct EvalResult {
  double wer = 0.0;       // FP transcript as reference
  double cer = 0.0;
  double accuracy = 0.0;  // top-1 against labels (FP argmax when unlabelled)
  double fidelity = 0.0;  // frames where quantized argmax == FP argmax
  double mean_cosine_distance = 0.0;  // 1 - cos(o_l, o_hat_l), mean over layers and samples
  std::size_t samples = 0;
  std::size_t frames = 0;

  bool operator==(const EvalResult&) const = default;
};

/// Runs FP and quantized inference on every input. `labels` (per input, per
/// frame) is optional; without it accuracy equals fidelity.
EvalResult evaluate(const ModelGraph& fp, const quant::QuantizedModel& q, std::span<const Tensor> inputs,
                    std::span<const std::vector<std::size_t>> labels = {});

double fidelity(const ModelGraph& fp, const quant::QuantizedModel& q, std::span<const Tensor> inputs);

/// 1 - cos(a, b); 0 when both are zero, 1 when exactly one is.
double cosine_distance(const Tensor& a, const Tensor& b);

}  // namespace myq
