// SPDX-License-Identifier: Apache-2.0
#include "myq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>

#include "myq/error.hpp"
#include "myq/parallel.hpp"

namespace myq {

template <class T>
std::size_t edit_distance(std::span<const T> ref, std::span<const T> hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

template std::size_t edit_distance<std::string>(std::span<const std::string>, std::span<const std::string>);
template std::size_t edit_distance<char>(std::span<const char>, std::span<const char>);
template std::size_t edit_distance<std::size_t>(std::span<const std::size_t>, std::span<const std::size_t>);

double wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty()) throw UsageError("WER needs a nonempty reference");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

double cer(std::string_view ref, std::string_view hyp) {
  if (ref.empty()) throw UsageError("CER needs a nonempty reference");
  return static_cast<double>(edit_distance(std::span<const char>(ref), std::span<const char>(hyp))) /
         static_cast<double>(ref.size());
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

std::string token_word(std::size_t token) {
  std::string w;
  do {
    w.insert(w.begin(), static_cast<char>('a' + token % 26));
    token /= 26;
  } while (token > 0);
  return w;
}

std::vector<std::string> transcript_words(std::span<const std::size_t> tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (auto t : tokens) out.push_back(token_word(t));
  return out;
}

std::string transcript_text(std::span<const std::size_t> tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += token_word(tokens[i]);
  }
  return s;
}

double cosine_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("cosine distance needs equal shapes");
  double dot = 0.0, na = 0.0, nb = 0.0;
  const auto& x = a.values();
  const auto& y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    na += x[i] * x[i];
    nb += y[i] * y[i];
  }
  if (na == 0.0 && nb == 0.0) return 0.0;
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot / std::sqrt(na * nb);
}

EvalResult evaluate(const ModelGraph& fp, const quant::QuantizedModel& q, std::span<const Tensor> inputs,
                    std::span<const std::vector<std::size_t>> labels) {
  if (inputs.empty()) throw UsageError("evaluation set is empty");
  if (!labels.empty() && labels.size() != inputs.size())
    throw UsageError("labels must cover every evaluation input");
  if (fp.config.vocab != q.graph.config.vocab) throw ValidationError("models have different vocabularies");

  struct Sample {
    double wer = 0, cer = 0, cos = 0;
    std::size_t frames = 0, agree = 0, correct = 0;
  };
  std::vector<Sample> per(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    const auto ref = forward_with_tape(fp, inputs[i]);
    const auto hyp = quant::run_quantized(q, inputs[i]);
    const auto rt = argmax_rows(ref.logits_value());
    const auto ht = argmax_rows(hyp.logits_value());
    Sample& s = per[i];
    s.frames = rt.size();
    for (std::size_t f = 0; f < rt.size(); ++f) {
      s.agree += rt[f] == ht[f];
      const std::size_t target = labels.empty() ? rt[f] : labels[i].at(f);
      s.correct += ht[f] == target;
    }
    const auto rw = transcript_words(rt);
    const auto hw = transcript_words(ht);
    s.wer = wer(rw, hw);
    s.cer = cer(transcript_text(rt), transcript_text(ht));
    double c = 0.0;
    for (std::size_t l = 0; l < ref.layer_outputs.size(); ++l)
      c += cosine_distance(hyp.layer_outputs[l], ref.layer_outputs[l]);
    s.cos = c / static_cast<double>(ref.layer_outputs.size());
  });

  EvalResult r;
  r.samples = inputs.size();
  std::size_t agree = 0, correct = 0;
  for (const auto& s : per) {
    r.wer += s.wer;
    r.cer += s.cer;
    r.mean_cosine_distance += s.cos;
    r.frames += s.frames;
    agree += s.agree;
    correct += s.correct;
  }
  const double n = static_cast<double>(inputs.size());
  r.wer /= n;
  r.cer /= n;
  r.mean_cosine_distance /= n;
  r.fidelity = static_cast<double>(agree) / static_cast<double>(r.frames);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.frames);
  return r;
}

double fidelity(const ModelGraph& fp, const quant::QuantizedModel& q, std::span<const Tensor> inputs) {
  return evaluate(fp, q, inputs).fidelity;
}

}  // namespace myq
