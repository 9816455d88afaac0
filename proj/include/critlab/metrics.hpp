// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Error rates, averaged relative error-rate reduction and real-time factor.

#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace critlab {

enum class Granularity { kWord, kChar };

/// Words split on whitespace, or non-space characters.
inline std::vector<std::string> tokenize(const std::string& text, Granularity g) {
  std::vector<std::string> out;
  if (g == Granularity::kWord) {
    std::istringstream is(text);
    for (std::string w; is >> w;) out.push_back(w);
  } else {
    for (char c : text)
      if (!std::isspace(static_cast<unsigned char>(c))) out.emplace_back(1, c);
  }
  return out;
}

struct ErrorCounts {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int reference_length = 0;

  int edits() const { return substitutions + deletions + insertions; }
  /// 100 * edits / max(1, |ref|).
  double rate() const { return 100.0 * edits() / std::max(1, reference_length); }

  ErrorCounts& operator+=(const ErrorCounts& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    reference_length += o.reference_length;
    return *this;
  }
};

/// Unit-cost Levenshtein alignment. Among minimum-cost alignments the
/// backtrace prefers a substitution (or match), then a deletion, then an
/// insertion.
template <typename Token>
ErrorCounts error_counts(const std::vector<Token>& ref, const std::vector<Token>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1), d[i - 1][j] + 1, d[i][j - 1] + 1});
  ErrorCounts c;
  c.reference_length = static_cast<int>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

inline ErrorCounts error_rate(const std::string& ref, const std::string& hyp, Granularity g = Granularity::kWord) {
  return error_counts(tokenize(ref, g), tokenize(hyp, g));
}

/// WER percentages on the three test tiers.
struct EvalTriplet {
  double clean = 0.0;
  double noisy = 0.0;
  double extreme = 0.0;

  bool operator==(const EvalTriplet&) const = default;
};

/// Unweighted mean over tiers of 100 * (baseline - system) / baseline.
inline double werr_average(const EvalTriplet& baseline, const EvalTriplet& system) {
  if (baseline.clean <= 0.0 || baseline.noisy <= 0.0 || baseline.extreme <= 0.0)
    throw std::invalid_argument("baseline error rates must be positive");
  auto rel = [](double b, double s) { return (b - s) / b; };
  return 100.0 * (rel(baseline.clean, system.clean) + rel(baseline.noisy, system.noisy) +
                  rel(baseline.extreme, system.extreme)) / 3.0;
}

inline double real_time_factor(double decode_seconds, double audio_seconds) {
  if (audio_seconds <= 0.0) throw std::invalid_argument("zero total duration");
  return decode_seconds / audio_seconds;
}

/// Decode wall-clock over audio duration. Utterance 0 is decoded once
/// untimed first so that allocation and cache warm-up are not counted.
inline double measure_rtf(const std::function<void(std::size_t)>& decode,
                          const std::vector<double>& durations_s) {
  double audio = 0.0;
  for (double d : durations_s) audio += d;
  if (audio <= 0.0) throw std::invalid_argument("zero total duration");
  decode(0);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < durations_s.size(); ++i) decode(i);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  return real_time_factor(elapsed.count(), audio);
}

}  // namespace critlab
