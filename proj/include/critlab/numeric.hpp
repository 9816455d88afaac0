// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Log-domain arithmetic, label/alignment types, the blank-collapse mapping
// for both CTC and transducer semantics, and brute-force alignment
// enumeration used as an oracle by the loss tests.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace critlab {

/// Row-major dense matrix; rows are frames throughout the library.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Index of the blank symbol in every inventory of the library.
inline constexpr int kBlank = 0;

using Label = int;
/// Target sequence over the non-blank inventory (never contains kBlank).
using LabelSequence = std::vector<Label>;
/// Sequence over the blank-extended inventory.
using Alignment = std::vector<Label>;

enum class CollapseMode { kCtc, kRnnt };

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

/// log(sum(exp(values))) with max subtraction. All -inf gives -inf.
inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("empty reduction");
  const double m = *std::max_element(values.begin(), values.end());
  if (m == kLogZero) return kLogZero;
  if (m == kInf) return kInf;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

/// Row-wise log-softmax.
inline Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double m = logits.row(t).maxCoeff();
    const double lse =
        m + std::log((logits.row(t).array() - m).exp().sum());
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

/// Ordered set of unit names. Index 0 is always the blank symbol, so the
/// output dimension D equals size() and the non-blank labels are 1..D-1.
class LabelInventory {
 public:
  static constexpr const char* kBlankSymbol = "<blk>";

  LabelInventory() : symbols_{kBlankSymbol} { index_[kBlankSymbol] = 0; }

  explicit LabelInventory(const std::vector<std::string>& labels)
      : LabelInventory() {
    for (const auto& l : labels) add(l);
  }

  Label add(const std::string& label) {
    if (label == kBlankSymbol)
      throw std::invalid_argument("blank is not a member of the label set");
    auto [it, inserted] =
        index_.emplace(label, static_cast<Label>(symbols_.size()));
    if (!inserted) throw std::invalid_argument("duplicate label: " + label);
    symbols_.push_back(label);
    return it->second;
  }

  /// D = |Y| + 1.
  int size() const { return static_cast<int>(symbols_.size()); }
  int num_labels() const { return size() - 1; }
  int blank_id() const { return kBlank; }

  const std::string& symbol(Label id) const { return symbols_.at(id); }
  bool contains(const std::string& label) const {
    return index_.count(label) > 0;
  }
  Label index_of(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end())
      throw std::out_of_range("unknown label: " + label);
    return it->second;
  }
  /// Non-blank labels in index order.
  std::vector<std::string> labels() const {
    return {symbols_.begin() + 1, symbols_.end()};
  }

  bool operator==(const LabelInventory& other) const {
    return symbols_ == other.symbols_;
  }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, Label> index_;
};

/// Throws if any label of `y` is blank or outside [1, dim).
inline void check_label_sequence(std::span<const Label> y, int dim) {
  for (Label l : y) {
    if (l == kBlank || l < 0 || l >= dim)
      throw std::out_of_range("label index out of range: " +
                              std::to_string(l));
  }
}

/// CTC mode merges adjacent equal symbols and then drops blanks; transducer
/// mode only drops blanks.
inline LabelSequence collapse(std::span<const Label> a, CollapseMode mode) {
  LabelSequence out;
  Label prev = -1;
  for (Label s : a) {
    if (mode == CollapseMode::kCtc) {
      if (s != kBlank && s != prev) out.push_back(s);
      prev = s;
    } else if (s != kBlank) {
      out.push_back(s);
    }
  }
  return out;
}

/// Exact inverse image of `y` under collapse, in lexicographic order.
///
/// CTC mode scans every string of length `frames` over the `dim`-symbol
/// extended inventory. Transducer mode yields the length frames+U
/// interleavings with exactly `frames` blanks, the last symbol being the
/// terminal blank.
inline std::vector<Alignment> enumerate_alignments(int frames,
                                                   std::span<const Label> y,
                                                   int dim, CollapseMode mode) {
  const int num_labels = static_cast<int>(y.size());
  if (frames < 0) throw std::invalid_argument("negative frame count");
  if (frames > 8 || num_labels > 5) throw std::length_error("oracle too large");
  check_label_sequence(y, dim);

  std::vector<Alignment> out;
  if (mode == CollapseMode::kCtc) {
    double total = std::pow(static_cast<double>(dim), frames);
    if (total > static_cast<double>(1 << 22))
      throw std::length_error("oracle too large");
    Alignment a(frames, 0);
    const auto count = static_cast<long long>(total);
    for (long long n = 0; n < count; ++n) {
      long long rem = n;
      for (int t = frames - 1; t >= 0; --t) {
        a[t] = static_cast<Label>(rem % dim);
        rem /= dim;
      }
      if (collapse(a, mode) == LabelSequence(y.begin(), y.end()))
        out.push_back(a);
    }
    return out;
  }

  if (frames == 0) return out;
  // Every blank-position subset of the first frames+U-1 slots with
  // frames-1 blanks, generated so that the output is lexicographic.
  const int len = frames + num_labels;
  Alignment a(len, kBlank);
  auto rec = [&](auto&& self, int pos, int blanks_left, int emitted) -> void {
    if (pos == len - 1) {
      if (blanks_left == 0 && emitted == num_labels) {
        a[pos] = kBlank;
        out.push_back(a);
      }
      return;
    }
    // Blank (index 0) sorts before any label.
    if (blanks_left > 0) {
      a[pos] = kBlank;
      self(self, pos + 1, blanks_left - 1, emitted);
    }
    if (emitted < num_labels) {
      a[pos] = y[emitted];
      self(self, pos + 1, blanks_left, emitted + 1);
    }
  };
  rec(rec, 0, frames - 1, 0);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace critlab
