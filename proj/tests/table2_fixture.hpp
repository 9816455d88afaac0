// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Published WER triplets, printed average WERR and RTF for the seven
// languages of the cross-criterion comparison.

#pragma once

#include "critlab/metrics.hpp"

#include <string>
#include <vector>

namespace critlab::testing {

struct PublishedSystem {
  EvalTriplet wer;
  double avg_werr;  // percent; unused for the baseline
  double rtf;
};

struct PublishedLanguage {
  std::string name;
  PublishedSystem lfmmi, ctc, rnnt;
};

inline const std::vector<PublishedLanguage>& published_table() {
  static const std::vector<PublishedLanguage> table = {
      {"US English", {{10.4, 14.4, 20.3}, 0, 0.46}, {{11.3, 15.0, 20.9}, -5.3, 0.40}, {{10.2, 14.2, 19.8}, 1.9, 0.49}},
      {"Spanish", {{10.4, 12.7, 21.0}, 0, 0.50}, {{10.2, 12.6, 20.7}, 1.4, 0.33}, {{9.1, 11.1, 19.2}, 11.2, 0.48}},
      {"Hindi", {{20.1, 21.7, 25.7}, 0, 0.44}, {{18.9, 20.6, 26.3}, 2.9, 0.30}, {{17.9, 19.4, 25.0}, 8.1, 0.41}},
      {"Indic English", {{26.9, 31.6, 32.2}, 0, 0.44}, {{26.7, 31.1, 32.7}, 0.3, 0.30}, {{26.2, 31.3, 31.3}, 2.1, 0.41}},
      {"Thai", {{9.7, 13.7, 21.7}, 0, 0.41}, {{9.9, 14.2, 22.8}, -3.6, 0.29}, {{8.7, 12.8, 20.2}, 7.9, 0.40}},
      {"Vietnamese", {{11.5, 19.3, 45.3}, 0, 0.37}, {{11.7, 19.9, 46.6}, -2.6, 0.29}, {{10.5, 19.0, 46.3}, 2.6, 0.44}},
      {"Turkish", {{19.4, 20.2, 37.9}, 0, 0.45}, {{19.6, 20.7, 39.9}, -2.9, 0.33}, {{16.9, 18.6, 38.4}, 6.5, 0.43}},
  };
  return table;
}

}  // namespace critlab::testing
