#pragma once

// Reference component columns and composite scores: the method comparison
// table and the chunk-size ablation.

#include <string>
#include <vector>

#include "graphgen/metrics.hpp"

namespace graphgen::reference {

struct Row {
  std::string method;
  ScoreRow scores;
  double printed_avg;
};

inline const std::vector<Row>& comparison_rows() {
  static const std::vector<Row> rows = {
      {"WRAP", {13.4, 91.2, 87.1, 91.6, 44.0, 4.0}, 42.5},
      {"Genie", {40.2, 91.7, 94.7, 92.7, 64.1, 44.0}, 62.4},
      {"LongForm", {47.6, 85.7, 93.7, 87.3, 84.2, 82.5}, 73.3},
      {"EntiGraph", {30.1, 92.6, 93.3, 93.1, 56.3, 28.8}, 55.2},
      {"SELF-QA", {34.7, 91.3, 92.8, 92.3, 59.5, 39.3}, 58.8},
      {"GraphGen", {75.8, 87.8, 95.7, 90.4, 85.0, 31.8}, 75.2},
  };
  return rows;
}

inline const std::vector<Row>& ablation_rows() {
  static const std::vector<Row> rows = {
      {"GraphGen(256)", {71.9, 87.8, 95.7, 90.4, 84.6, 38.0}, 74.8},
      {"GraphGen(512)", {75.8, 87.8, 95.7, 90.4, 85.0, 31.8}, 75.2},
      {"GraphGen(768)", {75.8, 87.9, 95.9, 90.4, 84.8, 31.0}, 75.0},
      {"GraphGen(1024)", {75.0, 87.9, 95.9, 90.5, 84.5, 31.7}, 74.8},
  };
  return rows;
}

}  // namespace graphgen::reference
