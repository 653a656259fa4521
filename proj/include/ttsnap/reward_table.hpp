#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ttsnap {

/// Precomputed verifier scores for a candidate pool.
///
/// Row i is candidate i. Columns 0..stage_columns-1 hold the score of the
/// Tweedie estimate after step j; the last column holds the reward of the
/// fully denoised sample.
struct RewardTable {
  int rows = 0;
  int stage_columns = 0;
  std::vector<double> values;  // rows x (stage_columns + 1), row-major

  RewardTable() = default;
  RewardTable(int rows_, int stage_columns_)
      : rows(rows_),
        stage_columns(stage_columns_),
        values(static_cast<std::size_t>(rows_) * (stage_columns_ + 1), 0.0) {}

  int columns() const { return stage_columns + 1; }
  int final_column() const { return stage_columns; }

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * columns() + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * columns() + j]; }
  double stage(int i, int step) const { return at(i, step); }
  double final_reward(int i) const { return at(i, stage_columns); }

  std::vector<double> column(int j) const {
    std::vector<double> c(rows);
    for (int i = 0; i < rows; ++i) c[i] = at(i, j);
    return c;
  }

  bool operator==(const RewardTable&) const = default;
};

}  // namespace ttsnap
