#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace safn {

/// Cross-validation plan. Every row lands in exactly one fold; in grouped
/// mode all rows of one subject share a fold.
struct FoldPlan {
  int k = 0;
  std::vector<int> assignments;  // row index -> fold index
  bool grouped = false;

  std::vector<std::size_t> fold_rows(int fold) const;
  std::vector<std::size_t> train_rows(int fold) const;
};

/// Stratified (group-aware) k-fold assignment. Groups are taken from the
/// subject ids; unique ids reduce to plain stratified k-fold. Deterministic
/// for a fixed seed.
///
/// Groups are placed largest-first onto the fold with the largest remaining
/// per-class deficit (ties broken by fold index), which keeps per-fold class
/// counts within one of the stratified target in the ungrouped case.
FoldPlan make_folds(const std::vector<int>& labels, const std::vector<std::string>& subject_ids,
                    int k, uint64_t seed);

}  // namespace safn
