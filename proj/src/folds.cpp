#include "safn/folds.hpp"

#include "safn/common.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace safn {

std::vector<std::size_t> FoldPlan::fold_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldPlan::train_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) rows.push_back(i);
  }
  return rows;
}

FoldPlan make_folds(const std::vector<int>& labels, const std::vector<std::string>& subject_ids,
                    int k, uint64_t seed) {
  if (k < 2) throw DataError("make_folds: k must be at least 2");
  if (labels.size() != subject_ids.size()) {
    throw DataError("make_folds: labels and subject ids differ in length");
  }
  const std::size_t n = labels.size();

  struct Group {
    std::vector<std::size_t> rows;
    std::array<int, 2> class_counts = {0, 0};
  };
  std::map<std::string, std::size_t> group_index;
  std::vector<Group> groups;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw DataError("make_folds: labels must be 0 or 1");
    }
    auto [it, inserted] = group_index.try_emplace(subject_ids[i], groups.size());
    if (inserted) groups.emplace_back();
    Group& g = groups[it->second];
    g.rows.push_back(i);
    g.class_counts[labels[i]] += 1;
  }

  std::array<int, 2> groups_per_class = {0, 0};
  std::array<long, 2> samples_per_class = {0, 0};
  for (const Group& g : groups) {
    for (int c = 0; c < 2; ++c) {
      if (g.class_counts[c] > 0) groups_per_class[c] += 1;
      samples_per_class[c] += g.class_counts[c];
    }
  }
  for (int c = 0; c < 2; ++c) {
    if (groups_per_class[c] < k) {
      throw DataError("make_folds: class " + std::to_string(c) + " has only " +
                      std::to_string(groups_per_class[c]) + " groups for k=" + std::to_string(k));
    }
  }

  // Seeded shuffle fixes the order among equally-sized groups, then a stable
  // sort restores the largest-first processing order.
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return groups[a].rows.size() > groups[b].rows.size();
  });

  const double target0 = static_cast<double>(samples_per_class[0]) / k;
  const double target1 = static_cast<double>(samples_per_class[1]) / k;
  std::vector<std::array<double, 2>> fold_counts(k, {0.0, 0.0});

  FoldPlan plan;
  plan.k = k;
  plan.grouped = groups.size() < n;
  plan.assignments.assign(n, -1);

  for (std::size_t gi : order) {
    const Group& g = groups[gi];
    int best_fold = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int f = 0; f < k; ++f) {
      const double deficit0 = target0 - fold_counts[f][0];
      const double deficit1 = target1 - fold_counts[f][1];
      const double score = g.class_counts[0] * deficit0 + g.class_counts[1] * deficit1;
      if (score > best_score + 1e-12) {
        best_score = score;
        best_fold = f;
      }
    }
    fold_counts[best_fold][0] += g.class_counts[0];
    fold_counts[best_fold][1] += g.class_counts[1];
    for (std::size_t row : g.rows) plan.assignments[row] = best_fold;
  }
  return plan;
}

}  // namespace safn
