#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kcforge/afm.hpp"
#include "kcforge/error.hpp"
#include "kcforge/rng.hpp"
#include "kcforge/types.hpp"

namespace kcforge {

// Fold assignment that keeps every step of an item inside one fold.
struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> item_to_fold;
  std::uint64_t seed = 0;
};

// Shuffles the items with a seeded generator and deals them round-robin, so
// fold item-counts differ by at most one and all steps of an item share a
// fold by construction.
inline FoldAssignment make_item_blocked_folds(
    const std::vector<std::string>& items, int k, std::uint64_t seed) {
  if (k < 1) {
    throw ValidationError("make_item_blocked_folds: k must be >= 1");
  }
  if (items.size() < static_cast<std::size_t>(k)) {
    throw ValidationError("make_item_blocked_folds: " +
                          std::to_string(items.size()) + " item(s) cannot " +
                          "fill " + std::to_string(k) + " folds");
  }
  std::set<std::string> distinct(items.begin(), items.end());
  if (distinct.size() != items.size()) {
    throw ValidationError("make_item_blocked_folds: items must be distinct");
  }
  std::vector<std::string> shuffled = items;
  SeededRng rng(seed);
  rng.shuffle(shuffled);
  FoldAssignment folds;
  folds.k = k;
  folds.seed = seed;
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    folds.item_to_fold[shuffled[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return folds;
}

inline double rmse(const std::vector<double>& predictions,
                   const std::vector<int>& outcomes) {
  if (predictions.empty() || predictions.size() != outcomes.size()) {
    throw ValidationError("rmse: need equal-sized, non-empty inputs");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double err = predictions[i] - static_cast<double>(outcomes[i]);
    sum += err * err;
  }
  return std::sqrt(sum / static_cast<double>(predictions.size()));
}

struct CvReport {
  std::string model_name;
  std::uint64_t seed = 0;
  int k = 0;
  std::vector<double> fold_rmse;
  double pooled_rmse = 0.0;     // over all held-out predictions, primary
  double mean_fold_rmse = 0.0;  // mean of per-fold RMSEs, secondary
};

// Item-blocked k-fold CV for one seed. Per fold, the AFM is fitted on steps
// whose items fall outside the fold; opportunity counts are recomputed from
// training rows only, on both sides of the split, so no temporal information
// leaks through the counts. Held-out rows referencing a student or KC the
// training fold never saw use that parameter's penalized prior mean, 0.
inline CvReport cross_validate(const std::vector<StepRecord>& steps,
                               const KcModel& model, int k, std::uint64_t seed,
                               const FitConfig& fit_config) {
  if (k < 2) {
    throw ValidationError("cross_validate: k must be >= 2");
  }
  if (steps.empty()) {
    throw ValidationError("cross_validate: no steps given");
  }
  std::set<std::string> item_set;
  std::vector<std::string> unmapped;
  for (const auto& step : steps) {
    if (!model.contains_item(step.item_id)) {
      if (std::find(unmapped.begin(), unmapped.end(), step.item_id) ==
          unmapped.end()) {
        unmapped.push_back(step.item_id);
      }
    }
    item_set.insert(step.item_id);
  }
  if (!unmapped.empty()) {
    std::sort(unmapped.begin(), unmapped.end());
    std::string message = "cross_validate: items not mapped in KC model '" +
                          model.name() + "':";
    const std::size_t shown = std::min<std::size_t>(unmapped.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) {
      message += " '" + unmapped[i] + "'";
    }
    if (unmapped.size() > shown) {
      message += " (+" + std::to_string(unmapped.size() - shown) + " more)";
    }
    throw ValidationError(message);
  }

  const std::vector<std::string> items(item_set.begin(), item_set.end());
  const FoldAssignment folds = make_item_blocked_folds(items, k, seed);

  std::vector<StepRecord> sorted = steps;
  std::sort(sorted.begin(), sorted.end(),
            [](const StepRecord& a, const StepRecord& b) {
              if (a.student_id != b.student_id) {
                return a.student_id < b.student_id;
              }
              return a.order < b.order;
            });

  CvReport report;
  report.model_name = model.name();
  report.seed = seed;
  report.k = k;
  std::vector<double> pooled_predictions;
  std::vector<int> pooled_outcomes;

  for (int fold = 0; fold < k; ++fold) {
    std::vector<StepRecord> train;
    for (const auto& step : sorted) {
      if (folds.item_to_fold.at(step.item_id) != fold) {
        train.push_back(step);
      }
    }
    if (train.empty()) {
      throw ValidationError("cross_validate: fold " + std::to_string(fold) +
                            " has zero training rows; k is too large for the "
                            "data");
    }
    const Design design = build_design(train, model);
    const AfmParams params = fit(design, fit_config);

    std::vector<double> fold_predictions;
    std::vector<int> fold_outcomes;
    std::map<std::string, int> train_opportunities;  // key: kc label, per student
    std::string current_student;
    for (const auto& step : sorted) {
      if (step.student_id != current_student) {
        train_opportunities.clear();
        current_student = step.student_id;
      }
      const bool held_out = folds.item_to_fold.at(step.item_id) == fold;
      if (held_out) {
        double z = 0.0;
        const auto student_it = design.student_index.find(step.student_id);
        if (student_it != design.student_index.end()) {
          z += params.theta[static_cast<std::size_t>(student_it->second)];
        }
        for (const auto& label : model.labels_for(step.item_id)) {
          const auto kc_it = design.kc_index.find(label);
          const auto opp_it = train_opportunities.find(label);
          const double opportunities =
              opp_it == train_opportunities.end()
                  ? 0.0
                  : static_cast<double>(opp_it->second);
          if (kc_it != design.kc_index.end()) {
            const auto kc = static_cast<std::size_t>(kc_it->second);
            z += params.beta[kc] + params.gamma[kc] * opportunities;
          }
          // unseen KC: beta and gamma stay at the prior mean 0
        }
        const double p = sigmoid(z);
        fold_predictions.push_back(p);
        fold_outcomes.push_back(step.outcome);
      } else {
        for (const auto& label : model.labels_for(step.item_id)) {
          ++train_opportunities[label];
        }
      }
    }
    report.fold_rmse.push_back(rmse(fold_predictions, fold_outcomes));
    pooled_predictions.insert(pooled_predictions.end(),
                              fold_predictions.begin(), fold_predictions.end());
    pooled_outcomes.insert(pooled_outcomes.end(), fold_outcomes.begin(),
                           fold_outcomes.end());
  }

  report.pooled_rmse = rmse(pooled_predictions, pooled_outcomes);
  double fold_sum = 0.0;
  for (const double value : report.fold_rmse) {
    fold_sum += value;
  }
  report.mean_fold_rmse = fold_sum / static_cast<double>(k);
  return report;
}

struct RepeatedCvResult {
  std::vector<CvReport> reports;  // seed order
  double mean_pooled_rmse = 0.0;
  double std_pooled_rmse = 0.0;  // sample std; 0 with the flag set when n = 1
  bool std_is_degenerate = false;
};

inline RepeatedCvResult repeated_cv(const std::vector<StepRecord>& steps,
                                    const KcModel& model, int k,
                                    const std::vector<std::uint64_t>& seeds,
                                    const FitConfig& fit_config) {
  if (seeds.empty()) {
    throw ValidationError("repeated_cv: seed list is empty");
  }
  std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) {
    throw ValidationError("repeated_cv: seeds must be distinct");
  }
  RepeatedCvResult result;
  for (const auto seed : seeds) {
    result.reports.push_back(cross_validate(steps, model, k, seed, fit_config));
  }
  double sum = 0.0;
  for (const auto& report : result.reports) {
    sum += report.pooled_rmse;
  }
  result.mean_pooled_rmse = sum / static_cast<double>(result.reports.size());
  if (result.reports.size() < 2) {
    result.std_pooled_rmse = 0.0;
    result.std_is_degenerate = true;
  } else {
    double ss = 0.0;
    for (const auto& report : result.reports) {
      const double d = report.pooled_rmse - result.mean_pooled_rmse;
      ss += d * d;
    }
    result.std_pooled_rmse =
        std::sqrt(ss / static_cast<double>(result.reports.size() - 1));
  }
  return result;
}

inline nlohmann::json report_to_json(const CvReport& report) {
  return {{"model_name", report.model_name},
          {"seed", report.seed},
          {"k", report.k},
          {"fold_rmse", report.fold_rmse},
          {"pooled_rmse", report.pooled_rmse},
          {"mean_fold_rmse", report.mean_fold_rmse}};
}

inline CvReport report_from_json(const nlohmann::json& doc) {
  CvReport report;
  try {
    report.model_name = doc.at("model_name").get<std::string>();
    report.seed = doc.at("seed").get<std::uint64_t>();
    report.k = doc.at("k").get<int>();
    report.fold_rmse = doc.at("fold_rmse").get<std::vector<double>>();
    report.pooled_rmse = doc.at("pooled_rmse").get<double>();
    report.mean_fold_rmse = doc.at("mean_fold_rmse").get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed CV report: ") + ex.what());
  }
  return report;
}

}  // namespace kcforge
