#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "kcforge/evaluation.hpp"
#include "kcforge/synthetic.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace kcforge;

namespace {

std::vector<std::string> item_names(int count) {
  std::vector<std::string> items;
  for (int i = 0; i < count; ++i) {
    items.push_back("q" + std::to_string(i));
  }
  return items;
}

std::map<int, int> fold_sizes(const FoldAssignment& folds) {
  std::map<int, int> sizes;
  for (int f = 0; f < folds.k; ++f) {
    sizes[f] = 0;
  }
  for (const auto& [item, fold] : folds.item_to_fold) {
    ++sizes[fold];
  }
  return sizes;
}

}  // namespace

TEST_CASE("9 items split into three folds of 3") {
  const auto folds = make_item_blocked_folds(item_names(9), 3, 1);
  for (const auto& [fold, size] : fold_sizes(folds)) {
    CHECK(size == 3);
  }
}

TEST_CASE("10 items over 3 folds give sizes {4,3,3}") {
  const auto folds = make_item_blocked_folds(item_names(10), 3, 1);
  std::multiset<int> sizes;
  for (const auto& [fold, size] : fold_sizes(folds)) {
    sizes.insert(size);
  }
  CHECK(sizes == std::multiset<int>{3, 3, 4});
}

TEST_CASE("fold assignment is deterministic in (items, k, seed)") {
  const auto items = item_names(17);
  const auto first = make_item_blocked_folds(items, 4, 99);
  const auto second = make_item_blocked_folds(items, 4, 99);
  CHECK(first.item_to_fold == second.item_to_fold);
  const auto other_seed = make_item_blocked_folds(items, 4, 100);
  CHECK(first.item_to_fold != other_seed.item_to_fold);
}

TEST_CASE("fewer items than folds is an error") {
  CHECK_THROWS_AS(make_item_blocked_folds(item_names(2), 3, 0),
                  ValidationError);
}

TEST_CASE("fold partitions are balanced and complete across random draws") {
  SeededRng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int count = 2 + static_cast<int>(rng.bounded(60));
    const int k =
        2 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(count - 1)));
    const auto items = item_names(count);
    const auto folds = make_item_blocked_folds(items, k, rng.next_u64());
    CHECK(folds.item_to_fold.size() == items.size());
    int min_size = count;
    int max_size = 0;
    int total = 0;
    for (const auto& [fold, size] : fold_sizes(folds)) {
      min_size = std::min(min_size, size);
      max_size = std::max(max_size, size);
      total += size;
    }
    CHECK(total == count);
    CHECK(max_size - min_size <= 1);
    for (const auto& [item, fold] : folds.item_to_fold) {
      CHECK(fold >= 0);
      CHECK(fold < k);
    }
  }
}

TEST_CASE("rmse of perfect predictions is 0") {
  CHECK(rmse({1.0, 0.0, 1.0}, {1, 0, 1}) == 0.0);
}

TEST_CASE("rmse of constant 0.5 predictions is 0.5") {
  CHECK(rmse({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 1}) == 0.5);
}

TEST_CASE("rmse reproduces the hand-computed two-point case") {
  CHECK_THAT(rmse({0.8, 0.3}, {1, 0}),
             Catch::Matchers::WithinAbs(0.25495097567963924, 1e-12));
}

TEST_CASE("rmse rejects empty or mismatched inputs") {
  CHECK_THROWS_AS(rmse({}, {}), ValidationError);
  CHECK_THROWS_AS(rmse({0.5}, {1, 0}), ValidationError);
}

TEST_CASE("rmse stays in [0,1] for probability predictions") {
  SeededRng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> predictions;
    std::vector<int> outcomes;
    const int n = 1 + static_cast<int>(rng.bounded(30));
    for (int i = 0; i < n; ++i) {
      predictions.push_back(rng.unit_real());
      outcomes.push_back(static_cast<int>(rng.bounded(2)));
    }
    const double value = rmse(predictions, outcomes);
    CHECK(value >= 0.0);
    CHECK(value <= 1.0);
  }
}

TEST_CASE("cross_validate rejects k=1 and unmapped items") {
  const auto data = test::two_kc_dataset(1, 6, 6, 4);
  CHECK_THROWS_AS(
      cross_validate(data.steps, data.true_model, 1, 0, FitConfig{}),
      ValidationError);

  const KcModel partial("partial", {{"i00", {"kc"}}});
  CHECK_THROWS_MATCHES(
      cross_validate(data.steps, partial, 2, 0, FitConfig{}), ValidationError,
      Catch::Matchers::MessageMatches(
          Catch::Matchers::ContainsSubstring("not mapped")));
}

TEST_CASE("cross_validate is deterministic") {
  const auto data = test::two_kc_dataset(5, 12, 8, 8);
  const CvReport first =
      cross_validate(data.steps, data.true_model, 3, 42, FitConfig{});
  const CvReport second =
      cross_validate(data.steps, data.true_model, 3, 42, FitConfig{});
  CHECK(report_to_json(first).dump() == report_to_json(second).dump());
}

TEST_CASE("held-out predictions use training-only opportunity counts and "
          "prior-mean parameters for unseen students") {
  // s1 attempts q1 then q2; s2 attempts only q2. Whatever fold holds q2 out
  // trains on q1 alone, so s2 is unseen there and s1's count on the KC is 1.
  const std::vector<StepRecord> steps = {
      {"s1", "q1", 0, 1}, {"s1", "q2", 1, 0}, {"s2", "q2", 0, 1}};
  const KcModel model("m", {{"q1", {"A"}}, {"q2", {"A"}}});
  FitConfig fit_config;
  const std::uint64_t seed = 4;
  const CvReport report = cross_validate(steps, model, 2, seed, fit_config);

  const auto folds = make_item_blocked_folds({"q1", "q2"}, 2, seed);
  std::vector<double> expected_fold_rmse(2, 0.0);
  for (int fold = 0; fold < 2; ++fold) {
    std::vector<StepRecord> train;
    for (const auto& step : steps) {
      if (folds.item_to_fold.at(step.item_id) != fold) {
        train.push_back(step);
      }
    }
    const Design design = build_design(train, model);
    const AfmParams params = fit(design, fit_config);
    auto theta = [&](const std::string& s) {
      const auto it = design.student_index.find(s);
      return it == design.student_index.end()
                 ? 0.0
                 : params.theta[static_cast<std::size_t>(it->second)];
    };
    std::vector<double> predictions;
    std::vector<int> outcomes;
    if (folds.item_to_fold.at("q1") == fold) {
      // held out: s1's very first step; no prior training opportunities
      predictions.push_back(sigmoid(theta("s1") + params.beta[0]));
      outcomes.push_back(1);
    } else {
      // held out: q2 rows; s1 has one prior training step on A, s2 none
      predictions.push_back(
          sigmoid(theta("s1") + params.beta[0] + params.gamma[0] * 1.0));
      outcomes.push_back(0);
      predictions.push_back(sigmoid(theta("s2") + params.beta[0]));
      outcomes.push_back(1);
    }
    expected_fold_rmse[static_cast<std::size_t>(fold)] =
        rmse(predictions, outcomes);
  }
  REQUIRE(report.fold_rmse.size() == 2);
  CHECK_THAT(report.fold_rmse[0],
             Catch::Matchers::WithinAbs(expected_fold_rmse[0], 1e-12));
  CHECK_THAT(report.fold_rmse[1],
             Catch::Matchers::WithinAbs(expected_fold_rmse[1], 1e-12));
}

TEST_CASE("no held-out item ever contributes training rows") {
  const auto data = test::two_kc_dataset(9, 10, 12, 10);
  std::set<std::string> items;
  for (const auto& step : data.steps) {
    items.insert(step.item_id);
  }
  const auto folds = make_item_blocked_folds(
      std::vector<std::string>(items.begin(), items.end()), 3, 77);
  for (int fold = 0; fold < folds.k; ++fold) {
    std::set<std::string> train_items;
    std::set<std::string> test_items;
    for (const auto& step : data.steps) {
      if (folds.item_to_fold.at(step.item_id) == fold) {
        test_items.insert(step.item_id);
      } else {
        train_items.insert(step.item_id);
      }
    }
    for (const auto& item : test_items) {
      CHECK(train_items.count(item) == 0);
    }
    CHECK(train_items.size() + test_items.size() == items.size());
  }
}

TEST_CASE("the generating 2-KC model beats the collapsed model on pooled "
          "RMSE in at least 9 of 10 seeds") {
  const auto data = test::two_kc_dataset(2024);
  FitConfig fit_config;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double true_rmse =
        cross_validate(data.steps, data.true_model, 3, seed, fit_config)
            .pooled_rmse;
    const double collapsed_rmse =
        cross_validate(data.steps, data.collapsed_model, 3, seed, fit_config)
            .pooled_rmse;
    if (true_rmse < collapsed_rmse) {
      ++wins;
    }
  }
  CHECK(wins >= 9);
}

TEST_CASE("repeated_cv returns one report per seed with summary statistics") {
  const auto data = test::two_kc_dataset(31, 10, 8, 8);
  const std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const RepeatedCvResult result =
      repeated_cv(data.steps, data.true_model, 3, seeds, FitConfig{});
  REQUIRE(result.reports.size() == 10);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    CHECK(result.reports[i].seed == seeds[i]);
  }
  CHECK_FALSE(result.std_is_degenerate);
  CHECK(result.std_pooled_rmse >= 0.0);
  double sum = 0.0;
  for (const auto& report : result.reports) {
    sum += report.pooled_rmse;
  }
  CHECK_THAT(result.mean_pooled_rmse,
             Catch::Matchers::WithinAbs(sum / 10.0, 1e-15));
}

TEST_CASE("repeated_cv rejects duplicate seeds") {
  const auto data = test::two_kc_dataset(33, 8, 6, 6);
  CHECK_THROWS_AS(
      repeated_cv(data.steps, data.true_model, 2, {1, 1}, FitConfig{}),
      ValidationError);
}

TEST_CASE("a single seed yields its own mean and a flagged zero std") {
  const auto data = test::two_kc_dataset(35, 8, 6, 6);
  const RepeatedCvResult result =
      repeated_cv(data.steps, data.true_model, 2, {7}, FitConfig{});
  REQUIRE(result.reports.size() == 1);
  CHECK(result.mean_pooled_rmse == result.reports[0].pooled_rmse);
  CHECK(result.std_pooled_rmse == 0.0);
  CHECK(result.std_is_degenerate);
}

TEST_CASE("permuting the seed list permutes the reports, nothing more") {
  const auto data = test::two_kc_dataset(37, 8, 6, 6);
  const auto forward =
      repeated_cv(data.steps, data.true_model, 2, {1, 2, 3}, FitConfig{});
  const auto backward =
      repeated_cv(data.steps, data.true_model, 2, {3, 2, 1}, FitConfig{});
  for (const auto& report : forward.reports) {
    bool found = false;
    for (const auto& other : backward.reports) {
      if (other.seed == report.seed) {
        found = report_to_json(other).dump() == report_to_json(report).dump();
      }
    }
    CHECK(found);
  }
  CHECK_THAT(forward.mean_pooled_rmse,
             Catch::Matchers::WithinAbs(backward.mean_pooled_rmse, 1e-15));
}

TEST_CASE("CV reports round-trip through JSON") {
  const auto data = test::two_kc_dataset(39, 8, 6, 6);
  const CvReport report =
      cross_validate(data.steps, data.true_model, 2, 5, FitConfig{});
  const CvReport parsed = report_from_json(report_to_json(report));
  CHECK(report_to_json(parsed).dump() == report_to_json(report).dump());
}
