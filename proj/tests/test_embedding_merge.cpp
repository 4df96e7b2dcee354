#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "kcforge/cache.hpp"
#include "kcforge/embedding.hpp"
#include "kcforge/merge.hpp"
#include "kcforge/rng.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace kcforge;

namespace {

EmbeddingVector vec(std::vector<double> values) { return {std::move(values)}; }

// Unit vectors with the pairwise cosines of the worked example:
// (a,b) = 0.88, (a,c) = 0.60, (b,c) = 0.55.
std::map<std::string, EmbeddingVector> figure_vectors() {
  const double by = std::sqrt(1.0 - 0.88 * 0.88);
  const double cy = (0.55 - 0.88 * 0.60) / by;
  const double cz = std::sqrt(1.0 - 0.60 * 0.60 - cy * cy);
  return {{"a", vec({1.0, 0.0, 0.0})},
          {"b", vec({0.88, by, 0.0})},
          {"c", vec({0.60, cy, cz})}};
}

// Clustered random vectors: a few centers with noise, so pairwise sims spread
// across the thresholds of interest.
std::map<std::string, EmbeddingVector> random_vectors(SeededRng& rng,
                                                      std::size_t count,
                                                      std::size_t dim = 8) {
  const std::size_t centers = 1 + rng.bounded(4);
  std::vector<std::vector<double>> center_values;
  for (std::size_t c = 0; c < centers; ++c) {
    std::vector<double> center(dim);
    for (auto& x : center) {
      x = rng.normal();
    }
    center_values.push_back(center);
  }
  std::map<std::string, EmbeddingVector> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& center = center_values[rng.bounded(centers)];
    const double noise = 0.7 * rng.unit_real();
    EmbeddingVector v;
    v.values.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      v.values[d] = center[d] + noise * rng.normal();
    }
    bool any = false;
    for (const double x : v.values) {
      any = any || x != 0.0;
    }
    if (!any) {
      v.values[0] = 1.0;
    }
    out["L" + std::to_string(i)] = v;
  }
  return out;
}

std::size_t cluster_count(const MergePlan& plan) { return plan.clusters.size(); }

}  // namespace

TEST_CASE("cosine of a vector with itself is exactly 1") {
  const auto v = vec({1.0, 2.0, 3.0});
  CHECK(cosine_similarity(v, v) == 1.0);
}

TEST_CASE("cosine of orthogonal vectors is 0") {
  CHECK(cosine_similarity(vec({1.0, 0.0}), vec({0.0, 1.0})) == 0.0);
}

TEST_CASE("cosine reproduces the hand-computed 1/sqrt(2) case") {
  const double value =
      cosine_similarity(vec({1.0, 1.0, 0.0}), vec({1.0, 0.0, 0.0}));
  CHECK_THAT(value, Catch::Matchers::WithinAbs(0.70710678118654752, 1e-12));
}

TEST_CASE("cosine is exactly symmetric") {
  SeededRng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    EmbeddingVector u, v;
    for (int d = 0; d < 6; ++d) {
      u.values.push_back(rng.normal());
      v.values.push_back(rng.normal());
    }
    CHECK(cosine_similarity(u, v) == cosine_similarity(v, u));
  }
}

TEST_CASE("cosine is invariant under positive scaling") {
  SeededRng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    EmbeddingVector u, v;
    for (int d = 0; d < 6; ++d) {
      u.values.push_back(rng.normal());
      v.values.push_back(rng.normal());
    }
    const double alpha = 0.01 + 10.0 * rng.unit_real();
    EmbeddingVector scaled = u;
    for (auto& x : scaled.values) {
      x *= alpha;
    }
    CHECK_THAT(cosine_similarity(scaled, v),
               Catch::Matchers::WithinAbs(cosine_similarity(u, v), 1e-12));
  }
}

TEST_CASE("cosine rejects zero-norm and mismatched inputs") {
  CHECK_THROWS_AS(cosine_similarity(vec({0.0, 0.0}), vec({1.0, 0.0})),
                  DomainError);
  CHECK_THROWS_AS(cosine_similarity(vec({1.0}), vec({1.0, 0.0})),
                  ContractError);
}

TEST_CASE("local embedder is deterministic, unit-norm and non-zero") {
  LocalNgramEmbedder embedder;
  const auto first = embedder.embed({"abc"});
  const auto second = embedder.embed({"abc"});
  REQUIRE(first.size() == 1);
  CHECK(first[0] == second[0]);
  CHECK_THAT(l2_norm(first[0]), Catch::Matchers::WithinAbs(1.0, 1e-12));
  validate(first[0]);  // throws on all-zero / non-finite
}

TEST_CASE("local embedder puts near-duplicates closer than strangers") {
  LocalNgramEmbedder embedder;
  const auto vs = embedder.embed({"explain random assignment basics",
                                  "explain random assignment basic",
                                  "photosynthesis energy transfer"});
  CHECK(cosine_similarity(vs[0], vs[1]) > cosine_similarity(vs[0], vs[2]));
}

TEST_CASE("embed_labels returns one vector per label") {
  LocalNgramEmbedder embedder;
  const auto vectors = embed_labels({"only-label"}, embedder);
  CHECK(vectors.size() == 1);
  CHECK(vectors.count("only-label") == 1);
}

TEST_CASE("embed_labels validates inputs") {
  LocalNgramEmbedder embedder;
  CHECK_THROWS_AS(embed_labels({}, embedder), ValidationError);
  CHECK_THROWS_AS(embed_labels({"a", "a"}, embedder), ValidationError);
  CHECK_THROWS_AS(embed_labels({""}, embedder), ValidationError);
}

namespace {

struct CountingEmbedder : EmbeddingClient {
  LocalNgramEmbedder inner;
  int calls = 0;
  std::vector<EmbeddingVector> embed(
      const std::vector<std::string>& inputs) override {
    ++calls;
    return inner.embed(inputs);
  }
};

}  // namespace

TEST_CASE("a warm embedding cache serves repeats without backend calls") {
  const auto dir = test::scratch_dir("embed-cache");
  ResponseCache cache(dir);
  CountingEmbedder backend;
  CachingEmbeddingClient client(backend, cache, "local-ngram");
  const auto first = embed_labels({"alpha", "beta"}, client);
  CHECK(backend.calls == 1);
  const auto second = embed_labels({"alpha", "beta"}, client);
  CHECK(backend.calls == 1);  // all hits
  CHECK(first.at("alpha") == second.at("alpha"));
  // a partially warm cache only forwards the misses
  const auto third = embed_labels({"alpha", "gamma"}, client);
  CHECK(backend.calls == 2);
  CHECK(third.at("alpha") == first.at("alpha"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("merge at 0.8 joins the 0.88 pair and leaves the 0.60 label alone") {
  const auto vectors = figure_vectors();
  // fixture sanity: the constructed cosines are the ones claimed
  CHECK_THAT(cosine_similarity(vectors.at("a"), vectors.at("b")),
             Catch::Matchers::WithinAbs(0.88, 1e-12));
  CHECK_THAT(cosine_similarity(vectors.at("a"), vectors.at("c")),
             Catch::Matchers::WithinAbs(0.60, 1e-12));
  CHECK_THAT(cosine_similarity(vectors.at("b"), vectors.at("c")),
             Catch::Matchers::WithinAbs(0.55, 1e-12));

  const MergePlan plan = build_merge_plan(vectors, 0.8);
  CHECK(test::plan_clusters(plan) ==
        std::set<std::set<std::string>>{{"a", "b"}, {"c"}});
  CHECK(plan.provenance.at("a") == plan.provenance.at("b"));
  CHECK(plan.provenance.at("c") == "c");
}

TEST_CASE("chains merge transitively through connected components") {
  // (a,b) and (b,c) clear 0.8 but (a,c) does not; one cluster regardless
  const double y = std::sqrt(1.0 - 0.85 * 0.85);
  std::map<std::string, EmbeddingVector> vectors = {
      {"a", vec({0.85, -y, 0.0})},
      {"b", vec({1.0, 0.0, 0.0})},
      {"c", vec({0.85, y, 0.0})}};
  CHECK(cosine_similarity(vectors.at("a"), vectors.at("c")) < 0.8);
  const MergePlan plan = build_merge_plan(vectors, 0.8);
  CHECK(test::plan_clusters(plan) ==
        std::set<std::set<std::string>>{{"a", "b", "c"}});
}

TEST_CASE("threshold 1 with distinct vectors keeps every label apart") {
  const MergePlan plan = build_merge_plan(figure_vectors(), 1.0);
  CHECK(cluster_count(plan) == 3);
}

TEST_CASE("threshold 1 still merges bitwise-identical vectors") {
  std::map<std::string, EmbeddingVector> vectors = {
      {"same one", vec({0.3, 0.4, 0.5})},
      {"same two", vec({0.3, 0.4, 0.5})},
      {"other", vec({-0.5, 0.1, 0.2})}};
  const MergePlan plan = build_merge_plan(vectors, 1.0);
  CHECK(test::plan_clusters(plan) ==
        std::set<std::set<std::string>>{{"same one", "same two"}, {"other"}});
}

TEST_CASE("canonical label prefers usage, then brevity, then lex order") {
  std::map<std::string, EmbeddingVector> vectors = {
      {"Explain random assignment", vec({1.0, 0.0})},
      {"Explain random assignment in experimental design", vec({1.0, 0.0})}};

  SECTION("the label mapped to more items wins even when longer") {
    const std::map<std::string, std::size_t> usage = {
        {"Explain random assignment", 1},
        {"Explain random assignment in experimental design", 3}};
    const MergePlan plan = build_merge_plan(vectors, 0.9, usage);
    REQUIRE(cluster_count(plan) == 1);
    CHECK(plan.canonical[0] ==
          "Explain random assignment in experimental design");
  }

  SECTION("on tied usage the shorter phrasing survives") {
    const MergePlan plan = build_merge_plan(vectors, 0.9);
    REQUIRE(cluster_count(plan) == 1);
    CHECK(plan.canonical[0] == "Explain random assignment");
  }

  SECTION("equal length falls back to lexicographic order") {
    std::map<std::string, EmbeddingVector> tie = {
        {"label b", vec({1.0, 0.0})}, {"label a", vec({1.0, 0.0})}};
    const MergePlan plan = build_merge_plan(tie, 0.9);
    REQUIRE(cluster_count(plan) == 1);
    CHECK(plan.canonical[0] == "label a");
  }
}

TEST_CASE("apply_merge rewrites items through provenance") {
  const KcModel model("m", {{"q1", {"A"}}, {"q2", {"B"}}});
  MergePlan plan;
  plan.threshold = 0.8;
  plan.clusters = {{"A", "B"}};
  plan.canonical = {"A"};
  plan.provenance = {{"A", "A"}, {"B", "A"}};
  const KcModel merged = apply_merge(model, plan);
  CHECK(merged.label_count() == 1);
  CHECK(merged.labels_for("q1") == std::set<std::string>{"A"});
  CHECK(merged.labels_for("q2") == std::set<std::string>{"A"});
  CHECK(merged.item_count() == model.item_count());
}

TEST_CASE("an identity plan leaves the model unchanged") {
  const KcModel model("m", {{"q1", {"A"}}, {"q2", {"B"}}});
  LocalNgramEmbedder embedder;
  const auto vectors = embed_labels({"A", "B"}, embedder);
  // local n-gram vectors for two distinct labels are never identical here
  const MergePlan plan = build_merge_plan(vectors, 1.0, model.label_usage());
  CHECK(apply_merge(model, plan) == model);
}

TEST_CASE("apply_merge rejects labels missing from the plan") {
  const KcModel model("m", {{"q1", {"A"}}, {"q2", {"Z"}}});
  MergePlan plan;
  plan.clusters = {{"A"}};
  plan.canonical = {"A"};
  plan.provenance = {{"A", "A"}};
  CHECK_THROWS_AS(apply_merge(model, plan), ContractError);
}

TEST_CASE("duplicate labels inside one item collapse after the rewrite") {
  const KcModel model("m", {{"q1", {"A", "B"}}});
  MergePlan plan;
  plan.clusters = {{"A", "B"}};
  plan.canonical = {"B"};
  plan.provenance = {{"A", "B"}, {"B", "B"}};
  const KcModel merged = apply_merge(model, plan);
  CHECK(merged.labels_for("q1") == std::set<std::string>{"B"});
}

TEST_CASE("threshold_sweep produces independent models per threshold") {
  SeededRng rng(23);
  const auto vectors = random_vectors(rng, 10);
  KcModel::Mapping mapping;
  int item = 0;
  for (const auto& [label, vector] : vectors) {
    mapping["q" + std::to_string(item++)] = {label};
  }
  const KcModel model("sweep", mapping);
  const auto swept = threshold_sweep(model, vectors, {0.9, 0.8, 0.7});
  REQUIRE(swept.size() == 3);
  CHECK(swept[0].first == 0.9);
  CHECK(swept[0].second.label_count() >= swept[1].second.label_count());
  CHECK(swept[1].second.label_count() >= swept[2].second.label_count());

  CHECK(threshold_sweep(model, vectors, {0.8}).size() == 1);
  CHECK(threshold_sweep(model, vectors, {}).empty());
}

TEST_CASE("merge plans are exact partitions with consistent provenance") {
  SeededRng rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t count = 2 + rng.bounded(11);
    const auto vectors = random_vectors(rng, count);
    const double threshold = -1.0 + 2.0 * rng.unit_real();
    const MergePlan plan = build_merge_plan(vectors, threshold);

    std::set<std::string> seen;
    for (std::size_t c = 0; c < plan.clusters.size(); ++c) {
      CHECK_FALSE(plan.clusters[c].empty());
      bool canonical_inside = false;
      for (const auto& member : plan.clusters[c]) {
        CHECK(seen.insert(member).second);  // disjoint
        CHECK(plan.provenance.at(member) == plan.canonical[c]);
        canonical_inside = canonical_inside || member == plan.canonical[c];
      }
      CHECK(canonical_inside);
    }
    CHECK(seen.size() == vectors.size());  // covering
  }
}

TEST_CASE("union-find clusters equal brute-force transitive closure") {
  SeededRng rng(1234);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t count = 2 + rng.bounded(11);
    const auto vectors = random_vectors(rng, count);
    for (const double threshold : {0.9, 0.8, 0.7}) {
      const MergePlan plan = build_merge_plan(vectors, threshold);
      CHECK(test::plan_clusters(plan) ==
            test::transitive_closure_clusters(vectors, threshold));
    }
  }
}

TEST_CASE("a higher threshold refines a lower one and never merges more") {
  SeededRng rng(555);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t count = 2 + rng.bounded(11);
    const auto vectors = random_vectors(rng, count);
    const MergePlan high = build_merge_plan(vectors, 0.9);
    const MergePlan mid = build_merge_plan(vectors, 0.8);
    const MergePlan low = build_merge_plan(vectors, 0.7);

    CHECK(cluster_count(high) >= cluster_count(mid));
    CHECK(cluster_count(mid) >= cluster_count(low));

    const auto refines = [](const MergePlan& fine, const MergePlan& coarse) {
      for (const auto& cluster : fine.clusters) {
        const std::string& canonical_member = cluster.front();
        const std::string& coarse_rep =
            coarse.provenance.at(canonical_member);
        for (const auto& member : cluster) {
          if (coarse.provenance.at(member) != coarse_rep) {
            return false;
          }
        }
      }
      return true;
    };
    CHECK(refines(high, mid));
    CHECK(refines(mid, low));
  }
}

TEST_CASE("merge plan serializes as a sorted two-column TSV") {
  const MergePlan plan = build_merge_plan(figure_vectors(), 0.8);
  std::ostringstream out;
  write_merge_plan(plan, out);
  std::string expected = "original_label\tcanonical_label\n";
  expected += "a\ta\nb\ta\nc\tc\n";
  CHECK(out.str() == expected);
}
