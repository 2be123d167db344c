#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fixtures.hpp"
#include "librarian/clustering.hpp"
#include "librarian/errors.hpp"

using namespace librarian;
using namespace librarian::clustering;

namespace {

using Vectors = std::vector<std::pair<std::string, std::vector<double>>>;

std::string uid(std::size_t i) {
  return (i < 10 ? "u0" : "u") + std::to_string(i);
}

Vectors random_vectors(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Vectors v;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(dim);
    for (auto& c : x) c = nd(rng);
    v.emplace_back(uid(i), x);
  }
  return v;
}

void check_partition(const ClusterPlan& plan, std::size_t n, std::size_t s) {
  std::vector<std::string> all;
  std::size_t short_groups = 0;
  for (const auto& c : plan.clusters) {
    CHECK(std::is_sorted(c.begin(), c.end()));
    all.insert(all.end(), c.begin(), c.end());
    if (c.size() != s) {
      ++short_groups;
      CHECK(c.size() == n % s);
    }
  }
  CHECK(short_groups == (n % s == 0 ? 0u : 1u));
  CHECK(plan.clusters.size() == (n + s - 1) / s);
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  CHECK(all.size() == n);
}

double sq(double x) { return x * x; }

}  // namespace

TEST_CASE("ward linkage matches reference") {
  const Json ref = fixtures::json("clustering/ward.expected.json");
  const auto points = ref.at("points").get<std::vector<std::vector<double>>>();
  const auto merges = ward_linkage(points);
  REQUIRE(merges.size() == ref.at("linkage").size());
  for (std::size_t i = 0; i < merges.size(); ++i) {
    const auto& r = ref.at("linkage").at(i);
    CAPTURE(i);
    CHECK(merges[i].left == r.at(0).get<std::size_t>());
    CHECK(merges[i].right == r.at(1).get<std::size_t>());
    CHECK(merges[i].height == doctest::Approx(r.at(2).get<double>()).epsilon(1e-12));
    CHECK(merges[i].size == r.at(3).get<std::size_t>());
  }
}

TEST_CASE("ward linkage rejects ragged input") {
  CHECK_THROWS_AS(ward_linkage({{1.0, 2.0}, {1.0}}), DimensionMismatch);
  CHECK(ward_linkage({{1.0}}).empty());
}

TEST_CASE("fixed-size clusters partition the units") {
  std::mt19937_64 rng(7);
  for (std::size_t n : {3u, 4u, 7u, 9u, 10u, 16u, 23u}) {
    for (std::size_t s : {1u, 2u, 3u, 5u}) {
      if (n < s) continue;
      CAPTURE(n);
      CAPTURE(s);
      check_partition(cluster_fixed_size(random_vectors(n, 4, rng), s), n, s);
    }
  }
}

TEST_CASE("identical vectors group in id order") {
  Vectors v;
  for (std::size_t i = 0; i < 7; ++i) v.emplace_back(uid(i), std::vector<double>{1.0, 1.0});
  const auto plan = cluster_fixed_size(v, 3);
  check_partition(plan, 7, 3);
  const auto again = cluster_fixed_size(v, 3);
  CHECK(plan == again);
}

TEST_CASE("well separated blobs recover the best split") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.05);
  Vectors v;
  const std::vector<std::vector<double>> centers{{0, 0}, {10, 0}, {0, 10}};
  for (std::size_t i = 0; i < 9; ++i) {
    const auto& c = centers[i % 3];
    v.emplace_back(uid(i), std::vector<double>{c[0] + noise(rng), c[1] + noise(rng)});
  }
  const auto plan = cluster_fixed_size(v, 3);

  // Exhaustive search over 3-way equal partitions for the minimum within-group scatter.
  auto scatter = [&](const std::vector<std::vector<std::size_t>>& groups) {
    double total = 0.0;
    for (const auto& g : groups) {
      double mx = 0, my = 0;
      for (auto i : g) mx += v[i].second[0], my += v[i].second[1];
      mx /= g.size(), my /= g.size();
      for (auto i : g) total += sq(v[i].second[0] - mx) + sq(v[i].second[1] - my);
    }
    return total;
  };
  std::vector<int> label{0, 0, 0, 1, 1, 1, 2, 2, 2};
  double best = std::numeric_limits<double>::infinity();
  std::set<std::set<std::string>> best_sets;
  do {
    std::vector<std::vector<std::size_t>> groups(3);
    for (std::size_t i = 0; i < 9; ++i) groups[label[i]].push_back(i);
    const double s = scatter(groups);
    if (s < best - 1e-12) {
      best = s;
      best_sets.clear();
      for (const auto& g : groups) {
        std::set<std::string> ids;
        for (auto i : g) ids.insert(v[i].first);
        best_sets.insert(ids);
      }
    }
  } while (std::next_permutation(label.begin(), label.end()));

  std::set<std::set<std::string>> got;
  for (const auto& c : plan.clusters) got.insert(std::set<std::string>(c.begin(), c.end()));
  CHECK(got == best_sets);
}

TEST_CASE("clustering is invariant to input order") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto v = random_vectors(11, 3, rng);
    const auto plan = cluster_fixed_size(v, 3);
    std::shuffle(v.begin(), v.end(), rng);
    CHECK(cluster_fixed_size(v, 3) == plan);
  }
}

TEST_CASE("cluster size preconditions") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(cluster_fixed_size(random_vectors(4, 2, rng), 0), Error);
  CHECK_THROWS_AS(cluster_fixed_size(random_vectors(2, 2, rng), 3), Error);
  Vectors ragged{{"a", {1.0, 2.0}}, {"b", {1.0}}, {"c", {0.0, 0.0}}};
  CHECK_THROWS_AS(cluster_fixed_size(ragged, 3), DimensionMismatch);
}

TEST_CASE("plan json round trip and first_units") {
  std::mt19937_64 rng(5);
  const auto plan = cluster_fixed_size(random_vectors(10, 2, rng), 3);
  const Json j = plan;
  CHECK(j.get<ClusterPlan>() == plan);
  const auto head = first_units(plan, 7);
  std::size_t expect = 0, covered = 0;
  while (expect < plan.clusters.size() && covered + plan.clusters[expect].size() <= 7) covered += plan.clusters[expect++].size();
  CHECK(head.clusters.size() == expect);
  CHECK(std::equal(head.clusters.begin(), head.clusters.end(), plan.clusters.begin()));
  CHECK(first_units(plan, 100).clusters == plan.clusters);
}

TEST_CASE("summaries and sloc filter") {
  gateway::Gateway gw(gateway::GatewayConfig{});
  SourceUnit with{"a", "x = 1\n", "t", std::string("reads a number")};
  CHECK(summarize(with, gw) == "reads a number");
  CHECK(gw.stats().requests == 0);
  SourceUnit without{"b", "def parse_grid(s):\n    return s.split()\n", "t", std::nullopt};
  CHECK(summary_prompt(without).find("reusable") != std::string::npos);
  CHECK_FALSE(summarize(without, gw).empty());

  std::string long_code;
  for (int i = 0; i < 12; ++i) long_code += "x" + std::to_string(i) + " = " + std::to_string(i) + "\n";
  std::vector<SourceUnit> units{{"short", "x = 1\n", "t", std::nullopt},
                                {"long", long_code, "t", std::nullopt},
                                {"broken", "def (:\n", "t", std::nullopt}};
  CHECK(filter_min_sloc(units, 10) == std::vector<std::string>{"long", "broken"});
}

TEST_CASE("tag entropy") {
  std::map<std::string, std::set<std::string>> tags{
      {"p1", {"a"}}, {"p2", {"a"}}, {"p3", {"a", "b"}}, {"p4", {"c"}}, {"p5", {"d"}}, {"p6", {"e"}}, {"p7", {"f"}},
  };
  const auto prof = make_tag_profile({{"p1"}, {"p1", "p2", "p3"}, {"p4", "p5", "p6", "p7"}}, tags);
  CHECK(tag_entropy(prof, 0) == 0.0);
  CHECK(tag_entropy(prof, 1) == doctest::Approx(0.811278).epsilon(1e-6));
  CHECK(tag_entropy(prof, 2) == doctest::Approx(1.0));
}

TEST_CASE("herfindahl index") {
  std::map<std::string, std::set<std::string>> tags{
      {"p1", {"a"}}, {"p2", {"a"}}, {"p3", {"a"}}, {"p4", {"b"}}, {"p5", {"a", "b"}}, {"p6", {"a", "b"}},
  };
  const auto prof = make_tag_profile({{"p1", "p2"}, {"p3", "p4"}, {"p5", "p6"}}, tags);
  CHECK(hhi(prof, 0) == doctest::Approx(1.0));
  CHECK(hhi(prof, 1) == doctest::Approx(0.5));
  CHECK(hhi(prof, 2) == doctest::Approx(2.0));
}

TEST_CASE("random tag profiles stay in range") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> ntags(0, 5), which(0, 9), size(1, 6);
  for (int trial = 0; trial < 10000; ++trial) {
    std::map<std::string, std::set<std::string>> tags;
    std::vector<std::string> cluster;
    const int n = size(rng);
    for (int i = 0; i < n; ++i) {
      const std::string id = "p" + std::to_string(i);
      cluster.push_back(id);
      for (int k = ntags(rng); k > 0; --k) tags[id].insert("t" + std::to_string(which(rng)));
    }
    const auto prof = make_tag_profile({cluster}, tags);
    const double h = tag_entropy(prof, 0);
    REQUIRE(h >= 0.0);
    REQUIRE(h <= 1.0);
    REQUIRE(hhi(prof, 0) >= 0.0);
  }
}

TEST_CASE("semantic clusters are more homogeneous than random groupings") {
  // Units of the same topic share embedding direction and tag; clustering
  // should beat a random partition on both entropy and concentration.
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.3);
    Vectors v;
    std::map<std::string, std::set<std::string>> tags;
    for (std::size_t i = 0; i < 12; ++i) {
      const std::size_t topic = i % 4;
      std::vector<double> x(4, 0.0);
      x[topic] = 1.0;
      for (auto& c : x) c += noise(rng);
      v.emplace_back(uid(i), x);
      tags[uid(i)] = {"topic" + std::to_string(topic)};
    }
    const auto plan = cluster_fixed_size(v, 3);
    std::vector<std::string> ids;
    for (const auto& [id, x] : v) ids.push_back(id);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<std::vector<std::string>> random_groups;
    for (std::size_t i = 0; i < ids.size(); i += 3) random_groups.emplace_back(ids.begin() + i, ids.begin() + i + 3);

    auto mean = [&](const std::vector<std::vector<std::string>>& groups, auto fn) {
      const auto prof = make_tag_profile(groups, tags);
      double sum = 0.0;
      for (std::size_t c = 0; c < groups.size(); ++c) sum += fn(prof, c);
      return sum / static_cast<double>(groups.size());
    };
    const double h_sem = mean(plan.clusters, tag_entropy), h_rand = mean(random_groups, tag_entropy);
    const double c_sem = mean(plan.clusters, hhi), c_rand = mean(random_groups, hhi);
    if (h_sem <= h_rand && c_sem >= c_rand) ++wins;
  }
  CHECK(wins >= 95);
}
