#include "librarian/clustering.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "librarian/code/metrics.hpp"
#include "librarian/errors.hpp"
#include "librarian/protocol.hpp"

namespace librarian::clustering {

void to_json(Json& j, const ClusterPlan& p) {
  Json linkage = Json::array();
  for (const auto& m : p.linkage) linkage.push_back({m.left, m.right, m.height, m.size});
  j = Json{{"target_size", p.target_size}, {"clusters", p.clusters}, {"ids", p.ids}, {"linkage", linkage}};
}

void from_json(const Json& j, ClusterPlan& p) {
  j.at("target_size").get_to(p.target_size);
  j.at("clusters").get_to(p.clusters);
  p.ids = j.value("ids", std::vector<std::string>{});
  p.linkage.clear();
  for (const auto& m : j.value("linkage", Json::array())) {
    p.linkage.push_back({m.at(0).get<std::size_t>(), m.at(1).get<std::size_t>(), m.at(2).get<double>(),
                         m.at(3).get<std::size_t>()});
  }
}

namespace {

Eigen::MatrixXd as_matrix(const std::vector<std::vector<double>>& points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  const auto d = static_cast<Eigen::Index>(points.empty() ? 0 : points.front().size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(points[static_cast<std::size_t>(i)].size()) != d) {
      throw DimensionMismatch("embedding " + std::to_string(i) + " has dimension " +
                              std::to_string(points[static_cast<std::size_t>(i)].size()) + ", expected " +
                              std::to_string(d));
    }
    x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(points[static_cast<std::size_t>(i)].data(), d);
  }
  return x;
}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) dist(i, j) = (x.row(i) - x.row(j)).norm();
  }
  return dist;
}

struct Group {
  std::vector<std::size_t> members;  // node indices of the inputs
  std::size_t formed = 0;            // 0 for leaves, merge index + 1 otherwise
  std::size_t leaf_order = 0;
  std::size_t target = 0;
};

double mean_distance(const Eigen::MatrixXd& dist, std::size_t i, const std::vector<std::size_t>& members) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t m : members) {
    if (m == i) continue;
    sum += dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m));
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double silhouette(const Eigen::MatrixXd& dist, std::size_t i, std::size_t own, const std::vector<Group>& groups) {
  if (groups[own].members.size() <= 1) return 0.0;
  const double a = mean_distance(dist, i, groups[own].members);
  double b = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g == own || groups[g].members.empty()) continue;
    b = std::min(b, mean_distance(dist, i, groups[g].members));
  }
  if (!std::isfinite(b)) return 0.0;
  const double denom = std::max(a, b);
  return denom == 0.0 ? 0.0 : (b - a) / denom;
}

Eigen::RowVectorXd centroid(const Eigen::MatrixXd& x, const std::vector<std::size_t>& members) {
  Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(x.cols());
  for (std::size_t m : members) c += x.row(static_cast<Eigen::Index>(m));
  return c / static_cast<double>(members.size());
}

}  // namespace

std::vector<Merge> ward_linkage(const std::vector<std::vector<double>>& points) {
  const Eigen::MatrixXd x = as_matrix(points);
  const std::size_t n = points.size();
  Eigen::MatrixXd dist = pairwise_distances(x);
  // Active clusters: slot -> (node id, size). Slots are reused by the merged cluster.
  std::vector<std::size_t> node(n), size(n, 1);
  std::iota(node.begin(), node.end(), 0);
  std::vector<bool> active(n, true);
  std::vector<Merge> merges;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    std::pair<std::size_t, std::size_t> best_nodes{n * 2, n * 2};
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        const double d = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        std::pair<std::size_t, std::size_t> nodes = std::minmax(node[i], node[j]);
        if (d < best || (d == best && nodes < best_nodes)) {
          best = d;
          bi = i;
          bj = j;
          best_nodes = nodes;
        }
      }
    }
    const double su = static_cast<double>(size[bi]), sv = static_cast<double>(size[bj]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const auto K = static_cast<Eigen::Index>(k), I = static_cast<Eigen::Index>(bi), J = static_cast<Eigen::Index>(bj);
      const double sw = static_cast<double>(size[k]);
      const double d2 = ((sw + su) * dist(I, K) * dist(I, K) + (sw + sv) * dist(J, K) * dist(J, K) -
                         sw * best * best) /
                        (su + sv + sw);
      const double d = std::sqrt(std::max(0.0, d2));
      dist(I, K) = dist(K, I) = d;
    }
    merges.push_back({best_nodes.first, best_nodes.second, best, size[bi] + size[bj]});
    node[bi] = n + step;
    size[bi] += size[bj];
    active[bj] = false;
  }
  return merges;
}

ClusterPlan cluster_fixed_size(const std::vector<std::pair<std::string, std::vector<double>>>& vectors, std::size_t S) {
  if (S < 1) throw Error("cluster size must be at least 1");
  auto sorted = vectors;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].first == sorted[i - 1].first) throw Error("duplicate unit id " + sorted[i].first);
  }
  const std::size_t n = sorted.size();
  if (n < S) throw Error("need at least S=" + std::to_string(S) + " units, got " + std::to_string(n));

  ClusterPlan plan;
  plan.target_size = S;
  std::vector<std::vector<double>> points;
  for (auto& [id, v] : sorted) {
    plan.ids.push_back(id);
    points.push_back(v);
  }
  const Eigen::MatrixXd x = as_matrix(points);
  const Eigen::MatrixXd dist = pairwise_distances(x);
  plan.linkage = ward_linkage(points);

  // Cut: replay merges until ceil(n/S) groups remain.
  const std::size_t g = (n + S - 1) / S;
  std::map<std::size_t, Group> alive;
  for (std::size_t i = 0; i < n; ++i) alive[i] = Group{{i}, 0, i, 0};
  for (std::size_t m = 0; m < n - g; ++m) {
    const Merge& mg = plan.linkage[m];
    Group merged;
    merged.members = alive.at(mg.left).members;
    const auto& right = alive.at(mg.right).members;
    merged.members.insert(merged.members.end(), right.begin(), right.end());
    merged.formed = m + 1;
    merged.leaf_order = std::min(alive.at(mg.left).leaf_order, alive.at(mg.right).leaf_order);
    alive.erase(mg.left);
    alive.erase(mg.right);
    alive[n + m] = std::move(merged);
  }
  std::vector<Group> groups;
  for (auto& [node, grp] : alive) groups.push_back(std::move(grp));
  std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    return std::tie(a.formed, a.leaf_order) < std::tie(b.formed, b.leaf_order);
  });

  // Targets: S everywhere, except the remainder for the smallest group.
  for (auto& grp : groups) grp.target = S;
  if (const std::size_t rem = n % S; rem != 0) {
    auto smallest = std::min_element(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
      return a.members.size() < b.members.size();
    });
    smallest->target = rem;
  }

  // Rebalance: move the worst-silhouette point of an oversized group to the nearest undersized one.
  for (;;) {
    bool any_over = false;
    std::size_t best_point = 0, best_group = 0;
    double best_sil = std::numeric_limits<double>::infinity();
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      if (groups[gi].members.size() <= groups[gi].target) continue;
      any_over = true;
      for (std::size_t m : groups[gi].members) {
        const double s = silhouette(dist, m, gi, groups);
        if (s < best_sil || (s == best_sil && m > best_point)) {
          best_sil = s;
          best_point = m;
          best_group = gi;
        }
      }
    }
    if (!any_over) break;
    std::size_t dest = groups.size();
    double dest_d = std::numeric_limits<double>::infinity();
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      if (groups[gi].members.size() >= groups[gi].target) continue;
      const double d = groups[gi].members.empty()
                           ? 0.0
                           : (x.row(static_cast<Eigen::Index>(best_point)) - centroid(x, groups[gi].members)).norm();
      if (d < dest_d) {
        dest_d = d;
        dest = gi;
      }
    }
    auto& src = groups[best_group].members;
    src.erase(std::find(src.begin(), src.end(), best_point));
    groups[dest].members.push_back(best_point);
  }

  for (const auto& grp : groups) {
    std::vector<std::string> ids;
    for (std::size_t m : grp.members) ids.push_back(plan.ids[m]);
    std::sort(ids.begin(), ids.end());
    plan.clusters.push_back(std::move(ids));
  }
  return plan;
}

ClusterPlan cluster_fixed_size(const std::map<std::string, std::vector<double>>& vectors, std::size_t S) {
  return cluster_fixed_size(std::vector<std::pair<std::string, std::vector<double>>>(vectors.begin(), vectors.end()), S);
}

ClusterPlan first_units(const ClusterPlan& plan, std::size_t max_units) {
  ClusterPlan out = plan;
  out.clusters.clear();
  std::size_t covered = 0;
  for (const auto& c : plan.clusters) {
    if (covered + c.size() > max_units) break;
    out.clusters.push_back(c);
    covered += c.size();
  }
  return out;
}

std::string summary_prompt(const SourceUnit& unit) {
  std::string p =
      "Summarize the following program in a few sentences. Focus on the reusable components it contains: "
      "algorithms, data structures, parsing and output helpers that other programs could share. "
      "Do not restate the problem statement.\n\n";
  p += protocol::program_marker(unit.id) + "\n" + unit.code;
  if (!unit.code.ends_with('\n')) p += '\n';
  return p;
}

std::string summarize(const SourceUnit& unit, gateway::Gateway& gw) {
  if (unit.description && !unit.description->empty()) return *unit.description;
  return gw.sample(summary_prompt(unit), 1).front().text;
}

std::vector<std::string> filter_min_sloc(const std::vector<SourceUnit>& units, std::size_t min_sloc) {
  std::vector<std::string> kept;
  for (const auto& u : units) {
    try {
      if (code::parse(u.code).sloc < min_sloc) continue;
    } catch (const ParseError&) {
    }
    kept.push_back(u.id);
  }
  return kept;
}

TagProfile make_tag_profile(const std::vector<std::vector<std::string>>& clusters,
                            const std::map<std::string, std::set<std::string>>& tags) {
  TagProfile p;
  for (const auto& c : clusters) {
    std::map<std::string, std::int64_t> counts;
    std::vector<std::set<std::string>> presence;
    for (const auto& id : c) {
      auto it = tags.find(id);
      std::set<std::string> t = it == tags.end() ? std::set<std::string>{} : it->second;
      for (const auto& tag : t) ++counts[tag];
      presence.push_back(std::move(t));
    }
    p.instances.push_back(std::move(counts));
    p.presence.push_back(std::move(presence));
  }
  return p;
}

double tag_entropy(const TagProfile& profile, std::size_t cluster) {
  const auto& counts = profile.instances.at(cluster);
  std::int64_t total = 0, distinct = 0;
  for (const auto& [tag, n] : counts) {
    if (n > 0) {
      total += n;
      ++distinct;
    }
  }
  if (distinct <= 1) return 0.0;
  double h = 0.0;
  for (const auto& [tag, n] : counts) {
    if (n <= 0) continue;
    const double p = static_cast<double>(n) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return std::clamp(h / std::log2(static_cast<double>(distinct)), 0.0, 1.0);
}

double hhi(const TagProfile& profile, std::size_t cluster) {
  const auto& problems = profile.presence.at(cluster);
  if (problems.empty()) throw Error("hhi: empty cluster");
  std::map<std::string, std::int64_t> carrying;
  for (const auto& tags : problems) {
    for (const auto& t : tags) ++carrying[t];
  }
  double sum = 0.0;
  for (const auto& [tag, n] : carrying) {
    const double s = static_cast<double>(n) / static_cast<double>(problems.size());
    sum += s * s;
  }
  return sum;
}

}  // namespace librarian::clustering
