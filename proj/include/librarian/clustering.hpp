#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "librarian/gateway.hpp"
#include "librarian/model.hpp"

namespace librarian::clustering {

/// One agglomeration step. Nodes 0..n-1 are the inputs; merge i creates node n+i.
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double height = 0.0;
  std::size_t size = 0;

  bool operator==(const Merge&) const = default;
};

struct ClusterPlan {
  std::vector<std::vector<std::string>> clusters;
  std::size_t target_size = 0;
  /// Input ids in node order (sorted).
  std::vector<std::string> ids;
  std::vector<Merge> linkage;

  bool operator==(const ClusterPlan&) const = default;
};

void to_json(Json& j, const ClusterPlan& p);
void from_json(const Json& j, ClusterPlan& p);

/// Ward linkage on Euclidean distances (Lance-Williams recurrence).
/// Ties resolve to the lowest node pair. Throws DimensionMismatch.
std::vector<Merge> ward_linkage(const std::vector<std::vector<double>>& points);

/// Ward dendrogram cut into ceil(N/S) groups, then repacked to sizes S (one
/// remainder group when S does not divide N). Groups are ordered by the merge
/// that formed them, members by id. Throws DimensionMismatch, Error when S < 1 or N < S.
ClusterPlan cluster_fixed_size(const std::vector<std::pair<std::string, std::vector<double>>>& vectors, std::size_t S);
ClusterPlan cluster_fixed_size(const std::map<std::string, std::vector<double>>& vectors, std::size_t S);

/// Keeps whole clusters in plan order until `max_units` units are covered.
ClusterPlan first_units(const ClusterPlan& plan, std::size_t max_units);

/// Prompt asking for a summary that emphasises reusable components.
std::string summary_prompt(const SourceUnit& unit);
/// Pre-supplied descriptions pass through without a gateway call.
std::string summarize(const SourceUnit& unit, gateway::Gateway& gw);

/// Ids of units with at least `min_sloc` source lines; unparsable units are kept.
std::vector<std::string> filter_min_sloc(const std::vector<SourceUnit>& units, std::size_t min_sloc);

struct TagProfile {
  /// Per cluster: tag -> number of tag instances.
  std::vector<std::map<std::string, std::int64_t>> instances;
  /// Per cluster, per problem: tags present.
  std::vector<std::vector<std::set<std::string>>> presence;
};

TagProfile make_tag_profile(const std::vector<std::vector<std::string>>& clusters,
                            const std::map<std::string, std::set<std::string>>& tags);

/// Normalised tag-instance entropy in [0, 1]; 0 when at most one tag type occurs.
double tag_entropy(const TagProfile& profile, std::size_t cluster);
/// Sum over tags of the squared fraction of problems carrying the tag.
double hhi(const TagProfile& profile, std::size_t cluster);

}  // namespace librarian::clustering
