#include "librarian/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include "librarian/clustering.hpp"
#include "librarian/code/metrics.hpp"
#include "librarian/errors.hpp"

namespace fs = std::filesystem;

namespace librarian::analysis {

std::vector<double> best_at_k_weights(std::size_t n, std::size_t k) {
  if (k == 0 || k > n) throw InsufficientSamples("k=" + std::to_string(k) + " with n=" + std::to_string(n));
  std::vector<double> w(n, 0.0);
  w[0] = static_cast<double>(k) / static_cast<double>(n);
  for (std::size_t i = 1; i + k <= n; ++i) {
    // w_{i+1} = w_i * (n - i - k + 1) / (n - i), 1-based i.
    w[i] = w[i - 1] * static_cast<double>(n - i - k + 1) / static_cast<double>(n - i);
  }
  return w;
}

double best_at_k(std::vector<SamplePoint> samples, std::size_t k) {
  std::erase_if(samples, [](const SamplePoint& s) { return !s.feasible; });
  const auto w = best_at_k_weights(samples.size(), k);
  std::sort(samples.begin(), samples.end(), [](const SamplePoint& a, const SamplePoint& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.value != b.value) return a.value < b.value;
    return a.key < b.key;
  });
  double theta = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) theta += w[i] * samples[i].value;
  return theta;
}

std::vector<Comparison> consensus_filter(const std::vector<Judgement>& judgements, double threshold) {
  std::map<std::string, std::vector<const Judgement*>> by_instance;
  for (const auto& j : judgements) by_instance[j.instance].push_back(&j);
  std::vector<Comparison> out;
  for (const auto& [instance, js] : by_instance) {
    std::map<std::string, std::size_t> votes;
    for (const auto* j : js) ++votes[j->winner];
    auto top = std::max_element(votes.begin(), votes.end(),
                                [](const auto& a, const auto& b) { return a.second < b.second; });
    const double share = static_cast<double>(top->second) / static_cast<double>(js.size());
    if (share < threshold) continue;
    const auto* first = js.front();
    const std::string& loser = top->first == first->a ? first->b : first->a;
    out.push_back({top->first, loser});
  }
  return out;
}

double bt_log_likelihood(const std::vector<std::vector<double>>& wins, const std::vector<double>& strength) {
  double ll = 0.0;
  for (std::size_t i = 0; i < wins.size(); ++i) {
    for (std::size_t j = 0; j < wins.size(); ++j) {
      if (wins[i][j] > 0) ll += wins[i][j] * (std::log(strength[i]) - std::log(strength[i] + strength[j]));
    }
  }
  return ll;
}

BradleyTerryFit bradley_terry_fit(const std::vector<Comparison>& comparisons, const std::string& reference,
                                  double tolerance, std::size_t max_iterations) {
  if (comparisons.empty()) throw Error("no comparisons");
  BradleyTerryFit fit;
  std::set<std::string> ids;
  for (const auto& c : comparisons) {
    if (c.winner == c.loser) throw Error("self comparison of '" + c.winner + "'");
    ids.insert(c.winner);
    ids.insert(c.loser);
  }
  fit.items.assign(ids.begin(), ids.end());
  const std::size_t n = fit.items.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[fit.items[i]] = i;
  fit.reference = reference.empty() ? fit.items.front() : reference;
  if (!index.contains(fit.reference)) throw Error("unknown reference item '" + fit.reference + "'");
  const std::size_t ref = index[fit.reference];

  fit.wins.assign(n, std::vector<double>(n, 0.0));
  for (const auto& c : comparisons) fit.wins[index[c.winner]][index[c.loser]] += 1.0;

  // Connectivity of the undirected comparison graph.
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = true;
  while (!q.empty()) {
    const std::size_t i = q.front();
    q.pop();
    for (std::size_t j = 0; j < n; ++j) {
      if (!seen[j] && fit.wins[i][j] + fit.wins[j][i] > 0) {
        seen[j] = true;
        q.push(j);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) throw DisconnectedGraph("'" + fit.items[i] + "' is not connected to '" + fit.items[0] + "'");
  }

  std::vector<double> total_wins(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) total_wins[i] = std::accumulate(fit.wins[i].begin(), fit.wins[i].end(), 0.0);
  if (total_wins[ref] == 0.0) throw Error("reference item '" + fit.reference + "' never wins");

  std::vector<double> pi(n, 1.0);
  fit.log_likelihood.push_back(bt_log_likelihood(fit.wins, pi));
  for (fit.iterations = 0; fit.iterations < max_iterations;) {
    std::vector<double> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double nij = fit.wins[i][j] + fit.wins[j][i];
        if (j != i && nij > 0) denom += nij / (pi[i] + pi[j]);
      }
      next[i] = total_wins[i] / denom;
    }
    const double scale = next[ref];
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] /= scale;
      change = std::max(change, std::abs(next[i] - pi[i]) / std::max(pi[i], 1e-300));
    }
    pi = std::move(next);
    ++fit.iterations;
    fit.log_likelihood.push_back(bt_log_likelihood(fit.wins, pi));
    if (change < tolerance) {
      fit.converged = true;
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) fit.strength[fit.items[i]] = pi[i];

  // Observed information of log-strengths with the reference held fixed.
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double nij = fit.wins[i][j] + fit.wins[j][i];
      if (nij == 0) continue;
      const double p = pi[i] / (pi[i] + pi[j]);
      const double v = nij * p * (1 - p);
      const auto I = static_cast<Eigen::Index>(i), J = static_cast<Eigen::Index>(j);
      info(I, I) += v;
      info(J, J) += v;
      info(I, J) -= v;
      info(J, I) -= v;
    }
  }
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != ref) keep.push_back(static_cast<Eigen::Index>(i));
  }
  fit.covariance.assign(n, std::vector<double>(n, 0.0));
  if (!keep.empty()) {
    const auto m = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd sub(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = info(keep[static_cast<std::size_t>(a)], keep[static_cast<std::size_t>(b)]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
    if (lu.isInvertible()) {
      const Eigen::MatrixXd cov = lu.inverse();
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) {
          fit.covariance[static_cast<std::size_t>(keep[static_cast<std::size_t>(a)])]
                        [static_cast<std::size_t>(keep[static_cast<std::size_t>(b)])] = cov(a, b);
        }
      }
    } else {
      for (auto& row : fit.covariance) std::fill(row.begin(), row.end(), std::numeric_limits<double>::infinity());
    }
  }
  return fit;
}

WinProbability win_probability(const BradleyTerryFit& fit, const std::string& a, const std::string& b, double z) {
  auto pos = [&](const std::string& id) {
    auto it = std::find(fit.items.begin(), fit.items.end(), id);
    if (it == fit.items.end()) throw Error("unknown item '" + id + "'");
    return static_cast<std::size_t>(it - fit.items.begin());
  };
  const std::size_t i = pos(a), j = pos(b);
  const double d = std::log(fit.strength.at(a)) - std::log(fit.strength.at(b));
  const double var = fit.covariance[i][i] + fit.covariance[j][j] - 2 * fit.covariance[i][j];
  auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double half = z * std::sqrt(std::max(var, 0.0));
  return {logistic(d), logistic(d - half), logistic(d + half)};
}

namespace {

Json read_json(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IncompleteRun("missing " + p.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw IncompleteRun(p.string() + ": " + e.what());
  }
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IncompleteRun("missing " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double ratio(double value, double baseline) {
  if (baseline == 0.0) return value == 0.0 ? 1.0 : value;
  return value / baseline;
}

std::map<std::string, TestOutcome> outcomes_from(const Json& j) {
  std::map<std::string, TestOutcome> out;
  for (const auto& [id, o] : j.items()) out[id] = o.get<TestOutcome>();
  return out;
}

std::string padded(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

std::string number(double x) {
  std::ostringstream ss;
  ss.precision(17);
  ss << x;
  return ss.str();
}

}  // namespace

std::vector<ScalingRow> scaling_curves(const std::vector<std::vector<std::pair<std::string, ScoreCard>>>& cluster_cards,
                                       const std::vector<ScoreCard>& baselines) {
  std::vector<ScalingRow> rows;
  for (scoring::MetricId m : scoring::kAllMetrics) {
    std::vector<std::vector<SamplePoint>> populations;
    std::size_t kmax = 0;
    for (std::size_t c = 0; c < cluster_cards.size(); ++c) {
      const double base = scoring::metric_value(baselines.at(c), m);
      std::vector<SamplePoint> pts;
      for (const auto& [digest, card] : cluster_cards[c]) {
        if (!card.loss.is_finite()) continue;
        const double v = scoring::metric_value(card, m);
        pts.push_back({v, ratio(v, base), true, digest});
      }
      if (pts.empty()) continue;
      kmax = populations.empty() ? pts.size() : std::min(kmax, pts.size());
      populations.push_back(std::move(pts));
    }
    for (std::size_t k = 1; k <= kmax; ++k) {
      double sum = 0.0;
      for (const auto& pts : populations) sum += best_at_k(pts, k);
      rows.push_back({scoring::to_string(m), k, sum / static_cast<double>(populations.size()), populations.size()});
    }
  }
  return rows;
}

std::string scaling_csv(const std::vector<ScalingRow>& rows) {
  std::string out = "metric,k,theta,clusters\n";
  for (const auto& r : rows) out += r.metric + "," + std::to_string(r.k) + "," + number(r.theta) + "," + std::to_string(r.clusters) + "\n";
  return out;
}

std::string coherence_csv(const std::vector<CoherenceRow>& rows) {
  std::string out = "cluster,size,entropy,hhi\n";
  for (const auto& r : rows) {
    out += std::to_string(r.cluster) + "," + std::to_string(r.size) + "," + number(r.entropy) + "," + number(r.hhi) + "\n";
  }
  return out;
}

Json to_json(const MetricReport& r) {
  Json scaling = Json::array();
  for (const auto& s : r.scaling) scaling.push_back({{"metric", s.metric}, {"k", s.k}, {"theta", s.theta}, {"clusters", s.clusters}});
  Json coherence = Json::array();
  for (const auto& c : r.coherence) {
    coherence.push_back({{"cluster", c.cluster}, {"size", c.size}, {"entropy", c.entropy}, {"hhi", c.hhi}});
  }
  return Json{{"task", r.task},
              {kPassRate, r.pass_rate},
              {kPassRateImprovement, r.pass_rate_improvement},
              {kMdlRatio, r.mdl_ratio},
              {kTokenRatio, r.token_ratio},
              {kLibraryFunctions, r.library_functions},
              {kAvgCalls, r.avg_calls},
              {kSingleUse, r.single_use},
              {"cc_ratio", r.cc_ratio},
              {"unused_functions", r.unused_functions},
              {"name_collisions", r.name_collisions},
              {"clusters", r.clusters},
              {"scaling", scaling},
              {"coherence", coherence}};
}

MetricReport build_report(const fs::path& run_dir) {
  const Json run = read_json(run_dir / "run.json");
  if (run.value("status", std::string{}) != "complete") throw IncompleteRun("run in " + run_dir.string() + " did not finish");
  const Json fin = read_json(run_dir / "final.json");
  const Json plan = read_json(run_dir / "clusters" / "plan.json");
  const Json state = read_json(run_dir / "library" / "state.json");

  MetricReport r;
  r.task = run.value("task", std::string{});
  const auto original = outcomes_from(fin.at("original_outcomes"));
  const auto final_outcomes = outcomes_from(fin.at("final_outcomes"));
  std::size_t total = 0, passed_before = 0, passed_after = 0;
  for (const auto& [id, o] : original) {
    total += o.total();
    passed_before += o.passed.size();
    if (auto it = final_outcomes.find(id); it != final_outcomes.end()) passed_after += it->second.passed.size();
  }
  if (total > 0) {
    r.pass_rate = 100.0 * static_cast<double>(passed_after) / static_cast<double>(total);
    r.pass_rate_improvement = r.pass_rate - 100.0 * static_cast<double>(passed_before) / static_cast<double>(total);
  }
  const auto base = fin.at("baseline_card").get<ScoreCard>();
  const auto final_card = fin.at("final_card").get<ScoreCard>();
  r.mdl_ratio = ratio(final_card.mdl_nats, base.mdl_nats);
  r.token_ratio = ratio(static_cast<double>(final_card.tokens), static_cast<double>(base.tokens));
  r.cc_ratio = ratio(static_cast<double>(final_card.cc), static_cast<double>(base.cc));

  const std::string library = read_text(run_dir / fin.at("library").get<std::string>());
  std::vector<std::string> rewritten;
  for (const auto& [id, rel] : fin.at("rewritten").items()) rewritten.push_back(read_text(run_dir / rel.get<std::string>()));
  const auto usage = code::usage_stats(library, rewritten);
  r.library_functions = usage.num_definitions;
  r.avg_calls = usage.avg_calls;
  r.single_use = 100.0 * usage.single_use_fraction;
  r.unused_functions = usage.unused_count;
  r.name_collisions = state.value("collisions", std::size_t{0});

  const auto clusters = plan.at("clusters").get<std::vector<std::vector<std::string>>>();
  std::vector<std::vector<std::pair<std::string, ScoreCard>>> cards(clusters.size());
  std::vector<ScoreCard> baselines;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const fs::path cdir = run_dir / "clusters" / padded(c);
    const Json res = read_json(cdir / "result.json");
    baselines.push_back(res.at("baseline").at("card").get<ScoreCard>());
    Json samples = Json::array();
    const std::size_t n = res.at("samples").get<std::size_t>();
    for (std::size_t i = 0; i < n; ++i) {
      const fs::path sdir = cdir / "samples" / std::to_string(i);
      const Json sc = read_json(sdir / "scorecard.json");
      const auto card = sc.at("card").get<ScoreCard>();
      std::string digest;
      if (fs::exists(sdir / "candidate.json")) digest = read_json(sdir / "candidate.json").value("digest", std::string{});
      cards[c].emplace_back(digest, card);
      Json entry{{"index", i}, {"card", card}};
      if (sc.contains("error")) entry["error"] = sc["error"];
      samples.push_back(entry);
    }
    r.clusters.push_back({{"index", c},
                          {"units", res.at("units")},
                          {"retrieved", res.at("retrieved")},
                          {"keep_originals", res.at("keep_originals")},
                          {"selected", res.at("selected")},
                          {"protocol_errors", res.at("protocol_errors")},
                          {"parse_errors", res.at("parse_errors")},
                          {"baseline", res.at("baseline").at("card")},
                          {"samples", samples}});
  }
  r.scaling = scaling_curves(cards, baselines);

  const auto tags = plan.value("tags", Json::object()).get<std::map<std::string, std::set<std::string>>>();
  if (!tags.empty()) {
    const auto profile = clustering::make_tag_profile(clusters, tags);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (clusters[c].empty()) continue;
      r.coherence.push_back({c, clusters[c].size(), clustering::tag_entropy(profile, c), clustering::hhi(profile, c)});
    }
  }
  return r;
}

MetricReport write_report(const fs::path& run_dir) {
  MetricReport r = build_report(run_dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(run_dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (run_dir / name).string());
    out << text;
  };
  write("report.json", to_json(r).dump(2) + "\n");
  write("scaling.csv", scaling_csv(r.scaling));
  write("coherence.csv", coherence_csv(r.coherence));
  return r;
}

}  // namespace librarian::analysis
