#ifndef POPTAVERIF_STRATEGY_HPP
#define POPTAVERIF_STRATEGY_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "poptaverif/common.hpp"
#include "poptaverif/pomdp.hpp"
#include "poptaverif/solver.hpp"

namespace poptaverif {

struct StrategyEdge {
  int observation = -1;
  int node = -1;
  double prob = 0.0;
};

struct StrategyNode {
  Belief belief;
  int action = -1;  // -1 on target nodes
  std::vector<StrategyEdge> edges;
  bool target = false;
};

/// Finite-memory observation-based strategy: nodes are explored beliefs,
/// choices depend only on the node, edges are labelled by observations.
struct BeliefStrategy {
  int initial = 0;
  std::vector<StrategyNode> nodes;
};

struct SynthesisOptions {
  std::size_t node_budget = 1'000'000;
  double dedup_tol = tol::dedup;
};

/// Greedy extraction from a solved table: breadth-first through the belief
/// MDP, at each belief choosing the action that attains the one-step backup
/// (ties to the smallest action index). Exploration stops at target beliefs
/// and at beliefs already seen.
inline BeliefStrategy synthesize(const Pomdp& model, const SolveResult& solved,
                                 const ObjectiveSpec& objective,
                                 const SynthesisOptions& options = {}) {
  BeliefStrategy strat;
  std::map<detail::BeliefKey, int> seen;
  auto intern = [&](const Belief& b) {
    const auto key = detail::belief_key(b, options.dedup_tol);
    auto it = seen.find(key);
    if (it != seen.end()) return std::make_pair(it->second, false);
    if (strat.nodes.size() >= options.node_budget)
      throw CapacityError("strategy exploration exceeded the node budget of " +
                          std::to_string(options.node_budget));
    StrategyNode node;
    node.belief = b;
    node.target = is_target(b, objective.target);
    const int id = static_cast<int>(strat.nodes.size());
    strat.nodes.push_back(std::move(node));
    seen.emplace(key, id);
    return std::make_pair(id, true);
  };

  std::deque<int> frontier;
  strat.initial = intern(point_belief(model, model.initial)).first;
  frontier.push_back(strat.initial);
  while (!frontier.empty()) {
    const int id = frontier.front();
    frontier.pop_front();
    if (strat.nodes[id].target) continue;
    const Belief belief = strat.nodes[id].belief;

    int best_action = -1;
    double best_q = 0.0;
    for (const auto& choice : model.choices[belief.support.front().first]) {
      const double q = solved.source->qvalue(belief, choice.action);
      if (best_action < 0 ||
          (objective.direction == Direction::Max ? q > best_q + tol::tie
                                                 : q < best_q - tol::tie)) {
        best_action = choice.action;
        best_q = q;
      }
    }
    if (best_action < 0) throw ContractError("belief has no enabled action");
    strat.nodes[id].action = best_action;

    for (const auto& [o, p] : obs_probability(model, belief, best_action)) {
      const Belief succ = belief_update(model, belief, best_action, o);
      auto [succ_id, fresh] = intern(succ);
      strat.nodes[id].edges.push_back({o, succ_id, p});
      if (fresh) frontier.push_back(succ_id);
    }
  }
  return strat;
}

namespace detail {

/// Nodes of the induced chain from which the target node set is reachable.
inline std::vector<bool> chain_can_reach(const BeliefStrategy& strat) {
  const std::size_t n = strat.nodes.size();
  std::vector<std::vector<int>> preds(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& e : strat.nodes[i].edges)
      if (e.prob > 0.0) preds[e.node].push_back(static_cast<int>(i));
  std::vector<bool> can(n, false);
  std::deque<int> frontier;
  for (std::size_t i = 0; i < n; ++i)
    if (strat.nodes[i].target) {
      can[i] = true;
      frontier.push_back(static_cast<int>(i));
    }
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop_front();
    for (int p : preds[v])
      if (!can[p]) {
        can[p] = true;
        frontier.push_back(p);
      }
  }
  return can;
}

/// Solves x = rhs + P x over the given unknowns by dense elimination.
inline std::vector<double> solve_dense(const std::vector<int>& unknowns,
                                       const BeliefStrategy& strat,
                                       const std::vector<double>& rhs_full,
                                       const std::vector<double>& absorb_value) {
  const std::size_t m = unknowns.size();
  std::vector<int> pos(strat.nodes.size(), -1);
  for (std::size_t i = 0; i < m; ++i) pos[unknowns[i]] = static_cast<int>(i);

  std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    const auto& node = strat.nodes[unknowns[i]];
    a[i][i] = 1.0;
    a[i][m] = rhs_full[unknowns[i]];
    for (const auto& e : node.edges) {
      if (pos[e.node] >= 0)
        a[i][pos[e.node]] -= e.prob;
      else
        a[i][m] += e.prob * absorb_value[e.node];
    }
  }
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < m; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-300)
      throw ContractError("singular induced-chain system");
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col || a[r][col] == 0.0) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t k = col; k <= m; ++k) a[r][k] -= f * a[col][k];
    }
  }
  std::vector<double> x(strat.nodes.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) x[unknowns[i]] = a[i][m] / a[i][i];
  return x;
}

inline std::vector<double> solve_gauss_seidel(const std::vector<int>& unknowns,
                                              const BeliefStrategy& strat,
                                              const std::vector<double>& rhs_full,
                                              const std::vector<double>& absorb_value) {
  std::vector<bool> unknown(strat.nodes.size(), false);
  for (int u : unknowns) unknown[u] = true;
  std::vector<double> x(strat.nodes.size(), 0.0);
  for (std::size_t i = 0; i < strat.nodes.size(); ++i)
    if (!unknown[i]) x[i] = absorb_value[i];
  for (long iter = 0; iter < 1'000'000; ++iter) {
    double residual = 0.0;
    for (int u : unknowns) {
      double v = rhs_full[u];
      for (const auto& e : strat.nodes[u].edges) v += e.prob * x[e.node];
      residual = std::max(residual, std::abs(v - x[u]));
      x[u] = v;
    }
    if (residual <= tol::chain_residual) break;
  }
  return x;
}

}  // namespace detail

/// Exact value of the finite Markov chain induced by the strategy: the
/// achieved value, hence the conservative-side bound.
inline double evaluate(const Pomdp& model, const BeliefStrategy& strat,
                       const ObjectiveSpec& objective) {
  const std::size_t n = strat.nodes.size();
  for (const auto& node : strat.nodes) {
    if (node.target) continue;
    double total = 0.0;
    for (const auto& e : node.edges) total += e.prob;
    if (std::abs(total - 1.0) > tol::dist_sum)
      throw ContractError("strategy node transitions sum to " + std::to_string(total));
  }

  const auto can_reach = detail::chain_can_reach(strat);
  std::vector<double> rhs(n, 0.0), absorb(n, 0.0);
  std::vector<int> unknowns;

  if (objective.kind == ObjectiveKind::ProbabilisticReachability) {
    for (std::size_t i = 0; i < n; ++i) {
      if (strat.nodes[i].target)
        absorb[i] = 1.0;
      else if (can_reach[i])
        unknowns.push_back(static_cast<int>(i));
      // unreachable-of-target nodes keep probability 0
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (strat.nodes[i].target) continue;
      if (!can_reach[i])
        throw ModelError("infinite expected reward: strategy node " + std::to_string(i) +
                         " cannot reach the target");
      unknowns.push_back(static_cast<int>(i));
      rhs[i] = belief_reward(model, strat.nodes[i].belief, strat.nodes[i].action);
    }
  }

  std::vector<double> x;
  if (unknowns.size() <= direct_solve_max_nodes)
    x = detail::solve_dense(unknowns, strat, rhs, absorb);
  else
    x = detail::solve_gauss_seidel(unknowns, strat, rhs, absorb);
  for (std::size_t i = 0; i < n; ++i)
    if (strat.nodes[i].target) x[i] = absorb[i];
  return x[strat.initial];
}

struct ResolutionRow {
  int resolution = 0;
  std::uint64_t points = 0;
  int iterations = 0;
  bool converged = false;
  double lower = 0.0;
  double upper = 0.0;
  double grid_value = 0.0;
  double strategy_value = 0.0;
  double seconds = 0.0;  // human-channel only
};

/// Bracketing [lower, upper] values plus the strategy realizing the
/// conservative side.
struct BoundsReport {
  ObjectiveSpec objective;
  int resolution = 0;
  double lower = 0.0;
  double upper = 0.0;
  double grid_value = 0.0;
  double strategy_value = 0.0;
  bool converged = false;
  bool gap_met = false;
  std::vector<ResolutionRow> history;
};

enum class Engine { J1, J2 };

struct RefineOptions {
  SolverOptions solver;
  SynthesisOptions synthesis;
  Engine engine = Engine::J1;
  double gap = 1e-3;
};

struct RefineOutcome {
  BoundsReport report;
  BeliefStrategy strategy;  // from the final resolution
};

/// Runs solve + synthesize + evaluate per resolution, in order, stopping when
/// upper - lower <= gap. A schedule exhausted without meeting the gap flags
/// the report rather than failing.
inline RefineOutcome refine(const Pomdp& model, const ObjectiveSpec& objective,
                            const std::vector<int>& schedule, const RefineOptions& options = {}) {
  if (schedule.empty()) throw ContractError("refinement schedule is empty");
  RefineOutcome out;
  out.report.objective = objective;

  const Belief initial = point_belief(model, model.initial);
  if (is_target(initial, objective.target)) {
    const double v = objective.pinned_value();
    out.report.lower = out.report.upper = v;
    out.report.grid_value = out.report.strategy_value = v;
    out.report.resolution = schedule.front();
    out.report.converged = true;
    out.report.gap_met = true;
    StrategyNode node;
    node.belief = initial;
    node.target = true;
    out.strategy.nodes.push_back(std::move(node));
    out.report.history.push_back({schedule.front(), 0, 0, true, v, v, v, v, 0.0});
    return out;
  }

  for (int resolution : schedule) {
    const auto started = std::chrono::steady_clock::now();
    const SolveResult solved = options.engine == Engine::J1
                                   ? value_iteration(model, objective, resolution, options.solver)
                                   : value_iteration_dual(model, objective, resolution,
                                                          options.solver);
    const double grid_value = solved.value_at(initial);
    BeliefStrategy strat = synthesize(model, solved, objective, options.synthesis);
    const double strategy_value = evaluate(model, strat, objective);

    ResolutionRow row;
    row.resolution = resolution;
    row.points = solved.point_count;
    row.iterations = solved.iterations;
    row.converged = solved.converged;
    row.grid_value = grid_value;
    row.strategy_value = strategy_value;
    if (bound_side(objective) == BoundSide::Upper) {
      row.lower = strategy_value;
      row.upper = grid_value;
    } else {
      row.lower = grid_value;
      row.upper = strategy_value;
    }
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out.report.history.push_back(row);

    out.report.resolution = resolution;
    out.report.lower = row.lower;
    out.report.upper = row.upper;
    out.report.grid_value = grid_value;
    out.report.strategy_value = strategy_value;
    out.report.converged = solved.converged;
    out.strategy = std::move(strat);
    if (row.upper - row.lower <= options.gap) {
      out.report.gap_met = true;
      break;
    }
  }
  return out;
}

}  // namespace poptaverif

#endif
