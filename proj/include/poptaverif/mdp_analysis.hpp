#ifndef POPTAVERIF_MDP_ANALYSIS_HPP
#define POPTAVERIF_MDP_ANALYSIS_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "poptaverif/pomdp.hpp"

namespace poptaverif {

inline std::vector<bool> reachable_states(const Pomdp& model) {
  std::vector<bool> seen(model.num_states(), false);
  std::deque<int> frontier{model.initial};
  seen[model.initial] = true;
  while (!frontier.empty()) {
    const int s = frontier.front();
    frontier.pop_front();
    for (const auto& c : model.choices[s])
      for (const auto& t : c.successors)
        if (t.prob > 0.0 && !seen[t.state]) {
          seen[t.state] = true;
          frontier.push_back(t.state);
        }
  }
  return seen;
}

/// States from which *every* strategy reaches the target set with
/// probability 1 (greatest fixpoint over a least reachability fixpoint).
inline std::vector<bool> prob1_under_all_strategies(const Pomdp& model,
                                                    const std::vector<bool>& target) {
  const int n = model.num_states();
  std::vector<bool> y(n, true);
  for (;;) {
    // least fixpoint: can hit target while staying inside y, no matter the action
    std::vector<bool> x(n, false);
    for (int s = 0; s < n; ++s) x[s] = target[s];
    bool grew = true;
    while (grew) {
      grew = false;
      for (int s = 0; s < n; ++s) {
        if (x[s]) continue;
        bool all_actions_ok = !model.choices[s].empty();
        for (const auto& c : model.choices[s]) {
          bool stays_in_y = true, touches_x = false;
          for (const auto& t : c.successors) {
            if (t.prob <= 0.0) continue;
            if (!y[t.state]) stays_in_y = false;
            if (x[t.state]) touches_x = true;
          }
          if (!(stays_in_y && touches_x)) {
            all_actions_ok = false;
            break;
          }
        }
        if (all_actions_ok) {
          x[s] = true;
          grew = true;
        }
      }
    }
    if (x == y) return y;
    y = std::move(x);
  }
}

/// Classical value iteration on the underlying MDP (observations ignored).
/// Target states are pinned: 1 for reachability, 0 for expected reward.
inline std::vector<double> mdp_value_iteration(const Pomdp& model,
                                               const std::vector<bool>& target,
                                               bool reward_objective, bool maximize,
                                               double eps = 1e-12,
                                               long max_iters = 1'000'000) {
  const int n = model.num_states();
  std::vector<double> current(n, 0.0), next(n, 0.0);
  for (long iter = 0; iter < max_iters; ++iter) {
    double residual = 0.0;
    for (int s = 0; s < n; ++s) {
      if (target[s]) {
        next[s] = reward_objective ? 0.0 : 1.0;
        continue;
      }
      double best = 0.0;
      bool first = true;
      for (const auto& c : model.choices[s]) {
        double q = reward_objective ? c.reward : 0.0;
        for (const auto& t : c.successors) q += t.prob * current[t.state];
        if (first || (maximize ? q > best : q < best)) best = q;
        first = false;
      }
      next[s] = first ? 0.0 : best;
      residual = std::max(residual, std::abs(next[s] - current[s]));
    }
    current.swap(next);
    if (residual <= eps) break;
  }
  return current;
}

}  // namespace poptaverif

#endif
