#ifndef POPTAVERIF_POMDP_HPP
#define POPTAVERIF_POMDP_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "poptaverif/common.hpp"

namespace poptaverif {

struct Transition {
  int state = 0;
  double prob = 0.0;
};

/// One enabled action of a state: sparse successor distribution plus reward.
struct ActionChoice {
  int action = 0;
  double reward = 0.0;
  std::vector<Transition> successors;
};

/// Finite POMDP with deterministic state labelling by observations.
/// States, actions and observations are index sets; names are kept for
/// diagnostics and serialization only.
struct Pomdp {
  std::vector<std::string> state_names;
  std::vector<std::string> action_names;
  std::vector<std::string> observation_names;
  int initial = 0;
  std::vector<int> obs;                            // state -> observation
  std::vector<std::vector<ActionChoice>> choices;  // per state, sorted by action
  std::map<std::string, std::vector<int>> labels;  // name -> observation indices

  int num_states() const { return static_cast<int>(state_names.size()); }
  int num_actions() const { return static_cast<int>(action_names.size()); }
  int num_observations() const { return static_cast<int>(observation_names.size()); }

  const ActionChoice* choice(int state, int action) const {
    for (const auto& c : choices[state])
      if (c.action == action) return &c;
    return nullptr;
  }

  std::vector<int> enabled_actions(int state) const {
    std::vector<int> out;
    out.reserve(choices[state].size());
    for (const auto& c : choices[state]) out.push_back(c.action);
    return out;
  }

  /// Observation classes: observation index -> sorted member states.
  std::vector<std::vector<int>> observation_classes() const {
    std::vector<std::vector<int>> classes(observation_names.size());
    for (int s = 0; s < num_states(); ++s) classes[obs[s]].push_back(s);
    return classes;
  }

  /// Largest observation class ("Num. hidd." of the result tables).
  int max_hidden() const {
    std::vector<int> count(observation_names.size(), 0);
    for (int s = 0; s < num_states(); ++s) ++count[obs[s]];
    int m = 0;
    for (int c : count) m = std::max(m, c);
    return m;
  }
};

/// Sparse belief confined to one observation class.
struct Belief {
  int obs_class = -1;
  std::vector<std::pair<int, double>> support;  // sorted by state index

  double at(int state) const {
    for (const auto& [s, p] : support)
      if (s == state) return p;
    return 0.0;
  }
};

struct TargetSpec {
  std::vector<int> target_observations;  // sorted, non-empty

  bool contains(int observation) const {
    return std::binary_search(target_observations.begin(), target_observations.end(),
                              observation);
  }
};

inline Belief point_belief(const Pomdp& model, int state) {
  Belief b;
  b.obs_class = model.obs[state];
  b.support = {{state, 1.0}};
  return b;
}

/// Drops entries below the pruning threshold and renormalizes. Belief updates
/// otherwise accumulate denormal dust that breaks dedup keys.
inline void prune_and_normalize(Belief& b) {
  std::erase_if(b.support, [](const auto& e) { return e.second < tol::prune; });
  double total = 0.0;
  for (const auto& [s, p] : b.support) total += p;
  if (total <= 0.0) throw ContractError("belief lost all mass during pruning");
  for (auto& [s, p] : b.support) p /= total;
}

inline bool beliefs_equal(const Belief& a, const Belief& b, double eps = tol::dedup) {
  if (a.obs_class != b.obs_class) return false;
  std::size_t i = 0, j = 0;
  while (i < a.support.size() || j < b.support.size()) {
    if (i < a.support.size() && j < b.support.size() &&
        a.support[i].first == b.support[j].first) {
      if (std::abs(a.support[i].second - b.support[j].second) > eps) return false;
      ++i, ++j;
    } else if (j >= b.support.size() ||
               (i < a.support.size() && a.support[i].first < b.support[j].first)) {
      if (a.support[i].second > eps) return false;
      ++i;
    } else {
      if (b.support[j].second > eps) return false;
      ++j;
    }
  }
  return true;
}

struct ValidationIssue {
  std::string message;
};

/// Checks every structural invariant of Def 3-style POMDPs. Report style:
/// empty result means the model is valid; downstream operations assume it.
inline std::vector<ValidationIssue> validate(const Pomdp& model) {
  std::vector<ValidationIssue> issues;
  const int n = model.num_states();
  if (n == 0) {
    issues.push_back({"model has no states"});
    return issues;
  }
  if (model.initial < 0 || model.initial >= n)
    issues.push_back({"initial state index out of range"});
  if (static_cast<int>(model.obs.size()) != n)
    issues.push_back({"observation map does not cover all states"});

  for (int s = 0; s < n; ++s) {
    if (model.obs[s] < 0 || model.obs[s] >= model.num_observations()) {
      issues.push_back({"state " + model.state_names[s] + " has an undeclared observation"});
      continue;
    }
    if (model.choices[s].empty())
      issues.push_back({"state " + model.state_names[s] + " has no enabled action (deadlock)"});
    for (const auto& c : model.choices[s]) {
      double total = 0.0;
      for (const auto& t : c.successors) {
        total += t.prob;
        if (t.prob < 0.0)
          issues.push_back({"negative transition probability at state " +
                            model.state_names[s] + ", action " + model.action_names[c.action]});
        if (t.state < 0 || t.state >= n)
          issues.push_back({"transition to undeclared state from " + model.state_names[s]});
      }
      if (std::abs(total - 1.0) > tol::dist_sum)
        issues.push_back({"distribution for state " + model.state_names[s] + ", action " +
                          model.action_names[c.action] + " sums to " + std::to_string(total)});
      if (!std::isfinite(c.reward) || c.reward < 0.0)
        issues.push_back({"reward for state " + model.state_names[s] + ", action " +
                          model.action_names[c.action] + " is negative or not finite"});
    }
  }

  // Def 3: equal observations imply identical enabled-action sets.
  const auto classes = model.observation_classes();
  for (const auto& members : classes) {
    if (members.size() < 2) continue;
    const auto reference = model.enabled_actions(members.front());
    for (std::size_t i = 1; i < members.size(); ++i) {
      const auto other = model.enabled_actions(members[i]);
      if (other == reference) continue;
      std::string diff;
      for (int a : reference)
        if (std::find(other.begin(), other.end(), a) == other.end()) {
          diff = model.action_names[a];
          break;
        }
      if (diff.empty())
        for (int a : other)
          if (std::find(reference.begin(), reference.end(), a) == reference.end()) {
            diff = model.action_names[a];
            break;
          }
      issues.push_back({"states " + model.state_names[members.front()] + " and " +
                        model.state_names[members[i]] +
                        " share an observation but differ on action " + diff});
    }
  }

  // Exactly the initial state carries the initial observation.
  if (model.initial >= 0 && model.initial < n && static_cast<int>(model.obs.size()) == n) {
    const int init_obs = model.obs[model.initial];
    for (int s = 0; s < n; ++s)
      if (s != model.initial && model.obs[s] == init_obs)
        issues.push_back({"initial observation is shared by state " + model.state_names[s]});
  }
  return issues;
}

inline const ActionChoice& require_choice(const Pomdp& model, const Belief& b, int action) {
  if (b.support.empty()) throw ContractError("empty belief");
  const ActionChoice* c = model.choice(b.support.front().first, action);
  if (c == nullptr)
    throw ContractError("action " + model.action_names[action] +
                        " is not enabled in the belief's observation class");
  return *c;
}

/// Pr[o | a,b] for every observation with positive mass.
inline std::map<int, double> obs_probability(const Pomdp& model, const Belief& b, int action) {
  require_choice(model, b, action);
  std::map<int, double> out;
  for (const auto& [s, p] : b.support) {
    const ActionChoice* c = model.choice(s, action);
    for (const auto& t : c->successors) out[model.obs[t.state]] += p * t.prob;
  }
  std::erase_if(out, [](const auto& e) { return e.second <= 0.0; });
  return out;
}

/// Bayes update: the belief reached from b by performing `action` and
/// observing `observation`.
inline Belief belief_update(const Pomdp& model, const Belief& b, int action, int observation) {
  require_choice(model, b, action);
  std::map<int, double> next;
  double denom = 0.0;
  for (const auto& [s, p] : b.support) {
    const ActionChoice* c = model.choice(s, action);
    for (const auto& t : c->successors) {
      if (model.obs[t.state] != observation) continue;
      next[t.state] += p * t.prob;
      denom += p * t.prob;
    }
  }
  if (denom <= 0.0)
    throw ContractError("observation " + model.observation_names[observation] +
                        " is impossible after this action");
  Belief result;
  result.obs_class = observation;
  result.support.reserve(next.size());
  for (const auto& [s, mass] : next) result.support.emplace_back(s, mass / denom);
  prune_and_normalize(result);
  return result;
}

/// Expected one-step reward of `action` under belief b.
inline double belief_reward(const Pomdp& model, const Belief& b, int action) {
  require_choice(model, b, action);
  double total = 0.0;
  for (const auto& [s, p] : b.support) total += p * model.choice(s, action)->reward;
  return total;
}

/// A belief is a target iff every support state's observation is in the
/// target set; with single-class beliefs this is a constant-time check.
inline bool is_target(const Belief& b, const TargetSpec& target) {
  return target.contains(b.obs_class);
}

}  // namespace poptaverif

#endif
