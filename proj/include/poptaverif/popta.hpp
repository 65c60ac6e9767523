#ifndef POPTAVERIF_POPTA_HPP
#define POPTAVERIF_POPTA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "poptaverif/common.hpp"
#include "poptaverif/pomdp.hpp"

namespace poptaverif {

/// Closed, diagonal-free clock constraint: a conjunction of x <= c / x >= c
/// atoms (empty conjunction = true). Closedness and diagonal-freeness hold by
/// construction of the type.
struct ClockConstraint {
  struct Conjunct {
    int clock = -1;
    bool upper = false;  // true: clock <= bound, false: clock >= bound
    int bound = 0;

    bool operator==(const Conjunct& o) const {
      return clock == o.clock && upper == o.upper && bound == o.bound;
    }
    bool operator<(const Conjunct& o) const {
      return std::tie(clock, upper, bound) < std::tie(o.clock, o.upper, o.bound);
    }
  };
  std::vector<Conjunct> conjuncts;

  bool is_true() const { return conjuncts.empty(); }

  bool satisfied(const std::vector<int>& valuation) const {
    for (const auto& c : conjuncts) {
      const int v = valuation[c.clock];
      if (c.upper ? v > c.bound : v < c.bound) return false;
    }
    return true;
  }

  /// Tightest-bound normal form, for syntactic equality checks.
  ClockConstraint normalized(int num_clocks) const {
    ClockConstraint out;
    std::vector<int> tight_upper(num_clocks, -1), tight_lower(num_clocks, -1);
    for (const auto& c : conjuncts) {
      if (c.upper)
        tight_upper[c.clock] = tight_upper[c.clock] < 0 ? c.bound
                                                        : std::min(tight_upper[c.clock], c.bound);
      else
        tight_lower[c.clock] = std::max(tight_lower[c.clock], c.bound);
    }
    for (int x = 0; x < num_clocks; ++x) {
      if (tight_lower[x] > 0) out.conjuncts.push_back({x, false, tight_lower[x]});
      if (tight_upper[x] >= 0) out.conjuncts.push_back({x, true, tight_upper[x]});
    }
    return out;
  }

  int max_constant(int clock) const {
    int m = 0;
    for (const auto& c : conjuncts)
      if (c.clock == clock) m = std::max(m, c.bound);
    return m;
  }
};

struct PoptaOutcome {
  double prob = 0.0;
  std::vector<int> resets;  // sorted clock indices
  int location = -1;
};

struct PoptaCommand {
  int action = -1;
  ClockConstraint guard;
  double action_reward = 0.0;
  std::vector<PoptaOutcome> outcomes;
};

struct PoptaLocation {
  std::string name;
  int observation = -1;  // location observation
  ClockConstraint invariant;
  double rate = 0.0;                   // location reward per time unit
  std::vector<PoptaCommand> commands;  // sorted by action, at most one per action
};

/// Partially observable probabilistic timed automaton (clocks observable,
/// locations visible only through the location observation function).
struct Popta {
  std::vector<std::string> clock_names;
  std::vector<std::string> action_names;
  std::vector<std::string> observation_names;  // location observations
  std::vector<PoptaLocation> locations;
  int initial = 0;
  std::map<std::string, std::vector<int>> labels;  // name -> location-observation set
  std::vector<int> clock_bound_override;           // per clock, -1 = infer only

  int num_clocks() const { return static_cast<int>(clock_names.size()); }

  /// k_x per clock: greatest compared constant over invariants, guards and
  /// any property-supplied override.
  std::vector<int> clock_bounds() const {
    std::vector<int> k(clock_names.size(), 0);
    for (const auto& loc : locations) {
      for (int x = 0; x < num_clocks(); ++x)
        k[x] = std::max(k[x], loc.invariant.max_constant(x));
      for (const auto& cmd : loc.commands)
        for (int x = 0; x < num_clocks(); ++x)
          k[x] = std::max(k[x], cmd.guard.max_constant(x));
    }
    for (std::size_t x = 0; x < clock_bound_override.size() && x < k.size(); ++x)
      k[x] = std::max(k[x], clock_bound_override[x]);
    return k;
  }
};

struct RestrictionIssue {
  std::string message;
};

struct ResetViolation {
  int location = -1;
  std::vector<int> valuation;
  int action = -1;
  int clock = -1;
};

struct DigitalOptions {
  std::size_t state_cap = 1'000'000;
  /// Redirects states violating an until context: any state whose
  /// (location observation, valuation) satisfies this predicate becomes
  /// absorbing and non-target.
  std::function<bool(int, const std::vector<int>&)> absorb_nontarget;
  int frontier_clock = -1;  // -1: no frontier
  int frontier_bound = 0;
  bool frontier_snapshot = false;   // true: pay r_L(l) into a fresh sink at the frontier
  bool zero_regular_rewards = false;
};

/// Digital-clocks POMDP of a POPTA plus the legends mapping its states and
/// observations back to (location, valuation).
struct DigitalPomdp {
  Pomdp pomdp;
  std::vector<std::pair<int, std::vector<int>>> state_legend;
  std::vector<std::pair<int, std::vector<int>>> obs_legend;  // location-obs -1 for the sink
  int tick_action = -1;
  int snap_action = -1;  // -1 unless a snapshot frontier was requested
  int sink_observation = -1;
  std::vector<int> clock_bounds;
  std::vector<ResetViolation> reset_violations;
};

/// Reachable-state exploration of the integer-clock semantics. Delays are
/// unit steps (a delay of t is t successive unit steps with the same
/// accumulated location reward); clocks cap at k_x + 1. Dead states keep a
/// zero-reward stutter step so the result is a valid POMDP.
inline DigitalPomdp digitalize(const Popta& model, const DigitalOptions& options = {}) {
  DigitalPomdp out;
  const int num_clocks = model.num_clocks();
  out.clock_bounds = model.clock_bounds();
  out.tick_action = static_cast<int>(model.action_names.size());
  out.pomdp.action_names = model.action_names;
  out.pomdp.action_names.push_back("[tick]");
  if (options.frontier_snapshot) {
    out.snap_action = out.tick_action + 1;
    out.pomdp.action_names.push_back("[snap]");
  }

  const std::vector<int> zero(num_clocks, 0);
  if (!model.locations[model.initial].invariant.satisfied(zero))
    throw ModelError("initial location invariant rejects the zero valuation");

  std::map<std::pair<int, std::vector<int>>, int> state_index;
  std::map<std::pair<int, std::vector<int>>, int> obs_index;

  auto observation_of = [&](int loc, const std::vector<int>& v) {
    const std::pair<int, std::vector<int>> key{model.locations[loc].observation, v};
    auto it = obs_index.find(key);
    if (it != obs_index.end()) return it->second;
    const int id = static_cast<int>(out.pomdp.observation_names.size());
    std::string name = model.observation_names[key.first] + "[";
    for (int x = 0; x < num_clocks; ++x)
      name += (x ? "," : "") + model.clock_names[x] + "=" + std::to_string(v[x]);
    name += "]";
    out.pomdp.observation_names.push_back(std::move(name));
    out.obs_legend.push_back(key);
    obs_index.emplace(key, id);
    return id;
  };

  int sink_state = -1;
  auto require_sink = [&]() {
    if (sink_state >= 0) return sink_state;
    out.sink_observation = static_cast<int>(out.pomdp.observation_names.size());
    out.pomdp.observation_names.push_back("[frontier]");
    out.obs_legend.push_back({-1, {}});
    sink_state = static_cast<int>(out.pomdp.state_names.size());
    out.pomdp.state_names.push_back("[frontier]");
    out.pomdp.obs.push_back(out.sink_observation);
    out.state_legend.push_back({-1, {}});
    out.pomdp.choices.emplace_back();
    return sink_state;
  };

  std::deque<int> frontier;
  auto intern = [&](int loc, const std::vector<int>& v) {
    const std::pair<int, std::vector<int>> key{loc, v};
    auto it = state_index.find(key);
    if (it != state_index.end()) return it->second;
    if (state_index.size() >= options.state_cap)
      throw CapacityError("digital state space exceeds the cap of " +
                          std::to_string(options.state_cap) + " states");
    const int id = static_cast<int>(out.pomdp.state_names.size());
    std::string name = model.locations[loc].name + "[";
    for (int x = 0; x < num_clocks; ++x)
      name += (x ? "," : "") + model.clock_names[x] + "=" + std::to_string(v[x]);
    name += "]";
    out.pomdp.state_names.push_back(std::move(name));
    out.pomdp.obs.push_back(observation_of(loc, v));
    out.state_legend.push_back(key);
    out.pomdp.choices.emplace_back();
    state_index.emplace(key, id);
    frontier.push_back(id);
    return id;
  };

  out.pomdp.initial = intern(model.initial, zero);
  while (!frontier.empty()) {
    const int id = frontier.front();
    frontier.pop_front();
    const auto [loc, v] = out.state_legend[id];
    const PoptaLocation& location = model.locations[loc];
    const int obs_id = out.pomdp.obs[id];
    std::vector<ActionChoice> choices;

    const bool absorbed =
        options.absorb_nontarget && options.absorb_nontarget(out.obs_legend[obs_id].first, v);
    const bool at_frontier =
        options.frontier_clock >= 0 && v[options.frontier_clock] >= options.frontier_bound;

    if (at_frontier && options.frontier_snapshot) {
      // instant-reward frontier: forced transition paying the location rate
      ActionChoice snap;
      snap.action = out.snap_action;
      snap.reward = location.rate;
      snap.successors = {{require_sink(), 1.0}};
      choices.push_back(std::move(snap));
    } else if (!absorbed && !at_frontier) {
      for (const auto& cmd : location.commands) {
        if (!cmd.guard.satisfied(v)) continue;
        ActionChoice choice;
        choice.action = cmd.action;
        choice.reward = options.zero_regular_rewards ? 0.0 : cmd.action_reward;
        std::map<int, double> mass;
        for (const auto& outcome : cmd.outcomes) {
          if (outcome.prob <= 0.0) continue;
          std::vector<int> next = v;
          for (int x : outcome.resets) {
            if (v[x] == 0) {
              // restriction breach: reset of a zero clock, recorded with its witness
              bool known = false;
              for (const auto& rv : out.reset_violations)
                known = known ||
                        (rv.location == loc && rv.action == cmd.action && rv.clock == x &&
                         rv.valuation == v);
              if (!known) out.reset_violations.push_back({loc, v, cmd.action, x});
            }
            next[x] = 0;
          }
          if (!model.locations[outcome.location].invariant.satisfied(next))
            throw ModelError("edge from " + location.name + " on action " +
                             model.action_names[cmd.action] + " enters location " +
                             model.locations[outcome.location].name +
                             " in violation of its invariant");
          mass[intern(outcome.location, next)] += outcome.prob;
        }
        for (const auto& [succ, p] : mass) choice.successors.push_back({succ, p});
        if (!choice.successors.empty()) choices.push_back(std::move(choice));
      }
      // unit delay, guarded by invariant preservation
      std::vector<int> delayed(num_clocks);
      for (int x = 0; x < num_clocks; ++x)
        delayed[x] = std::min(v[x] + 1, out.clock_bounds[x] + 1);
      if (location.invariant.satisfied(delayed)) {
        ActionChoice tick;
        tick.action = out.tick_action;
        tick.reward = options.zero_regular_rewards ? 0.0 : location.rate;
        tick.successors = {{intern(loc, delayed), 1.0}};
        choices.push_back(std::move(tick));
      }
    }

    if (choices.empty()) {
      // dead or absorbed state: zero-reward stutter keeps the POMDP total
      ActionChoice stutter;
      stutter.action = out.tick_action;
      stutter.successors = {{id, 1.0}};
      choices.push_back(std::move(stutter));
    }
    std::sort(choices.begin(), choices.end(),
              [](const ActionChoice& a, const ActionChoice& b) { return a.action < b.action; });
    out.pomdp.choices[id] = std::move(choices);
  }

  if (sink_state >= 0) {
    ActionChoice stutter;
    stutter.action = out.tick_action;
    stutter.successors = {{sink_state, 1.0}};
    out.pomdp.choices[sink_state] = {std::move(stutter)};
  }

  // labels carry over: a label names every digital observation whose
  // location observation is in the labelled set
  for (const auto& [name, obs_set] : model.labels) {
    std::vector<int> digital;
    for (std::size_t o = 0; o < out.obs_legend.size(); ++o)
      if (out.obs_legend[o].first >= 0 &&
          std::binary_search(obs_set.begin(), obs_set.end(), out.obs_legend[o].first))
        digital.push_back(static_cast<int>(o));
    out.pomdp.labels.emplace(name, std::move(digital));
  }
  return out;
}

/// Static Def 5 conditions plus the reset-nonzero restriction discovered
/// while exploring the digital semantics. Report style; digital values stay
/// well-defined even when the reset restriction fails (only the dense-time
/// equivalence guarantee is lost).
inline std::vector<RestrictionIssue> check_restrictions(const Popta& model,
                                                        std::size_t state_cap = 1'000'000) {
  std::vector<RestrictionIssue> issues;
  const int num_clocks = model.num_clocks();

  for (std::size_t l = 0; l < model.locations.size(); ++l) {
    const auto& loc = model.locations[l];
    for (const auto& cmd : loc.commands) {
      double total = 0.0;
      for (const auto& outcome : cmd.outcomes) {
        total += outcome.prob;
        if (outcome.prob < 0.0)
          issues.push_back({"negative branch probability in " + loc.name});
      }
      if (std::abs(total - 1.0) > tol::dist_sum)
        issues.push_back({"distribution for location " + loc.name + ", action " +
                          model.action_names[cmd.action] + " sums to " +
                          std::to_string(total)});
      if (!std::isfinite(cmd.action_reward) || cmd.action_reward < 0.0)
        issues.push_back({"action reward in " + loc.name + " is negative or not finite"});
    }
    if (!std::isfinite(loc.rate) || loc.rate < 0.0)
      issues.push_back({"location reward rate in " + loc.name + " is negative or not finite"});
  }

  // observation-equal locations must agree on invariant and enabling
  std::map<int, std::size_t> representative;
  for (std::size_t l = 0; l < model.locations.size(); ++l) {
    const auto& loc = model.locations[l];
    auto [it, fresh] = representative.emplace(loc.observation, l);
    if (fresh) continue;
    const auto& ref = model.locations[it->second];
    if (!(loc.invariant.normalized(num_clocks).conjuncts ==
          ref.invariant.normalized(num_clocks).conjuncts))
      issues.push_back({"locations " + ref.name + " and " + loc.name +
                        " share an observation but have different invariants"});
    auto enabling = [&](const PoptaLocation& x) {
      std::vector<std::pair<int, std::vector<ClockConstraint::Conjunct>>> out_;
      for (const auto& cmd : x.commands)
        out_.emplace_back(cmd.action, cmd.guard.normalized(num_clocks).conjuncts);
      return out_;
    };
    if (enabling(loc) != enabling(ref))
      issues.push_back({"locations " + ref.name + " and " + loc.name +
                        " share an observation but have different enabling conditions"});
  }

  // the initial location must be uniquely observable
  for (std::size_t l = 0; l < model.locations.size(); ++l)
    if (static_cast<int>(l) != model.initial &&
        model.locations[l].observation == model.locations[model.initial].observation)
      issues.push_back({"initial observation is shared by location " + model.locations[l].name});

  // reset-nonzero restriction, checked on the reachable digital states
  try {
    DigitalOptions opts;
    opts.state_cap = state_cap;
    const auto digital = digitalize(model, opts);
    for (const auto& rv : digital.reset_violations) {
      std::string valuation;
      for (std::size_t x = 0; x < rv.valuation.size(); ++x)
        valuation += (x ? "," : "") + model.clock_names[x] + "=" +
                     std::to_string(rv.valuation[x]);
      issues.push_back({"clock " + model.clock_names[rv.clock] + " is reset while zero at " +
                        model.locations[rv.location].name + "[" + valuation + "] on action " +
                        model.action_names[rv.action]});
    }
  } catch (const ModelError& e) {
    issues.push_back({e.what()});
  }
  return issues;
}

}  // namespace poptaverif

#endif
