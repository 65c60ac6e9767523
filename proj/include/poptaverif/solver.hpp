#ifndef POPTAVERIF_SOLVER_HPP
#define POPTAVERIF_SOLVER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "poptaverif/common.hpp"
#include "poptaverif/grid.hpp"
#include "poptaverif/mdp_analysis.hpp"
#include "poptaverif/pomdp.hpp"

namespace poptaverif {

enum class ObjectiveKind { ProbabilisticReachability, ExpectedReward };
enum class Direction { Min, Max };

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::ProbabilisticReachability;
  Direction direction = Direction::Max;
  TargetSpec target;

  double pinned_value() const {
    return kind == ObjectiveKind::ProbabilisticReachability ? 1.0 : 0.0;
  }
};

enum class BoundSide { Lower, Upper };

/// The grid value over-approximates maximizing objectives and
/// under-approximates minimizing ones; the synthesized strategy supplies the
/// other side.
inline BoundSide bound_side(const ObjectiveSpec& obj) {
  return obj.direction == Direction::Max ? BoundSide::Upper : BoundSide::Lower;
}

struct SolverOptions {
  double eps = 1e-6;
  long max_iters = -1;  // -1: 10 * M * |S|
  int threads = 1;
  std::uint64_t grid_point_limit = 2'000'000;
};

/// Grid of one observation class plus its slice of the flat value array.
struct ClassGrid {
  std::vector<int> members;  // sorted state indices
  GridSpec spec{1, 1};
  std::vector<GridPoint> points;  // lexicographic; index == grid_rank
  std::size_t offset = 0;
  bool target = false;
};

struct ValueTable {
  ObjectiveSpec objective;
  int resolution = 1;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  std::uint64_t total_points = 0;
  std::vector<ClassGrid> classes;  // indexed by observation
  std::vector<double> values;      // flat, classes[c].offset + rank

  double value_at_point(int cls, std::size_t rank) const {
    return values[classes[cls].offset + rank];
  }
};

namespace detail {

inline std::vector<double> dense_in_class(const Belief& b, const ClassGrid& grid) {
  std::vector<double> dense(grid.members.size(), 0.0);
  std::size_t m = 0;
  for (const auto& [s, p] : b.support) {
    while (m < grid.members.size() && grid.members[m] < s) ++m;
    if (m == grid.members.size() || grid.members[m] != s)
      throw ContractError("belief support leaves its observation class");
    dense[m] = p;
  }
  return dense;
}

inline Belief belief_from_dense(const ClassGrid& grid, int cls,
                                const std::vector<double>& dense) {
  Belief b;
  b.obs_class = cls;
  for (std::size_t i = 0; i < dense.size(); ++i)
    if (dense[i] > 0.0) b.support.emplace_back(grid.members[i], dense[i]);
  return b;
}

template <typename Fn>
inline void parallel_for(std::size_t count, int threads, Fn&& fn) {
  if (threads <= 1 || count < 2048) {
    fn(std::size_t{0}, count);
    return;
  }
  const int workers = std::min<std::size_t>(threads, count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

struct BackupTerm {
  std::size_t index;  // flat value index
  double coeff;
};

struct ActionBackup {
  int action = -1;
  double base = 0.0;
  std::vector<BackupTerm> terms;
};

/// Synchronous (Jacobi) sweeps over precomputed backups until the sup-norm
/// residual drops below eps. `cells` maps each mutable value slot to its
/// action backups.
struct SweepOutcome {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

inline SweepOutcome run_sweeps(const std::vector<std::size_t>& slots,
                               const std::vector<std::vector<ActionBackup>>& cells,
                               std::vector<double>& values, Direction direction,
                               double eps, long max_iters, int threads) {
  std::vector<double> next(slots.size(), 0.0);
  SweepOutcome out;
  for (long iter = 0; iter < max_iters; ++iter) {
    parallel_for(slots.size(), threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        double best = 0.0;
        bool first = true;
        for (const auto& b : cells[i]) {
          double q = b.base;
          for (const auto& t : b.terms) q += t.coeff * values[t.index];
          if (first || (direction == Direction::Max ? q > best : q < best)) best = q;
          first = false;
        }
        next[i] = first ? 0.0 : best;
      }
    });
    out.residual = 0.0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      out.residual = std::max(out.residual, std::abs(next[i] - values[slots[i]]));
      values[slots[i]] = next[i];
    }
    out.iterations = static_cast<int>(iter) + 1;
    if (out.residual <= eps) {
      out.converged = true;
      break;
    }
  }
  if (slots.empty()) out.converged = true;
  return out;
}

}  // namespace detail

/// Expected-reward objectives require the target to be reached with
/// probability 1 under every strategy of the underlying MDP; otherwise the
/// value diverges. Throws naming a witness state.
inline void check_reward_prerequisite(const Pomdp& model, const TargetSpec& target) {
  const int n = model.num_states();
  std::vector<bool> target_states(n, false);
  for (int s = 0; s < n; ++s) target_states[s] = target.contains(model.obs[s]);
  const auto almost_sure = prob1_under_all_strategies(model, target_states);
  const auto reach = reachable_states(model);
  for (int s = 0; s < n; ++s)
    if (reach[s] && !almost_sure[s])
      throw ModelError(
          "expected reward diverges: from reachable state " + model.state_names[s] +
          " some strategy avoids the target with positive probability");
}

/// Per-class Lovejoy grids for every observation class of the model.
inline std::vector<ClassGrid> build_class_grids(const Pomdp& model, const TargetSpec& target,
                                                int resolution,
                                                std::uint64_t grid_point_limit) {
  const auto members = model.observation_classes();
  std::vector<ClassGrid> classes(members.size());
  std::uint64_t total = 0;
  for (std::size_t c = 0; c < members.size(); ++c) {
    classes[c].members = members[c];
    classes[c].target = target.contains(static_cast<int>(c));
    if (members[c].empty()) continue;
    classes[c].spec = GridSpec{static_cast<int>(members[c].size()), resolution};
    total += grid_count(classes[c].spec);
    if (total > grid_point_limit)
      throw CapacityError("factored grid exceeds " + std::to_string(grid_point_limit) +
                          " points at resolution " + std::to_string(resolution));
  }
  std::size_t offset = 0;
  for (auto& cg : classes) {
    cg.offset = offset;
    if (!cg.members.empty()) {
      cg.points = enumerate_grid(cg.spec, grid_point_limit);
      offset += cg.points.size();
    }
  }
  return classes;
}

/// Values of a solved table at an arbitrary belief: pinned on target classes,
/// barycentric interpolation elsewhere.
inline double table_value(const ValueTable& table, const Belief& b) {
  const ClassGrid& grid = table.classes.at(b.obs_class);
  if (grid.target) return table.objective.pinned_value();
  if (grid.points.empty()) throw LookupError("no grid for the belief's observation class");
  const auto dense = detail::dense_in_class(b, grid);
  const auto corners = triangulate(dense, grid.spec);
  return interpolate(corners, [&](const GridPoint& g) {
    return table.values[grid.offset + grid_rank(g, grid.spec)];
  });
}

/// Interface used by strategy synthesis: approximate value of a belief and of
/// one-step action backups, as defined by whichever engine produced it.
class BeliefValueSource {
 public:
  virtual ~BeliefValueSource() = default;
  virtual double value(const Belief& b) const = 0;
  virtual double qvalue(const Belief& b, int action) const = 0;
};

struct SolveResult {
  ObjectiveSpec objective;
  int resolution = 1;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  std::uint64_t point_count = 0;
  std::shared_ptr<const ValueTable> table;
  std::shared_ptr<const BeliefValueSource> source;

  double value_at(const Belief& b) const { return source->value(b); }
};

namespace detail {

class GridTableSource final : public BeliefValueSource {
 public:
  GridTableSource(const Pomdp& model, std::shared_ptr<const ValueTable> table)
      : model_(&model), table_(std::move(table)) {}

  double value(const Belief& b) const override { return table_value(*table_, b); }

  double qvalue(const Belief& b, int action) const override {
    double q = table_->objective.kind == ObjectiveKind::ExpectedReward
                   ? belief_reward(*model_, b, action)
                   : 0.0;
    for (const auto& [o, p] : obs_probability(*model_, b, action))
      q += p * value(belief_update(*model_, b, action, o));
    return q;
  }

 private:
  const Pomdp* model_;
  std::shared_ptr<const ValueTable> table_;
};

}  // namespace detail

/// Approximate value iteration over grid beliefs: each backup interpolates
/// the successor belief through the triangulation, so values live on the
/// grid itself. All (point, action, observation) successor decompositions are
/// precomputed once.
inline SolveResult value_iteration(const Pomdp& model, const ObjectiveSpec& objective,
                                   int resolution, const SolverOptions& options = {}) {
  if (objective.kind == ObjectiveKind::ExpectedReward)
    check_reward_prerequisite(model, objective.target);

  auto table = std::make_shared<ValueTable>();
  table->objective = objective;
  table->resolution = resolution;
  table->classes = build_class_grids(model, objective.target, resolution,
                                     options.grid_point_limit);
  std::size_t total = 0;
  for (const auto& cg : table->classes) total += cg.points.size();
  table->total_points = total;
  table->values.assign(total, 0.0);

  const bool reward = objective.kind == ObjectiveKind::ExpectedReward;
  for (const auto& cg : table->classes)
    if (cg.target)
      for (std::size_t r = 0; r < cg.points.size(); ++r)
        table->values[cg.offset + r] = objective.pinned_value();

  // precompute backups for every mutable grid point
  std::vector<std::size_t> slots;
  std::vector<std::vector<detail::ActionBackup>> cells;
  for (const auto& cg : table->classes) {
    if (cg.target || cg.points.empty()) continue;
    const int rep = cg.members.front();
    for (std::size_t rank = 0; rank < cg.points.size(); ++rank) {
      const GridPoint& g = cg.points[rank];
      Belief gb;
      gb.obs_class = model.obs[rep];
      for (std::size_t i = 0; i < cg.members.size(); ++i)
        if (g.counts[i] > 0)
          gb.support.emplace_back(cg.members[i],
                                  static_cast<double>(g.counts[i]) / resolution);
      std::vector<detail::ActionBackup> backups;
      for (const auto& choice : model.choices[rep]) {
        detail::ActionBackup backup;
        backup.action = choice.action;
        backup.base = reward ? belief_reward(model, gb, choice.action) : 0.0;
        for (const auto& [o, p_o] : obs_probability(model, gb, choice.action)) {
          const Belief succ = belief_update(model, gb, choice.action, o);
          const ClassGrid& oc = table->classes[o];
          if (oc.target) {
            backup.base += p_o * objective.pinned_value();
            continue;
          }
          const auto dense = detail::dense_in_class(succ, oc);
          const auto corners = triangulate(dense, oc.spec);
          for (const auto& corner : corners.entries)
            backup.terms.push_back(
                {oc.offset + grid_rank(corner.point, oc.spec), p_o * corner.weight});
        }
        backups.push_back(std::move(backup));
      }
      slots.push_back(cg.offset + rank);
      cells.push_back(std::move(backups));
    }
  }

  const long max_iters = options.max_iters > 0
                             ? options.max_iters
                             : 10L * resolution * std::max(1, model.num_states());
  const auto sweep = detail::run_sweeps(slots, cells, table->values, objective.direction,
                                        options.eps, max_iters, options.threads);

  SolveResult result;
  result.objective = objective;
  result.resolution = resolution;
  result.converged = sweep.converged;
  result.iterations = sweep.iterations;
  result.residual = sweep.residual;
  result.point_count = table->total_points;
  result.table = table;
  result.source = std::make_shared<detail::GridTableSource>(model, table);
  return result;
}

namespace detail {

using BeliefKey = std::pair<int, std::vector<std::pair<int, std::int64_t>>>;

inline BeliefKey belief_key(const Belief& b, double quantum = tol::dedup) {
  BeliefKey key;
  key.first = b.obs_class;
  key.second.reserve(b.support.size());
  for (const auto& [s, p] : b.support)
    key.second.emplace_back(s, static_cast<std::int64_t>(std::llround(p / quantum)));
  return key;
}

/// The dual representation: values are kept on the finite set of successor
/// beliefs {g^{a,o}} (plus the initial belief); a backup decomposes the
/// *current* belief into grid corners and advances each corner one step.
struct DualData {
  ObjectiveSpec objective;
  std::vector<ClassGrid> classes;
  std::vector<Belief> beliefs;
  std::vector<double> values;
  std::map<BeliefKey, int> index;
  // per class, per rank, aligned with enabled actions: successor belief ids
  struct CornerStep {
    int action = -1;
    double reward = 0.0;
    std::vector<std::pair<int, double>> successors;  // (belief id, probability)
  };
  std::vector<std::vector<std::vector<CornerStep>>> corner_steps;
};

class DualSource final : public BeliefValueSource {
 public:
  DualSource(const Pomdp& model, std::shared_ptr<const DualData> data)
      : model_(&model), data_(std::move(data)) {}

  double value(const Belief& b) const override {
    if (data_->objective.target.contains(b.obs_class))
      return data_->objective.pinned_value();
    double best = 0.0;
    bool first = true;
    for (const auto& choice : model_->choices[b.support.front().first]) {
      const double q = qvalue(b, choice.action);
      if (first || (data_->objective.direction == Direction::Max ? q > best : q < best))
        best = q;
      first = false;
    }
    return best;
  }

  double qvalue(const Belief& b, int action) const override {
    const ClassGrid& grid = data_->classes.at(b.obs_class);
    const auto dense = dense_in_class(b, grid);
    const auto corners = triangulate(dense, grid.spec);
    double q = data_->objective.kind == ObjectiveKind::ExpectedReward
                   ? belief_reward(*model_, b, action)
                   : 0.0;
    for (const auto& corner : corners.entries) {
      const auto& steps = data_->corner_steps[b.obs_class][grid_rank(corner.point, grid.spec)];
      const CornerStepRef step = find_step(steps, action);
      for (const auto& [id, p] : step->successors) q += corner.weight * p * data_->values[id];
    }
    return q;
  }

 private:
  using CornerStepRef = const DualData::CornerStep*;
  static CornerStepRef find_step(const std::vector<DualData::CornerStep>& steps, int action) {
    for (const auto& s : steps)
      if (s.action == action) return &s;
    throw ContractError("action not enabled at grid corner");
  }

  const Pomdp* model_;
  std::shared_ptr<const DualData> data_;
};

}  // namespace detail

/// Alternative engine: the representation function is applied to the current
/// belief; values live on the finite set {g^{a,o}}. Offered for
/// cross-validation of the primary engine.
inline SolveResult value_iteration_dual(const Pomdp& model, const ObjectiveSpec& objective,
                                        int resolution, const SolverOptions& options = {}) {
  if (objective.kind == ObjectiveKind::ExpectedReward)
    check_reward_prerequisite(model, objective.target);

  auto data = std::make_shared<detail::DualData>();
  data->objective = objective;
  data->classes = build_class_grids(model, objective.target, resolution,
                                    options.grid_point_limit);

  const bool reward = objective.kind == ObjectiveKind::ExpectedReward;
  auto intern = [&](const Belief& b) {
    const auto key = detail::belief_key(b);
    auto it = data->index.find(key);
    if (it != data->index.end()) return it->second;
    const int id = static_cast<int>(data->beliefs.size());
    data->beliefs.push_back(b);
    data->index.emplace(key, id);
    return id;
  };

  // corner dynamics: one step from every grid point of every class
  data->corner_steps.resize(data->classes.size());
  for (std::size_t c = 0; c < data->classes.size(); ++c) {
    const ClassGrid& cg = data->classes[c];
    if (cg.points.empty() || cg.target) continue;
    const int rep = cg.members.front();
    data->corner_steps[c].resize(cg.points.size());
    for (std::size_t rank = 0; rank < cg.points.size(); ++rank) {
      Belief gb;
      gb.obs_class = static_cast<int>(c);
      for (std::size_t i = 0; i < cg.members.size(); ++i)
        if (cg.points[rank].counts[i] > 0)
          gb.support.emplace_back(cg.members[i],
                                  static_cast<double>(cg.points[rank].counts[i]) / resolution);
      for (const auto& choice : model.choices[rep]) {
        detail::DualData::CornerStep step;
        step.action = choice.action;
        step.reward = reward ? belief_reward(model, gb, choice.action) : 0.0;
        for (const auto& [o, p_o] : obs_probability(model, gb, choice.action))
          step.successors.emplace_back(intern(belief_update(model, gb, choice.action, o)), p_o);
        data->corner_steps[c][rank].push_back(std::move(step));
      }
    }
  }
  const int initial_id = intern(point_belief(model, model.initial));

  // backups for every interned belief
  data->values.assign(data->beliefs.size(), 0.0);
  std::vector<std::size_t> slots;
  std::vector<std::vector<detail::ActionBackup>> cells;
  for (std::size_t id = 0; id < data->beliefs.size(); ++id) {
    const Belief& b = data->beliefs[id];
    if (objective.target.contains(b.obs_class)) {
      data->values[id] = objective.pinned_value();
      continue;
    }
    const ClassGrid& grid = data->classes[b.obs_class];
    const auto corners = triangulate(detail::dense_in_class(b, grid), grid.spec);
    std::vector<detail::ActionBackup> backups;
    for (const auto& choice : model.choices[b.support.front().first]) {
      detail::ActionBackup backup;
      backup.action = choice.action;
      backup.base = reward ? belief_reward(model, b, choice.action) : 0.0;
      for (const auto& corner : corners.entries) {
        const auto& steps =
            data->corner_steps[b.obs_class][grid_rank(corner.point, grid.spec)];
        for (const auto& step : steps) {
          if (step.action != choice.action) continue;
          for (const auto& [succ, p] : step.successors) {
            if (objective.target.contains(data->beliefs[succ].obs_class))
              backup.base += corner.weight * p * objective.pinned_value();
            else
              backup.terms.push_back({static_cast<std::size_t>(succ), corner.weight * p});
          }
        }
      }
      backups.push_back(std::move(backup));
    }
    slots.push_back(id);
    cells.push_back(std::move(backups));
  }

  const long max_iters = options.max_iters > 0
                             ? options.max_iters
                             : 10L * resolution * std::max(1, model.num_states());
  const auto sweep = detail::run_sweeps(slots, cells, data->values, objective.direction,
                                        options.eps, max_iters, options.threads);

  // grid-point view of the dual values, for export and uniform reporting
  auto table = std::make_shared<ValueTable>();
  table->objective = objective;
  table->resolution = resolution;
  table->classes = data->classes;
  std::size_t total = 0;
  for (const auto& cg : table->classes) total += cg.points.size();
  table->total_points = total;
  table->values.assign(total, 0.0);
  auto source = std::make_shared<detail::DualSource>(model, data);
  for (std::size_t c = 0; c < table->classes.size(); ++c) {
    const ClassGrid& cg = table->classes[c];
    for (std::size_t rank = 0; rank < cg.points.size(); ++rank) {
      if (cg.target) {
        table->values[cg.offset + rank] = objective.pinned_value();
        continue;
      }
      Belief gb;
      gb.obs_class = static_cast<int>(c);
      for (std::size_t i = 0; i < cg.members.size(); ++i)
        if (cg.points[rank].counts[i] > 0)
          gb.support.emplace_back(cg.members[i],
                                  static_cast<double>(cg.points[rank].counts[i]) / resolution);
      table->values[cg.offset + rank] = source->value(gb);
    }
  }

  SolveResult result;
  result.objective = objective;
  result.resolution = resolution;
  result.converged = sweep.converged;
  result.iterations = sweep.iterations;
  result.residual = sweep.residual;
  result.point_count = static_cast<std::uint64_t>(data->beliefs.size());
  result.table = table;
  result.source = source;
  (void)initial_id;
  return result;
}

}  // namespace poptaverif

#endif
