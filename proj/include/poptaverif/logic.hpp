#ifndef POPTAVERIF_LOGIC_HPP
#define POPTAVERIF_LOGIC_HPP

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "poptaverif/common.hpp"
#include "poptaverif/popta.hpp"
#include "poptaverif/solver.hpp"

namespace poptaverif {

/// Propositional layer: Boolean combinations of observations and closed
/// clock constraints, with negation only on observations.
struct Alpha {
  enum class Kind { True, Obs, NotObs, ClockLe, ClockGe, And, Or };
  Kind kind = Kind::True;
  std::string name;  // observation/label name, or clock name
  int bound = 0;
  std::vector<Alpha> children;

  static Alpha make_true() { return {}; }
  static Alpha obs(std::string n) { return {Kind::Obs, std::move(n), 0, {}}; }

  bool is_true() const { return kind == Kind::True; }
};

struct PathFormula {
  Alpha left = Alpha::make_true();  // F alpha is true U alpha
  Alpha right;
  bool bounded = false;
  int bound = 0;
};

struct RewardBody {
  enum class Kind { Reach, Cumulative, Instant };
  Kind kind = Kind::Reach;
  int bound = 0;
  Alpha alpha;
};

enum class Relation { Le, Lt, Ge, Gt };

struct Property {
  bool is_reward = false;
  enum class Query { MinValue, MaxValue, Threshold } query = Query::MaxValue;
  Relation relation = Relation::Ge;
  double threshold = 0.0;
  PathFormula path;    // probabilistic operator
  RewardBody reward;   // reward operator
  std::string source;
};

namespace detail {

class PropertyParser {
 public:
  explicit PropertyParser(const std::string& text) : text_(text) {}

  Property parse() {
    Property prop;
    prop.source = text_;
    skip_space();
    const auto [op, query, relation, threshold] = parse_head();
    prop.is_reward = op == 'R';
    prop.query = query;
    prop.relation = relation;
    prop.threshold = threshold;
    expect('[');
    if (prop.is_reward)
      prop.reward = parse_reward_body();
    else
      prop.path = parse_path();
    expect(']');
    skip_space();
    if (pos_ < text_.size()) fail("trailing input after property");
    return prop;
  }

 private:
  std::tuple<char, Property::Query, Relation, double> parse_head() {
    const std::string head = parse_ident();
    char op = 0;
    Property::Query query = Property::Query::Threshold;
    if (head == "Pmax" || head == "Pmin" || head == "Rmax" || head == "Rmin") {
      op = head[0];
      query = head.substr(1) == "max" ? Property::Query::MaxValue : Property::Query::MinValue;
      skip_space();
      if (!consume("=?")) fail("expected =? after " + head);
      return {op, query, Relation::Ge, 0.0};
    }
    if (head == "P" || head == "R") {
      op = head[0];
      const Relation rel = parse_relation();
      const double threshold = parse_number();
      if (op == 'P' && (threshold < 0.0 || threshold > 1.0))
        fail("probability threshold must lie in [0,1]");
      if (op == 'R' && threshold < 0.0) fail("reward threshold must be non-negative");
      return {op, Property::Query::Threshold, rel, threshold};
    }
    fail("property must start with P or R");
    return {};
  }

  PathFormula parse_path() {
    PathFormula path;
    skip_space();
    if (peek_ident() == "F") {
      parse_ident();
      std::tie(path.bounded, path.bound) = parse_optional_bound();
      path.right = parse_alpha();
      return path;
    }
    path.left = parse_alpha();
    skip_space();
    if (peek_ident() != "U") fail("expected U in path formula");
    parse_ident();
    std::tie(path.bounded, path.bound) = parse_optional_bound();
    path.right = parse_alpha();
    return path;
  }

  RewardBody parse_reward_body() {
    RewardBody body;
    skip_space();
    const std::string head = peek_ident();
    if (head == "F") {
      parse_ident();
      body.kind = RewardBody::Kind::Reach;
      body.alpha = parse_alpha();
      return body;
    }
    if (head == "C") {
      parse_ident();
      skip_space();
      if (!consume("<=")) fail("expected <= after C");
      body.kind = RewardBody::Kind::Cumulative;
      body.bound = parse_nat();
      return body;
    }
    if (head == "I") {
      parse_ident();
      skip_space();
      if (!consume("=")) fail("expected = after I");
      body.kind = RewardBody::Kind::Instant;
      body.bound = parse_nat();
      return body;
    }
    fail("expected F, C<=t or I=t in reward operator");
    return body;
  }

  std::pair<bool, int> parse_optional_bound() {
    skip_space();
    if (consume("<=")) return {true, parse_nat()};
    return {false, 0};
  }

  Alpha parse_alpha() { return parse_or(); }

  Alpha parse_or() {
    Alpha left = parse_and();
    skip_space();
    while (pos_ < text_.size() && text_[pos_] == '|') {
      ++pos_;
      Alpha right = parse_and();
      Alpha node{Alpha::Kind::Or, "", 0, {}};
      node.children.push_back(std::move(left));
      node.children.push_back(std::move(right));
      left = std::move(node);
      skip_space();
    }
    return left;
  }

  Alpha parse_and() {
    Alpha left = parse_factor();
    skip_space();
    while (pos_ < text_.size() && text_[pos_] == '&') {
      ++pos_;
      Alpha right = parse_factor();
      Alpha node{Alpha::Kind::And, "", 0, {}};
      node.children.push_back(std::move(left));
      node.children.push_back(std::move(right));
      left = std::move(node);
      skip_space();
    }
    return left;
  }

  Alpha parse_factor() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of property");
    if (text_[pos_] == '(') {
      ++pos_;
      Alpha inner = parse_alpha();
      expect(')');
      return inner;
    }
    if (text_[pos_] == '!') {
      ++pos_;
      const std::string name = parse_ident();
      if (name.empty()) fail("expected an observation name after !");
      skip_space();
      if (pos_ < text_.size() && is_relation_start())
        fail("negation applies to observations only, not clock constraints");
      return {Alpha::Kind::NotObs, name, 0, {}};
    }
    const std::string name = parse_ident();
    if (name.empty()) fail("expected an observation name, clock constraint or true");
    if (name == "true") return Alpha::make_true();
    if (name == "P" || name == "R" || name == "Pmax" || name == "Pmin" || name == "Rmax" ||
        name == "Rmin") {
      skip_space();
      if (pos_ < text_.size() && (is_relation_start() || text_[pos_] == '='))
        fail("nested P/R operators are not supported");
    }
    skip_space();
    if (pos_ < text_.size() && (is_relation_start() || text_[pos_] == '=')) {
      if (consume("<=")) return {Alpha::Kind::ClockLe, name, parse_nat(), {}};
      if (consume(">=")) return {Alpha::Kind::ClockGe, name, parse_nat(), {}};
      if (consume("=")) {
        const int b = parse_nat();
        Alpha node{Alpha::Kind::And, "", 0, {}};
        node.children.push_back({Alpha::Kind::ClockLe, name, b, {}});
        node.children.push_back({Alpha::Kind::ClockGe, name, b, {}});
        return node;
      }
      fail("clock constraints must be closed: use <=, >= or =");
    }
    return Alpha::obs(name);
  }

  Relation parse_relation() {
    skip_space();
    if (consume("<=")) return Relation::Le;
    if (consume(">=")) return Relation::Ge;
    if (consume("<")) return Relation::Lt;
    if (consume(">")) return Relation::Gt;
    fail("expected a relation (<=, <, >=, >)");
    return Relation::Ge;
  }

  bool is_relation_start() const {
    const char c = text_[pos_];
    return c == '<' || c == '>';
  }

  double parse_number() {
    skip_space();
    std::size_t end = pos_;
    while (end < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[end])) || text_[end] == '.'))
      ++end;
    if (end == pos_) fail("expected a number");
    double num = std::stod(text_.substr(pos_, end - pos_));
    std::size_t after = end;
    // rational threshold p/q
    if (after < text_.size() && text_[after] == '/') {
      std::size_t dend = after + 1;
      while (dend < text_.size() && std::isdigit(static_cast<unsigned char>(text_[dend]))) ++dend;
      if (dend == after + 1) fail("expected a denominator");
      num /= std::stod(text_.substr(after + 1, dend - after - 1));
      after = dend;
    }
    pos_ = after;
    return num;
  }

  int parse_nat() {
    skip_space();
    std::size_t end = pos_;
    while (end < text_.size() && std::isdigit(static_cast<unsigned char>(text_[end]))) ++end;
    if (end == pos_) fail("expected a natural number");
    const int value = std::stoi(text_.substr(pos_, end - pos_));
    pos_ = end;
    return value;
  }

  std::string parse_ident() {
    skip_space();
    std::size_t end = pos_;
    while (end < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[end])) ||
                                  text_[end] == '_'))
      ++end;
    const std::string out = text_.substr(pos_, end - pos_);
    pos_ = end;
    return out;
  }

  std::string peek_ident() {
    const std::size_t save = pos_;
    const std::string out = parse_ident();
    pos_ = save;
    return out;
  }

  bool consume(const std::string& token) {
    skip_space();
    if (text_.compare(pos_, token.size(), token) != 0) return false;
    // do not let "<=" match when "<" is requested
    if (token == "<" && pos_ + 1 < text_.size() && text_[pos_ + 1] == '=') return false;
    if (token == ">" && pos_ + 1 < text_.size() && text_[pos_ + 1] == '=') return false;
    pos_ += token.size();
    return true;
  }

  void expect(char c) {
    skip_space();
    if (pos_ >= text_.size() || text_[pos_] != c)
      fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(message, 1, static_cast<int>(pos_) + 1);
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses the property surface syntax, e.g. "Pmax=? [ F o5 ]",
/// "P>=0.5 [ true U<=10 goal ]", "Rmin=? [ F done ]", "R<=2 [ C<=5 ]".
inline Property parse_property(const std::string& text) {
  return detail::PropertyParser(text).parse();
}

enum class AnalysisMode { Verify, Synthesize };

/// Everything downstream of the property reduction: the (possibly extended)
/// model, the objective, and how to recognize targets after digitalization.
struct Reduction {
  Popta model;
  ObjectiveKind kind = ObjectiveKind::ProbabilisticReachability;
  Direction direction = Direction::Max;
  Property property;
  enum class TargetMode { AlphaClasses, FrontierStates, FrontierSink } target_mode =
      TargetMode::AlphaClasses;
  Alpha target_alpha;
  std::optional<Alpha> until_left;  // absorb states violating left & !right
  DigitalOptions digital;
};

namespace detail {

struct ResolvedAlpha {
  std::function<bool(int, const std::vector<int>&)> predicate;  // (loc-obs, valuation)
};

inline ResolvedAlpha resolve_alpha(const Alpha& alpha, const Popta& model) {
  switch (alpha.kind) {
    case Alpha::Kind::True:
      return {[](int, const std::vector<int>&) { return true; }};
    case Alpha::Kind::Obs:
    case Alpha::Kind::NotObs: {
      auto it = model.labels.find(alpha.name);
      std::vector<int> set;
      if (it != model.labels.end()) {
        set = it->second;
      } else {
        // a bare location-observation name also works
        auto obs_it = std::find(model.observation_names.begin(), model.observation_names.end(),
                                alpha.name);
        if (obs_it == model.observation_names.end())
          throw ParseError("unknown observation or label '" + alpha.name + "'", 1, 1);
        set = {static_cast<int>(obs_it - model.observation_names.begin())};
      }
      std::sort(set.begin(), set.end());
      const bool negate = alpha.kind == Alpha::Kind::NotObs;
      return {[set, negate](int loc_obs, const std::vector<int>&) {
        const bool in = std::binary_search(set.begin(), set.end(), loc_obs);
        return negate ? !in : in;
      }};
    }
    case Alpha::Kind::ClockLe:
    case Alpha::Kind::ClockGe: {
      auto it = std::find(model.clock_names.begin(), model.clock_names.end(), alpha.name);
      if (it == model.clock_names.end())
        throw ParseError("unknown clock '" + alpha.name + "'", 1, 1);
      const int clock = static_cast<int>(it - model.clock_names.begin());
      const int bound = alpha.bound;
      const bool upper = alpha.kind == Alpha::Kind::ClockLe;
      return {[clock, bound, upper](int, const std::vector<int>& v) {
        return upper ? v[clock] <= bound : v[clock] >= bound;
      }};
    }
    case Alpha::Kind::And:
    case Alpha::Kind::Or: {
      std::vector<ResolvedAlpha> kids;
      for (const auto& child : alpha.children) kids.push_back(resolve_alpha(child, model));
      const bool conj = alpha.kind == Alpha::Kind::And;
      return {[kids, conj](int o, const std::vector<int>& v) {
        for (const auto& k : kids) {
          const bool b = k.predicate(o, v);
          if (conj && !b) return false;
          if (!conj && b) return true;
        }
        return conj;
      }};
    }
  }
  throw ContractError("unhandled alpha node");
}

inline void collect_clock_bounds(const Alpha& alpha, const Popta& model,
                                 std::vector<int>& bounds) {
  if (alpha.kind == Alpha::Kind::ClockLe || alpha.kind == Alpha::Kind::ClockGe) {
    auto it = std::find(model.clock_names.begin(), model.clock_names.end(), alpha.name);
    if (it != model.clock_names.end())
      bounds[it - model.clock_names.begin()] =
          std::max(bounds[it - model.clock_names.begin()], alpha.bound);
  }
  for (const auto& child : alpha.children) collect_clock_bounds(child, model, bounds);
}

inline int add_property_clock(Popta& model, int bound) {
  const int idx = model.num_clocks();
  model.clock_names.push_back("[t]");
  model.clock_bound_override.resize(model.clock_names.size(), -1);
  model.clock_bound_override[idx] = bound;
  return idx;
}

inline Direction threshold_direction(Relation rel, AnalysisMode mode) {
  const bool lower_rel = rel == Relation::Ge || rel == Relation::Gt;
  // verifying >= p asks whether even the minimum clears p; synthesizing <= p
  // asks whether the minimum can be pushed below p
  if (mode == AnalysisMode::Verify) return lower_rel ? Direction::Min : Direction::Max;
  return lower_rel ? Direction::Max : Direction::Min;
}

}  // namespace detail

/// Step (A): reduces every supported operator to probabilistic reachability
/// or expected cumulative reward over a (possibly extended) model.
inline Reduction reduce(const Popta& model, const Property& property, AnalysisMode mode) {
  Reduction red;
  red.model = model;
  red.property = property;
  red.model.clock_bound_override.resize(model.clock_names.size(), -1);

  if (property.query == Property::Query::Threshold)
    red.direction = detail::threshold_direction(property.relation, mode);
  else
    red.direction = property.query == Property::Query::MaxValue ? Direction::Max
                                                                : Direction::Min;

  // clock constants mentioned by the property enter the k_x bounds
  std::vector<int> alpha_bounds(model.clock_names.size(), 0);
  if (!property.is_reward) {
    detail::collect_clock_bounds(property.path.left, model, alpha_bounds);
    detail::collect_clock_bounds(property.path.right, model, alpha_bounds);
  } else {
    detail::collect_clock_bounds(property.reward.alpha, model, alpha_bounds);
  }
  for (std::size_t x = 0; x < alpha_bounds.size(); ++x)
    red.model.clock_bound_override[x] =
        std::max(red.model.clock_bound_override[x], alpha_bounds[x]);

  if (!property.is_reward) {
    red.kind = ObjectiveKind::ProbabilisticReachability;
    Alpha target = property.path.right;
    if (property.path.bounded) {
      const int y = detail::add_property_clock(red.model, property.path.bound);
      Alpha conj{Alpha::Kind::And, "", 0, {}};
      conj.children.push_back(std::move(target));
      conj.children.push_back(
          {Alpha::Kind::ClockLe, red.model.clock_names[y], property.path.bound, {}});
      target = std::move(conj);
    }
    red.target_alpha = std::move(target);
    if (!property.path.left.is_true()) red.until_left = property.path.left;
    return red;
  }

  red.kind = ObjectiveKind::ExpectedReward;
  switch (property.reward.kind) {
    case RewardBody::Kind::Reach:
      red.target_alpha = property.reward.alpha;
      break;
    case RewardBody::Kind::Cumulative: {
      const int y = detail::add_property_clock(red.model, property.reward.bound);
      red.digital.frontier_clock = y;
      red.digital.frontier_bound = property.reward.bound;
      red.digital.frontier_snapshot = false;
      red.target_mode = Reduction::TargetMode::FrontierStates;
      break;
    }
    case RewardBody::Kind::Instant: {
      const int y = detail::add_property_clock(red.model, property.reward.bound);
      red.digital.frontier_clock = y;
      red.digital.frontier_bound = property.reward.bound;
      red.digital.frontier_snapshot = true;
      red.digital.zero_regular_rewards = true;
      red.target_mode = Reduction::TargetMode::FrontierSink;
      break;
    }
  }
  return red;
}

/// Finalizes the digital options of a reduction: resolves the until context
/// against the model so states violating left & !right absorb.
inline DigitalOptions digital_options_for(const Reduction& red, std::size_t state_cap) {
  DigitalOptions opts = red.digital;
  opts.state_cap = state_cap;
  if (red.until_left) {
    const auto left = detail::resolve_alpha(*red.until_left, red.model);
    const auto right = detail::resolve_alpha(red.target_alpha, red.model);
    opts.absorb_nontarget = [left, right](int o, const std::vector<int>& v) {
      return !left.predicate(o, v) && !right.predicate(o, v);
    };
  }
  return opts;
}

/// Grounds the reduction's target description into concrete digital
/// observation indices.
inline TargetSpec ground_targets(const Reduction& red, const DigitalPomdp& digital) {
  TargetSpec target;
  switch (red.target_mode) {
    case Reduction::TargetMode::AlphaClasses: {
      const auto resolved = detail::resolve_alpha(red.target_alpha, red.model);
      for (std::size_t o = 0; o < digital.obs_legend.size(); ++o) {
        const auto& [loc_obs, valuation] = digital.obs_legend[o];
        if (loc_obs >= 0 && resolved.predicate(loc_obs, valuation))
          target.target_observations.push_back(static_cast<int>(o));
      }
      break;
    }
    case Reduction::TargetMode::FrontierStates:
      for (std::size_t o = 0; o < digital.obs_legend.size(); ++o) {
        const auto& [loc_obs, valuation] = digital.obs_legend[o];
        if (loc_obs >= 0 && valuation[red.digital.frontier_clock] >= red.digital.frontier_bound)
          target.target_observations.push_back(static_cast<int>(o));
      }
      break;
    case Reduction::TargetMode::FrontierSink:
      if (digital.sink_observation >= 0)
        target.target_observations.push_back(digital.sink_observation);
      break;
  }
  std::sort(target.target_observations.begin(), target.target_observations.end());
  if (target.target_observations.empty())
    throw ModelError("the property's target matches no reachable observation");
  return target;
}

}  // namespace poptaverif

#endif
