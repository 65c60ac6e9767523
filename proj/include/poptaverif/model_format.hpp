#ifndef POPTAVERIF_MODEL_FORMAT_HPP
#define POPTAVERIF_MODEL_FORMAT_HPP

#include <algorithm>
#include <cctype>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "poptaverif/common.hpp"
#include "poptaverif/pomdp.hpp"
#include "poptaverif/popta.hpp"

namespace poptaverif {

struct SourcePos {
  int line = 1;
  int column = 1;
};

struct NumExpr {
  enum class Kind { Literal, Ref, Add, Sub, Mul, Div, Neg };
  Kind kind = Kind::Literal;
  long value = 0;
  std::string name;
  std::vector<NumExpr> children;
  SourcePos pos;

  bool operator==(const NumExpr& o) const {
    return kind == o.kind && value == o.value && name == o.name && children == o.children;
  }
};

struct BoolExpr {
  enum class Kind { True, False, Cmp, And, Or, Not };
  enum class Cmp { Eq, Ne, Le, Lt, Ge, Gt };
  Kind kind = Kind::True;
  Cmp cmp = Cmp::Eq;
  std::vector<NumExpr> operands;   // two for Cmp
  std::vector<BoolExpr> children;  // And/Or/Not
  SourcePos pos;

  bool operator==(const BoolExpr& o) const {
    return kind == o.kind && cmp == o.cmp && operands == o.operands && children == o.children;
  }
};

struct ConstDecl {
  std::string name;
  NumExpr value;
  SourcePos pos;
  bool operator==(const ConstDecl& o) const { return name == o.name && value == o.value; }
};

struct ClockDecl {
  std::string name;
  std::optional<NumExpr> bound;
  SourcePos pos;
  bool operator==(const ClockDecl& o) const { return name == o.name && bound == o.bound; }
};

struct VarDecl {
  std::string name;
  bool observable = true;
  NumExpr low, high;
  std::optional<NumExpr> init;
  SourcePos pos;
  bool operator==(const VarDecl& o) const {
    return name == o.name && observable == o.observable && low == o.low && high == o.high &&
           init == o.init;
  }
};

struct UpdateAst {
  std::string name;
  NumExpr value;
  SourcePos pos;
  bool operator==(const UpdateAst& o) const { return name == o.name && value == o.value; }
};

struct OutcomeAst {
  NumExpr prob;
  std::vector<UpdateAst> updates;  // empty: no change ("true")
  SourcePos pos;
  bool operator==(const OutcomeAst& o) const { return prob == o.prob && updates == o.updates; }
};

struct CommandAst {
  std::string action;
  BoolExpr guard;
  std::vector<OutcomeAst> outcomes;
  SourcePos pos;
  bool operator==(const CommandAst& o) const {
    return action == o.action && guard == o.guard && outcomes == o.outcomes;
  }
};

struct InvariantAst {
  BoolExpr selector;  // over observable variables
  BoolExpr clocks;    // conjunction of closed clock atoms
  SourcePos pos;
  bool operator==(const InvariantAst& o) const {
    return selector == o.selector && clocks == o.clocks;
  }
};

struct RewardAst {
  bool rate = true;  // false: action reward
  std::string action;
  BoolExpr selector;
  NumExpr value;
  SourcePos pos;
  bool operator==(const RewardAst& o) const {
    return rate == o.rate && action == o.action && selector == o.selector && value == o.value;
  }
};

struct LabelAst {
  std::string name;
  BoolExpr expr;  // over observable variables
  SourcePos pos;
  bool operator==(const LabelAst& o) const { return name == o.name && expr == o.expr; }
};

/// Parsed .poptam document: declarations plus guarded-command body.
struct ModelDocument {
  bool is_popta = true;
  std::string name;
  std::vector<ConstDecl> consts;
  std::vector<ClockDecl> clocks;
  std::vector<VarDecl> variables;
  std::vector<std::string> actions;
  std::vector<InvariantAst> invariants;
  std::vector<CommandAst> commands;
  std::vector<RewardAst> rewards;
  std::vector<LabelAst> labels;

  bool operator==(const ModelDocument& o) const {
    return is_popta == o.is_popta && name == o.name && consts == o.consts &&
           clocks == o.clocks && variables == o.variables && actions == o.actions &&
           invariants == o.invariants && commands == o.commands && rewards == o.rewards &&
           labels == o.labels;
  }
};

namespace detail {

struct Token {
  enum class Kind { Ident, Int, Symbol, End };
  Kind kind = Kind::End;
  std::string text;
  long value = 0;
  SourcePos pos;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) { advance(); }

  const Token& peek() const { return current_; }

  Token next() {
    Token t = current_;
    advance();
    return t;
  }

 private:
  void advance() {
    skip();
    current_.pos = {line_, col_};
    if (pos_ >= text_.size()) {
      current_ = {Token::Kind::End, "", 0, {line_, col_}};
      return;
    }
    const char c = text_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string ident;
      while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                     text_[pos_] == '_'))
        ident += take();
      current_ = {Token::Kind::Ident, std::move(ident), 0, current_.pos};
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::string digits;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
        digits += take();
      current_ = {Token::Kind::Int, digits, std::stol(digits), current_.pos};
      return;
    }
    for (const char* sym : {"->", "<=", ">=", "!=", ".."}) {
      if (text_.compare(pos_, 2, sym) == 0) {
        take();
        take();
        current_ = {Token::Kind::Symbol, sym, 0, current_.pos};
        return;
      }
    }
    static const std::string singles = ";:[](){}'=<>!+-*/&|,.";
    if (singles.find(c) != std::string::npos) {
      current_ = {Token::Kind::Symbol, std::string(1, take()), 0, current_.pos};
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
  }

  void skip() {
    for (;;) {
      while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) take();
      if (pos_ + 1 < text_.size() && text_[pos_] == '/' && text_[pos_ + 1] == '/') {
        while (pos_ < text_.size() && text_[pos_] != '\n') take();
        continue;
      }
      break;
    }
  }

  char take() {
    const char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token current_;
};

class ModelParser {
 public:
  explicit ModelParser(const std::string& text) : lexer_(text) {}

  ModelDocument parse() {
    ModelDocument doc;
    const Token head = expect_ident();
    if (head.text == "popta")
      doc.is_popta = true;
    else if (head.text == "pomdp")
      doc.is_popta = false;
    else
      throw ParseError("model must start with 'popta' or 'pomdp'", head.pos.line,
                       head.pos.column);
    doc.name = expect_ident().text;
    expect(";");
    while (lexer_.peek().kind != Token::Kind::End) parse_item(doc);
    return doc;
  }

 private:
  void parse_item(ModelDocument& doc) {
    const Token& t = lexer_.peek();
    if (t.kind == Token::Kind::Symbol && t.text == "[") {
      doc.commands.push_back(parse_command());
      return;
    }
    const Token head = expect_ident();
    if (head.text == "const") {
      ConstDecl d;
      d.pos = head.pos;
      d.name = expect_ident().text;
      expect("=");
      d.value = parse_num_expr();
      expect(";");
      doc.consts.push_back(std::move(d));
    } else if (head.text == "clock") {
      ClockDecl d;
      d.pos = head.pos;
      d.name = expect_ident().text;
      if (lexer_.peek().kind == Token::Kind::Ident && lexer_.peek().text == "bound") {
        lexer_.next();
        d.bound = parse_num_expr();
      }
      expect(";");
      doc.clocks.push_back(std::move(d));
    } else if (head.text == "observable" || head.text == "hidden") {
      VarDecl d;
      d.pos = head.pos;
      d.observable = head.text == "observable";
      d.name = expect_ident().text;
      expect(":");
      expect("[");
      d.low = parse_num_expr();
      expect("..");
      d.high = parse_num_expr();
      expect("]");
      if (lexer_.peek().kind == Token::Kind::Ident && lexer_.peek().text == "init") {
        lexer_.next();
        d.init = parse_num_expr();
      }
      expect(";");
      doc.variables.push_back(std::move(d));
    } else if (head.text == "action") {
      doc.actions.push_back(expect_ident().text);
      while (lexer_.peek().kind == Token::Kind::Symbol && lexer_.peek().text == ",") {
        lexer_.next();
        doc.actions.push_back(expect_ident().text);
      }
      expect(";");
    } else if (head.text == "invariant") {
      InvariantAst d;
      d.pos = head.pos;
      d.selector = parse_bool_expr();
      expect(":");
      d.clocks = parse_bool_expr();
      expect(";");
      doc.invariants.push_back(std::move(d));
    } else if (head.text == "reward") {
      RewardAst d;
      d.pos = head.pos;
      const Token kind = expect_ident();
      if (kind.text == "rate") {
        d.rate = true;
      } else if (kind.text == "action") {
        d.rate = false;
        d.action = expect_ident().text;
      } else {
        throw ParseError("expected 'rate' or 'action' after reward", kind.pos.line,
                         kind.pos.column);
      }
      d.selector = parse_bool_expr();
      expect(":");
      d.value = parse_num_expr();
      expect(";");
      doc.rewards.push_back(std::move(d));
    } else if (head.text == "label") {
      LabelAst d;
      d.pos = head.pos;
      d.name = expect_ident().text;
      expect("=");
      d.expr = parse_bool_expr();
      expect(";");
      doc.labels.push_back(std::move(d));
    } else {
      throw ParseError("unexpected declaration '" + head.text + "'", head.pos.line,
                       head.pos.column);
    }
  }

  CommandAst parse_command() {
    CommandAst cmd;
    cmd.pos = lexer_.peek().pos;
    expect("[");
    cmd.action = expect_ident().text;
    expect("]");
    cmd.guard = parse_bool_expr();
    expect("->");
    cmd.outcomes.push_back(parse_outcome());
    while (lexer_.peek().kind == Token::Kind::Symbol && lexer_.peek().text == "+") {
      lexer_.next();
      cmd.outcomes.push_back(parse_outcome());
    }
    expect(";");
    return cmd;
  }

  OutcomeAst parse_outcome() {
    OutcomeAst out;
    out.pos = lexer_.peek().pos;
    out.prob = parse_num_expr();
    expect(":");
    if (lexer_.peek().kind == Token::Kind::Ident && lexer_.peek().text == "true") {
      lexer_.next();
      return out;  // no updates
    }
    out.updates.push_back(parse_update());
    while (lexer_.peek().kind == Token::Kind::Symbol && lexer_.peek().text == "&") {
      lexer_.next();
      out.updates.push_back(parse_update());
    }
    return out;
  }

  UpdateAst parse_update() {
    UpdateAst up;
    up.pos = lexer_.peek().pos;
    expect("(");
    up.name = expect_ident().text;
    expect("'");
    expect("=");
    up.value = parse_num_expr();
    expect(")");
    return up;
  }

  BoolExpr parse_bool_expr() { return parse_or(); }

  BoolExpr parse_or() {
    BoolExpr left = parse_and();
    while (lexer_.peek().kind == Token::Kind::Symbol && lexer_.peek().text == "|") {
      const SourcePos pos = lexer_.next().pos;
      BoolExpr node;
      node.kind = BoolExpr::Kind::Or;
      node.pos = pos;
      node.children.push_back(std::move(left));
      node.children.push_back(parse_and());
      left = std::move(node);
    }
    return left;
  }

  BoolExpr parse_and() {
    BoolExpr left = parse_bool_factor();
    while (lexer_.peek().kind == Token::Kind::Symbol && lexer_.peek().text == "&") {
      const SourcePos pos = lexer_.next().pos;
      BoolExpr node;
      node.kind = BoolExpr::Kind::And;
      node.pos = pos;
      node.children.push_back(std::move(left));
      node.children.push_back(parse_bool_factor());
      left = std::move(node);
    }
    return left;
  }

  BoolExpr parse_bool_factor() {
    const Token& t = lexer_.peek();
    if (t.kind == Token::Kind::Symbol && t.text == "!") {
      BoolExpr node;
      node.pos = lexer_.next().pos;
      node.kind = BoolExpr::Kind::Not;
      node.children.push_back(parse_bool_factor());
      return node;
    }
    if (t.kind == Token::Kind::Symbol && t.text == "(") {
      lexer_.next();
      BoolExpr inner = parse_bool_expr();
      expect(")");
      return inner;
    }
    if (t.kind == Token::Kind::Ident && t.text == "true") {
      BoolExpr node;
      node.pos = lexer_.next().pos;
      node.kind = BoolExpr::Kind::True;
      return node;
    }
    if (t.kind == Token::Kind::Ident && t.text == "false") {
      BoolExpr node;
      node.pos = lexer_.next().pos;
      node.kind = BoolExpr::Kind::False;
      return node;
    }
    BoolExpr node;
    node.kind = BoolExpr::Kind::Cmp;
    node.pos = t.pos;
    node.operands.push_back(parse_num_expr());
    const Token op = lexer_.next();
    if (op.kind != Token::Kind::Symbol)
      throw ParseError("expected a comparison operator", op.pos.line, op.pos.column);
    if (op.text == "=")
      node.cmp = BoolExpr::Cmp::Eq;
    else if (op.text == "!=")
      node.cmp = BoolExpr::Cmp::Ne;
    else if (op.text == "<=")
      node.cmp = BoolExpr::Cmp::Le;
    else if (op.text == "<")
      node.cmp = BoolExpr::Cmp::Lt;
    else if (op.text == ">=")
      node.cmp = BoolExpr::Cmp::Ge;
    else if (op.text == ">")
      node.cmp = BoolExpr::Cmp::Gt;
    else
      throw ParseError("expected a comparison operator, found '" + op.text + "'", op.pos.line,
                       op.pos.column);
    node.operands.push_back(parse_num_expr());
    return node;
  }

  NumExpr parse_num_expr() { return parse_add(); }

  NumExpr parse_add() {
    NumExpr left = parse_mul();
    while (lexer_.peek().kind == Token::Kind::Symbol &&
           (lexer_.peek().text == "+" || lexer_.peek().text == "-")) {
      const Token op = lexer_.next();
      NumExpr node;
      node.pos = op.pos;
      node.kind = op.text == "+" ? NumExpr::Kind::Add : NumExpr::Kind::Sub;
      node.children.push_back(std::move(left));
      node.children.push_back(parse_mul());
      left = std::move(node);
    }
    return left;
  }

  NumExpr parse_mul() {
    NumExpr left = parse_num_factor();
    while (lexer_.peek().kind == Token::Kind::Symbol &&
           (lexer_.peek().text == "*" || lexer_.peek().text == "/")) {
      const Token op = lexer_.next();
      NumExpr node;
      node.pos = op.pos;
      node.kind = op.text == "*" ? NumExpr::Kind::Mul : NumExpr::Kind::Div;
      node.children.push_back(std::move(left));
      node.children.push_back(parse_num_factor());
      left = std::move(node);
    }
    return left;
  }

  NumExpr parse_num_factor() {
    const Token t = lexer_.next();
    if (t.kind == Token::Kind::Int) {
      NumExpr node;
      node.pos = t.pos;
      node.kind = NumExpr::Kind::Literal;
      node.value = t.value;
      return node;
    }
    if (t.kind == Token::Kind::Ident) {
      NumExpr node;
      node.pos = t.pos;
      node.kind = NumExpr::Kind::Ref;
      node.name = t.text;
      return node;
    }
    if (t.kind == Token::Kind::Symbol && t.text == "(") {
      NumExpr inner = parse_num_expr();
      expect(")");
      return inner;
    }
    if (t.kind == Token::Kind::Symbol && t.text == "-") {
      NumExpr node;
      node.pos = t.pos;
      node.kind = NumExpr::Kind::Neg;
      node.children.push_back(parse_num_factor());
      return node;
    }
    throw ParseError("expected a number, identifier or parenthesized expression", t.pos.line,
                     t.pos.column);
  }

  Token expect_ident() {
    const Token t = lexer_.next();
    if (t.kind != Token::Kind::Ident)
      throw ParseError("expected an identifier, found '" + t.text + "'", t.pos.line,
                       t.pos.column);
    return t;
  }

  void expect(const std::string& symbol) {
    const Token t = lexer_.next();
    if (t.kind != Token::Kind::Symbol || t.text != symbol)
      throw ParseError("expected '" + symbol + "', found '" + t.text + "'", t.pos.line,
                       t.pos.column);
  }

  Lexer lexer_;
};

inline std::string print_num(const NumExpr& e) {
  switch (e.kind) {
    case NumExpr::Kind::Literal:
      return std::to_string(e.value);
    case NumExpr::Kind::Ref:
      return e.name;
    case NumExpr::Kind::Neg:
      return "-(" + print_num(e.children[0]) + ")";
    case NumExpr::Kind::Add:
      return "(" + print_num(e.children[0]) + "+" + print_num(e.children[1]) + ")";
    case NumExpr::Kind::Sub:
      return "(" + print_num(e.children[0]) + "-" + print_num(e.children[1]) + ")";
    case NumExpr::Kind::Mul:
      return "(" + print_num(e.children[0]) + "*" + print_num(e.children[1]) + ")";
    case NumExpr::Kind::Div:
      return "(" + print_num(e.children[0]) + "/" + print_num(e.children[1]) + ")";
  }
  return "";
}

inline std::string print_bool(const BoolExpr& e) {
  switch (e.kind) {
    case BoolExpr::Kind::True:
      return "true";
    case BoolExpr::Kind::False:
      return "false";
    case BoolExpr::Kind::Not:
      return "!(" + print_bool(e.children[0]) + ")";
    case BoolExpr::Kind::And:
      return "(" + print_bool(e.children[0]) + " & " + print_bool(e.children[1]) + ")";
    case BoolExpr::Kind::Or:
      return "(" + print_bool(e.children[0]) + " | " + print_bool(e.children[1]) + ")";
    case BoolExpr::Kind::Cmp: {
      static const char* ops[] = {"=", "!=", "<=", "<", ">=", ">"};
      return print_num(e.operands[0]) + ops[static_cast<int>(e.cmp)] + print_num(e.operands[1]);
    }
  }
  return "";
}

}  // namespace detail

inline ModelDocument parse_model(const std::string& text) {
  return detail::ModelParser(text).parse();
}

/// Canonical text of a document; parse(print(doc)) == doc.
inline std::string print_model(const ModelDocument& doc) {
  std::string out = (doc.is_popta ? std::string("popta ") : std::string("pomdp ")) + doc.name +
                    ";\n";
  for (const auto& c : doc.consts)
    out += "const " + c.name + " = " + detail::print_num(c.value) + ";\n";
  for (const auto& c : doc.clocks) {
    out += "clock " + c.name;
    if (c.bound) out += " bound " + detail::print_num(*c.bound);
    out += ";\n";
  }
  for (const auto& v : doc.variables) {
    out += (v.observable ? std::string("observable ") : std::string("hidden ")) + v.name +
           " : [" + detail::print_num(v.low) + ".." + detail::print_num(v.high) + "]";
    if (v.init) out += " init " + detail::print_num(*v.init);
    out += ";\n";
  }
  for (const auto& a : doc.actions) out += "action " + a + ";\n";
  for (const auto& i : doc.invariants)
    out += "invariant " + detail::print_bool(i.selector) + " : " + detail::print_bool(i.clocks) +
           ";\n";
  for (const auto& c : doc.commands) {
    out += "[" + c.action + "] " + detail::print_bool(c.guard) + " -> ";
    for (std::size_t i = 0; i < c.outcomes.size(); ++i) {
      if (i) out += " + ";
      out += detail::print_num(c.outcomes[i].prob) + ":";
      if (c.outcomes[i].updates.empty()) {
        out += "true";
      } else {
        for (std::size_t u = 0; u < c.outcomes[i].updates.size(); ++u) {
          if (u) out += "&";
          out += "(" + c.outcomes[i].updates[u].name + "'=" +
                 detail::print_num(c.outcomes[i].updates[u].value) + ")";
        }
      }
    }
    out += ";\n";
  }
  for (const auto& r : doc.rewards) {
    out += "reward ";
    out += r.rate ? "rate " : ("action " + r.action + " ");
    out += detail::print_bool(r.selector) + " : " + detail::print_num(r.value) + ";\n";
  }
  for (const auto& l : doc.labels)
    out += "label " + l.name + " = " + detail::print_bool(l.expr) + ";\n";
  return out;
}

namespace detail {

/// Evaluation context: constants plus (optionally) a variable valuation.
struct EvalContext {
  const std::map<std::string, long>* consts = nullptr;
  const std::map<std::string, int>* var_index = nullptr;  // name -> position
  const std::vector<int>* valuation = nullptr;

  std::optional<long> lookup(const std::string& name) const {
    if (consts) {
      auto it = consts->find(name);
      if (it != consts->end()) return it->second;
    }
    if (var_index && valuation) {
      auto it = var_index->find(name);
      if (it != var_index->end()) return (*valuation)[it->second];
    }
    return std::nullopt;
  }
};

inline long eval_int(const NumExpr& e, const EvalContext& ctx) {
  switch (e.kind) {
    case NumExpr::Kind::Literal:
      return e.value;
    case NumExpr::Kind::Ref: {
      const auto v = ctx.lookup(e.name);
      if (!v)
        throw ParseError("undeclared identifier '" + e.name + "'", e.pos.line, e.pos.column);
      return *v;
    }
    case NumExpr::Kind::Neg:
      return -eval_int(e.children[0], ctx);
    case NumExpr::Kind::Add:
      return eval_int(e.children[0], ctx) + eval_int(e.children[1], ctx);
    case NumExpr::Kind::Sub:
      return eval_int(e.children[0], ctx) - eval_int(e.children[1], ctx);
    case NumExpr::Kind::Mul:
      return eval_int(e.children[0], ctx) * eval_int(e.children[1], ctx);
    case NumExpr::Kind::Div: {
      const long a = eval_int(e.children[0], ctx), b = eval_int(e.children[1], ctx);
      if (b == 0) throw ParseError("division by zero", e.pos.line, e.pos.column);
      if (a % b != 0)
        throw ParseError("integer expression divides inexactly", e.pos.line, e.pos.column);
      return a / b;
    }
  }
  return 0;
}

inline double eval_double(const NumExpr& e, const EvalContext& ctx) {
  switch (e.kind) {
    case NumExpr::Kind::Literal:
      return static_cast<double>(e.value);
    case NumExpr::Kind::Ref: {
      const auto v = ctx.lookup(e.name);
      if (!v)
        throw ParseError("undeclared identifier '" + e.name + "'", e.pos.line, e.pos.column);
      return static_cast<double>(*v);
    }
    case NumExpr::Kind::Neg:
      return -eval_double(e.children[0], ctx);
    case NumExpr::Kind::Add:
      return eval_double(e.children[0], ctx) + eval_double(e.children[1], ctx);
    case NumExpr::Kind::Sub:
      return eval_double(e.children[0], ctx) - eval_double(e.children[1], ctx);
    case NumExpr::Kind::Mul:
      return eval_double(e.children[0], ctx) * eval_double(e.children[1], ctx);
    case NumExpr::Kind::Div: {
      const double b = eval_double(e.children[1], ctx);
      if (b == 0.0) throw ParseError("division by zero", e.pos.line, e.pos.column);
      return eval_double(e.children[0], ctx) / b;
    }
  }
  return 0.0;
}

inline void collect_refs(const NumExpr& e, std::set<std::string>& out) {
  if (e.kind == NumExpr::Kind::Ref) out.insert(e.name);
  for (const auto& c : e.children) collect_refs(c, out);
}

inline void collect_refs(const BoolExpr& e, std::set<std::string>& out) {
  for (const auto& o : e.operands) collect_refs(o, out);
  for (const auto& c : e.children) collect_refs(c, out);
}

inline bool eval_bool(const BoolExpr& e, const EvalContext& ctx) {
  switch (e.kind) {
    case BoolExpr::Kind::True:
      return true;
    case BoolExpr::Kind::False:
      return false;
    case BoolExpr::Kind::Not:
      return !eval_bool(e.children[0], ctx);
    case BoolExpr::Kind::And:
      return eval_bool(e.children[0], ctx) && eval_bool(e.children[1], ctx);
    case BoolExpr::Kind::Or:
      return eval_bool(e.children[0], ctx) || eval_bool(e.children[1], ctx);
    case BoolExpr::Kind::Cmp: {
      const long a = eval_int(e.operands[0], ctx), b = eval_int(e.operands[1], ctx);
      switch (e.cmp) {
        case BoolExpr::Cmp::Eq:
          return a == b;
        case BoolExpr::Cmp::Ne:
          return a != b;
        case BoolExpr::Cmp::Le:
          return a <= b;
        case BoolExpr::Cmp::Lt:
          return a < b;
        case BoolExpr::Cmp::Ge:
          return a >= b;
        case BoolExpr::Cmp::Gt:
          return a > b;
      }
      return false;
    }
  }
  return false;
}

/// Splits a guard into its variable part (atoms over variables) and clock
/// part (closed atoms over clocks). Guards must be conjunctions of atoms.
struct SplitGuard {
  std::vector<const BoolExpr*> var_atoms;
  ClockConstraint clocks;
};

inline void split_guard(const BoolExpr& e, const std::map<std::string, int>& clock_index,
                        const EvalContext& const_ctx, SplitGuard& out) {
  switch (e.kind) {
    case BoolExpr::Kind::True:
      return;
    case BoolExpr::Kind::And:
      split_guard(e.children[0], clock_index, const_ctx, out);
      split_guard(e.children[1], clock_index, const_ctx, out);
      return;
    case BoolExpr::Kind::Cmp: {
      std::set<std::string> refs;
      collect_refs(e, refs);
      bool mentions_clock = false;
      for (const auto& r : refs) mentions_clock = mentions_clock || clock_index.count(r) > 0;
      if (!mentions_clock) {
        out.var_atoms.push_back(&e);
        return;
      }
      // clock atom: clock on the left, constant expression on the right
      if (e.operands[0].kind != NumExpr::Kind::Ref ||
          clock_index.find(e.operands[0].name) == clock_index.end())
        throw ParseError("clock constraints must have the clock on the left", e.pos.line,
                         e.pos.column);
      std::set<std::string> rhs_refs;
      collect_refs(e.operands[1], rhs_refs);
      for (const auto& r : rhs_refs)
        if (clock_index.count(r))
          throw ParseError("clock-to-clock comparisons are not allowed (diagonal-free)",
                           e.pos.line, e.pos.column);
      const int clock = clock_index.at(e.operands[0].name);
      const long bound = eval_int(e.operands[1], const_ctx);
      if (bound < 0)
        throw ParseError("clock bounds must be natural numbers", e.pos.line, e.pos.column);
      switch (e.cmp) {
        case BoolExpr::Cmp::Le:
          out.clocks.conjuncts.push_back({clock, true, static_cast<int>(bound)});
          return;
        case BoolExpr::Cmp::Ge:
          out.clocks.conjuncts.push_back({clock, false, static_cast<int>(bound)});
          return;
        case BoolExpr::Cmp::Eq:
          out.clocks.conjuncts.push_back({clock, true, static_cast<int>(bound)});
          out.clocks.conjuncts.push_back({clock, false, static_cast<int>(bound)});
          return;
        default:
          throw ParseError("clock constraints must be closed: use <=, >= or =", e.pos.line,
                           e.pos.column);
      }
    }
    default:
      throw ParseError("guards must be conjunctions of comparisons", e.pos.line, e.pos.column);
  }
}

}  // namespace detail

/// Either model kind, grounded.
struct Elaborated {
  std::variant<Popta, Pomdp> model;
  std::vector<std::string> variable_names;  // non-clock state variables, declaration order

  bool is_popta() const { return std::holds_alternative<Popta>(model); }
  Popta& popta() { return std::get<Popta>(model); }
  const Popta& popta() const { return std::get<Popta>(model); }
  Pomdp& pomdp() { return std::get<Pomdp>(model); }
  const Pomdp& pomdp() const { return std::get<Pomdp>(model); }
};

/// Grounds a document: variable valuations become explicit locations/states
/// (only clock-free-reachable ones), the observation function is derived from
/// the observable partition, constants are substituted.
inline Elaborated elaborate(const ModelDocument& doc) {
  Elaborated out;

  std::map<std::string, long> consts;
  for (const auto& c : doc.consts) {
    detail::EvalContext ctx{&consts, nullptr, nullptr};
    if (consts.count(c.name))
      throw ParseError("constant '" + c.name + "' declared twice", c.pos.line, c.pos.column);
    consts.emplace(c.name, detail::eval_int(c.value, ctx));
  }
  const detail::EvalContext const_ctx{&consts, nullptr, nullptr};

  if (!doc.is_popta && !doc.clocks.empty())
    throw ParseError("pomdp models cannot declare clocks", doc.clocks.front().pos.line,
                     doc.clocks.front().pos.column);
  if (!doc.is_popta && !doc.invariants.empty())
    throw ParseError("pomdp models cannot declare invariants", doc.invariants.front().pos.line,
                     doc.invariants.front().pos.column);

  std::map<std::string, int> clock_index;
  for (const auto& c : doc.clocks) {
    if (clock_index.count(c.name) || consts.count(c.name))
      throw ParseError("clock '" + c.name + "' clashes with another declaration", c.pos.line,
                       c.pos.column);
    clock_index.emplace(c.name, static_cast<int>(clock_index.size()));
  }

  struct Var {
    std::string name;
    bool observable;
    int low, high, init;
  };
  std::vector<Var> vars;
  std::map<std::string, int> var_index;
  for (const auto& v : doc.variables) {
    if (var_index.count(v.name) || clock_index.count(v.name) || consts.count(v.name))
      throw ParseError("variable '" + v.name + "' clashes with another declaration", v.pos.line,
                       v.pos.column);
    Var var;
    var.name = v.name;
    var.observable = v.observable;
    var.low = static_cast<int>(detail::eval_int(v.low, const_ctx));
    var.high = static_cast<int>(detail::eval_int(v.high, const_ctx));
    if (var.low > var.high)
      throw ParseError("empty range for variable '" + v.name + "'", v.pos.line, v.pos.column);
    var.init = v.init ? static_cast<int>(detail::eval_int(*v.init, const_ctx)) : var.low;
    if (var.init < var.low || var.init > var.high)
      throw ParseError("initial value of '" + v.name + "' is outside its range", v.pos.line,
                       v.pos.column);
    var_index.emplace(v.name, static_cast<int>(vars.size()));
    vars.push_back(std::move(var));
    out.variable_names.push_back(v.name);
  }
  if (vars.empty()) throw ParseError("model declares no state variables", 1, 1);

  std::map<std::string, int> action_index;
  for (const auto& a : doc.actions) {
    if (action_index.count(a))
      throw ParseError("action '" + a + "' declared twice", 1, 1);
    action_index.emplace(a, static_cast<int>(action_index.size()));
  }
  for (const auto& cmd : doc.commands)
    if (!action_index.count(cmd.action))
      throw ParseError("undeclared action '" + cmd.action + "'", cmd.pos.line, cmd.pos.column);
  for (const auto& r : doc.rewards)
    if (!r.rate && !action_index.count(r.action))
      throw ParseError("reward references undeclared action '" + r.action + "'", r.pos.line,
                       r.pos.column);

  // pre-split every command guard
  struct GroundCommand {
    const CommandAst* ast;
    detail::SplitGuard guard;
  };
  std::vector<GroundCommand> commands;
  for (const auto& cmd : doc.commands) {
    GroundCommand g{&cmd, {}};
    detail::split_guard(cmd.guard, clock_index, const_ctx, g.guard);
    if (!doc.is_popta && !g.guard.clocks.is_true())
      throw ParseError("pomdp models cannot use clock guards", cmd.pos.line, cmd.pos.column);
    commands.push_back(std::move(g));
  }

  auto var_guard_holds = [&](const GroundCommand& g, const std::vector<int>& valuation) {
    detail::EvalContext ctx{&consts, &var_index, &valuation};
    for (const auto* atom : g.guard.var_atoms)
      if (!detail::eval_bool(*atom, ctx)) return false;
    return true;
  };

  // clock-free reachable valuations, breadth-first and deterministic
  std::vector<int> init_valuation;
  for (const auto& v : vars) init_valuation.push_back(v.init);
  std::map<std::vector<int>, int> location_index;
  std::vector<std::vector<int>> locations;
  std::deque<int> frontier;
  auto intern_location = [&](const std::vector<int>& valuation, const SourcePos& pos) {
    for (std::size_t i = 0; i < vars.size(); ++i)
      if (valuation[i] < vars[i].low || valuation[i] > vars[i].high)
        throw ParseError("update drives variable '" + vars[i].name + "' to " +
                             std::to_string(valuation[i]) + ", outside its range",
                         pos.line, pos.column);
    auto it = location_index.find(valuation);
    if (it != location_index.end()) return it->second;
    const int id = static_cast<int>(locations.size());
    if (locations.size() >= 2'000'000ull)
      throw CapacityError("variable grounding exceeds two million locations");
    location_index.emplace(valuation, id);
    locations.push_back(valuation);
    frontier.push_back(id);
    return id;
  };
  intern_location(init_valuation, SourcePos{});

  struct GroundedOutcome {
    double prob;
    std::vector<int> resets;
    int location;
  };
  struct GroundedCommand {
    int action;
    ClockConstraint guard;
    std::vector<GroundedOutcome> outcomes;
    const CommandAst* ast;
  };
  std::vector<std::vector<GroundedCommand>> per_location;

  while (!frontier.empty()) {
    const int id = frontier.front();
    frontier.pop_front();
    const std::vector<int> valuation = locations[id];
    detail::EvalContext ctx{&consts, &var_index, &valuation};
    std::vector<GroundedCommand> grounded;
    std::map<int, const CommandAst*> seen_actions;
    for (const auto& g : commands) {
      if (!var_guard_holds(g, valuation)) continue;
      const int action = action_index.at(g.ast->action);
      if (auto [it, fresh] = seen_actions.emplace(action, g.ast); !fresh)
        throw ParseError("two commands for action '" + g.ast->action +
                             "' are enabled in the same location",
                         g.ast->pos.line, g.ast->pos.column);
      GroundedCommand gc;
      gc.action = action;
      gc.guard = g.guard.clocks;
      gc.ast = g.ast;
      for (const auto& outcome : g.ast->outcomes) {
        const double p = detail::eval_double(outcome.prob, const_ctx);
        if (p < -tol::dist_sum)
          throw ParseError("negative branch probability", outcome.pos.line, outcome.pos.column);
        GroundedOutcome go;
        go.prob = p;
        std::vector<int> next = valuation;
        for (const auto& up : outcome.updates) {
          if (auto ci = clock_index.find(up.name); ci != clock_index.end()) {
            if (up.value.kind != NumExpr::Kind::Literal || up.value.value != 0)
              throw ParseError("clocks can only be reset to 0", up.pos.line, up.pos.column);
            go.resets.push_back(ci->second);
            continue;
          }
          auto vi = var_index.find(up.name);
          if (vi == var_index.end())
            throw ParseError("update of undeclared identifier '" + up.name + "'", up.pos.line,
                             up.pos.column);
          next[vi->second] = static_cast<int>(detail::eval_int(up.value, ctx));
        }
        std::sort(go.resets.begin(), go.resets.end());
        if (p > 0.0) {
          go.location = intern_location(next, outcome.pos);
          gc.outcomes.push_back(std::move(go));
        }
      }
      double total = 0.0;
      for (const auto& o : g.ast->outcomes) total += detail::eval_double(o.prob, const_ctx);
      if (std::abs(total - 1.0) > tol::dist_sum)
        throw ParseError("outcome probabilities sum to " + std::to_string(total),
                         g.ast->pos.line, g.ast->pos.column);
      grounded.push_back(std::move(gc));
    }
    std::sort(grounded.begin(), grounded.end(),
              [](const GroundedCommand& a, const GroundedCommand& b) {
                return a.action < b.action;
              });
    if (per_location.size() <= static_cast<std::size_t>(id)) per_location.resize(id + 1);
    per_location[id] = std::move(grounded);
  }
  per_location.resize(locations.size());

  auto valuation_name = [&](const std::vector<int>& valuation, bool observable_only) {
    std::string name;
    for (std::size_t i = 0; i < vars.size(); ++i) {
      if (observable_only && !vars[i].observable) continue;
      name += (name.empty() ? "" : ",") + vars[i].name + "=" + std::to_string(valuation[i]);
    }
    if (name.empty()) name = "-";
    return name;
  };

  // observations from the observable partition
  std::map<std::string, int> obs_index;
  std::vector<std::string> obs_names;
  std::vector<int> location_obs(locations.size());
  for (std::size_t l = 0; l < locations.size(); ++l) {
    const std::string name = valuation_name(locations[l], true);
    auto [it, fresh] = obs_index.emplace(name, static_cast<int>(obs_names.size()));
    if (fresh) obs_names.push_back(name);
    location_obs[l] = it->second;
  }

  // labels must be observation-definable
  std::map<std::string, std::vector<int>> labels;
  for (const auto& label : doc.labels) {
    std::set<std::string> refs;
    detail::collect_refs(label.expr, refs);
    for (const auto& r : refs) {
      if (consts.count(r)) continue;
      auto vi = var_index.find(r);
      if (vi == var_index.end())
        throw ParseError("label '" + label.name + "' references undeclared '" + r + "'",
                         label.pos.line, label.pos.column);
      if (!vars[vi->second].observable)
        throw ParseError("label '" + label.name + "' references hidden variable '" + r +
                             "'; targets must be observation-definable",
                         label.pos.line, label.pos.column);
    }
    std::set<int> matched;
    for (std::size_t l = 0; l < locations.size(); ++l) {
      detail::EvalContext ctx{&consts, &var_index, &locations[l]};
      if (detail::eval_bool(label.expr, ctx)) matched.insert(location_obs[l]);
    }
    labels.emplace(label.name, std::vector<int>(matched.begin(), matched.end()));
  }

  if (doc.is_popta) {
    Popta popta;
    popta.clock_names.resize(clock_index.size());
    for (const auto& [name, idx] : clock_index) popta.clock_names[idx] = name;
    popta.clock_bound_override.assign(clock_index.size(), -1);
    for (const auto& c : doc.clocks)
      if (c.bound)
        popta.clock_bound_override[clock_index.at(c.name)] =
            static_cast<int>(detail::eval_int(*c.bound, const_ctx));
    popta.action_names.resize(action_index.size());
    for (const auto& [name, idx] : action_index) popta.action_names[idx] = name;
    popta.observation_names = obs_names;
    popta.labels = labels;
    popta.initial = 0;

    // invariant selectors must be observation-definable
    for (const auto& inv : doc.invariants) {
      std::set<std::string> refs;
      detail::collect_refs(inv.selector, refs);
      for (const auto& r : refs) {
        if (consts.count(r)) continue;
        auto vi = var_index.find(r);
        if (vi == var_index.end())
          throw ParseError("invariant selector references undeclared '" + r + "'",
                           inv.pos.line, inv.pos.column);
        if (!vars[vi->second].observable)
          throw ParseError(
              "invariant selector references hidden variable '" + r +
                  "'; observation-equal locations must share invariants",
              inv.pos.line, inv.pos.column);
      }
    }

    for (std::size_t l = 0; l < locations.size(); ++l) {
      PoptaLocation loc;
      loc.name = valuation_name(locations[l], false);
      loc.observation = location_obs[l];
      detail::EvalContext ctx{&consts, &var_index, &locations[l]};
      for (const auto& inv : doc.invariants) {
        if (!detail::eval_bool(inv.selector, ctx)) continue;
        detail::SplitGuard split;
        detail::split_guard(inv.clocks, clock_index, const_ctx, split);
        if (!split.var_atoms.empty())
          throw ParseError("invariant clock part mentions variables", inv.pos.line,
                           inv.pos.column);
        for (const auto& c : split.clocks.conjuncts) loc.invariant.conjuncts.push_back(c);
      }
      for (const auto& r : doc.rewards) {
        if (!r.rate) continue;
        if (detail::eval_bool(r.selector, ctx))
          loc.rate += detail::eval_double(r.value, const_ctx);
      }
      for (const auto& gc : per_location[l]) {
        PoptaCommand cmd;
        cmd.action = gc.action;
        cmd.guard = gc.guard;
        for (const auto& r : doc.rewards) {
          if (r.rate || action_index.at(r.action) != gc.action) continue;
          if (detail::eval_bool(r.selector, ctx))
            cmd.action_reward += detail::eval_double(r.value, const_ctx);
        }
        for (const auto& o : gc.outcomes) cmd.outcomes.push_back({o.prob, o.resets, o.location});
        loc.commands.push_back(std::move(cmd));
      }
      popta.locations.push_back(std::move(loc));
    }
    for (const auto& r : doc.rewards)
      if (!r.rate && !action_index.count(r.action))
        throw ParseError("reward references undeclared action '" + r.action + "'", r.pos.line,
                         r.pos.column);
    out.model = std::move(popta);
    return out;
  }

  // pomdp kind: locations are the states
  Pomdp pomdp;
  pomdp.action_names.resize(action_index.size());
  for (const auto& [name, idx] : action_index) pomdp.action_names[idx] = name;
  pomdp.observation_names = obs_names;
  pomdp.labels = labels;
  pomdp.initial = 0;
  for (const auto& r : doc.rewards)
    if (r.rate)
      throw ParseError("pomdp models cannot declare rate rewards", r.pos.line, r.pos.column);
  for (std::size_t l = 0; l < locations.size(); ++l) {
    pomdp.state_names.push_back(valuation_name(locations[l], false));
    pomdp.obs.push_back(location_obs[l]);
    detail::EvalContext ctx{&consts, &var_index, &locations[l]};
    std::vector<ActionChoice> choices;
    for (const auto& gc : per_location[l]) {
      ActionChoice choice;
      choice.action = gc.action;
      for (const auto& r : doc.rewards) {
        if (r.rate || action_index.at(r.action) != gc.action) continue;
        if (detail::eval_bool(r.selector, ctx))
          choice.reward += detail::eval_double(r.value, const_ctx);
      }
      std::map<int, double> mass;
      for (const auto& o : gc.outcomes) mass[o.location] += o.prob;
      for (const auto& [succ, p] : mass) choice.successors.push_back({succ, p});
      choices.push_back(std::move(choice));
    }
    pomdp.choices.push_back(std::move(choices));
  }
  out.model = std::move(pomdp);
  return out;
}

}  // namespace poptaverif

#endif
