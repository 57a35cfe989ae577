#include "slotune/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "slotune/errors.hpp"

namespace slotune {

enum class Op { neg, lnot, add, sub, mul, div, lt, le, eq, ne, ge, gt, land, lor, implies };

struct Expression::Node {
  enum class Kind { literal, identifier, slot, unary, binary } kind;
  ExprValue literal{};
  std::string name;
  std::size_t slot = 0;
  Op op = Op::neg;
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

enum class Tok { number, string, ident, op, lparen, rparen, end };

struct Token {
  Tok kind;
  std::string text;
  double number = 0.0;
  std::size_t pos = 0;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + s.size(), v);
      if (ec != std::errc()) throw SchemaError("bad number in constraint at column " + std::to_string(i));
      i = static_cast<std::size_t>(ptr - s.data());
      out.push_back({Tok::number, std::string(s.substr(start, i - start)), v, start});
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
      out.push_back({Tok::ident, std::string(s.substr(start, i - start)), 0.0, start});
    } else if (c == '\'' || c == '"') {
      ++i;
      while (i < s.size() && s[i] != c) ++i;
      if (i == s.size()) throw SchemaError("unterminated string in constraint");
      out.push_back({Tok::string, std::string(s.substr(start + 1, i - start - 1)), 0.0, start});
      ++i;
    } else if (c == '(') {
      out.push_back({Tok::lparen, "(", 0.0, i++});
    } else if (c == ')') {
      out.push_back({Tok::rparen, ")", 0.0, i++});
    } else {
      static constexpr std::string_view two[] = {"<=", ">=", "==", "!="};
      bool matched = false;
      for (auto op : two) {
        if (s.substr(i, 2) == op) {
          out.push_back({Tok::op, std::string(op), 0.0, i});
          i += 2;
          matched = true;
          break;
        }
      }
      if (!matched) {
        if (std::string_view("<>+-*/").find(c) == std::string_view::npos)
          throw SchemaError(std::string("unexpected character '") + c + "' in constraint");
        out.push_back({Tok::op, std::string(1, c), 0.0, i++});
      }
    }
  }
  out.push_back({Tok::end, "", 0.0, s.size()});
  return out;
}

NodePtr make_binary(Op op, NodePtr l, NodePtr r) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::binary;
  n->op = op;
  n->lhs = std::move(l);
  n->rhs = std::move(r);
  return n;
}

NodePtr make_unary(Op op, NodePtr c) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::unary;
  n->op = op;
  n->lhs = std::move(c);
  return n;
}

NodePtr make_literal(ExprValue v) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::literal;
  n->literal = std::move(v);
  return n;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  NodePtr parse() {
    auto e = expr();
    if (peek().kind != Tok::end) fail("trailing input");
    return e;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  bool word(std::string_view w) const { return peek().kind == Tok::ident && peek().text == w; }
  bool op(std::string_view o) const { return peek().kind == Tok::op && peek().text == o; }
  [[noreturn]] void fail(const std::string& msg) const {
    throw SchemaError(msg + " at column " + std::to_string(peek().pos));
  }

  NodePtr expr() {
    auto l = disjunction();
    if (word("implies")) {
      ++pos_;
      return make_binary(Op::implies, l, expr());
    }
    return l;
  }
  NodePtr disjunction() {
    auto l = conjunction();
    while (word("or")) {
      ++pos_;
      l = make_binary(Op::lor, l, conjunction());
    }
    return l;
  }
  NodePtr conjunction() {
    auto l = negation();
    while (word("and")) {
      ++pos_;
      l = make_binary(Op::land, l, negation());
    }
    return l;
  }
  NodePtr negation() {
    if (word("not")) {
      ++pos_;
      return make_unary(Op::lnot, negation());
    }
    return comparison();
  }
  NodePtr comparison() {
    auto l = sum();
    static constexpr std::pair<std::string_view, Op> ops[] = {
        {"<", Op::lt}, {"<=", Op::le}, {"==", Op::eq}, {"!=", Op::ne}, {">=", Op::ge}, {">", Op::gt}};
    for (auto [text, o] : ops) {
      if (op(text)) {
        ++pos_;
        return make_binary(o, l, sum());
      }
    }
    return l;
  }
  NodePtr sum() {
    auto l = product();
    while (op("+") || op("-")) {
      const Op o = peek().text == "+" ? Op::add : Op::sub;
      ++pos_;
      l = make_binary(o, l, product());
    }
    return l;
  }
  NodePtr product() {
    auto l = unary();
    while (op("*") || op("/")) {
      const Op o = peek().text == "*" ? Op::mul : Op::div;
      ++pos_;
      l = make_binary(o, l, unary());
    }
    return l;
  }
  NodePtr unary() {
    if (op("-")) {
      ++pos_;
      return make_unary(Op::neg, unary());
    }
    return primary();
  }
  NodePtr primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::number:
        ++pos_;
        return make_literal(t.number);
      case Tok::string:
        ++pos_;
        return make_literal(t.text);
      case Tok::lparen: {
        ++pos_;
        auto e = expr();
        if (peek().kind != Tok::rparen) fail("expected ')'");
        ++pos_;
        return e;
      }
      case Tok::ident: {
        static constexpr std::string_view reserved[] = {"and", "or", "not", "implies"};
        for (auto r : reserved)
          if (t.text == r) fail("unexpected '" + t.text + "'");
        ++pos_;
        if (t.text == "true" || t.text == "True") return make_literal(true);
        if (t.text == "false" || t.text == "False") return make_literal(false);
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::identifier;
        n->name = t.text;
        return n;
      }
      default:
        fail("unexpected token '" + t.text + "'");
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

void collect(const NodePtr& n, std::vector<std::string>& out) {
  if (!n) return;
  if (n->kind == Node::Kind::identifier) {
    for (const auto& s : out)
      if (s == n->name) return;
    out.push_back(n->name);
  }
  collect(n->lhs, out);
  collect(n->rhs, out);
}

ExprType type_of(const ExprValue& v) {
  return static_cast<ExprType>(v.index());
}

const char* type_name(ExprType t) {
  switch (t) {
    case ExprType::number:
      return "number";
    case ExprType::boolean:
      return "boolean";
    case ExprType::string:
      return "string";
  }
  return "?";
}

ExprType check(const NodePtr& n, std::span<const ExprType> slots) {
  auto expect = [](ExprType got, ExprType want, const char* what) {
    if (got != want)
      throw ValidationError(std::string("operand of ") + what + " must be " + type_name(want) + ", got " +
                            type_name(got));
  };
  switch (n->kind) {
    case Node::Kind::literal:
      return type_of(n->literal);
    case Node::Kind::identifier:
      throw ValidationError("unbound identifier '" + n->name + "'");
    case Node::Kind::slot:
      return slots[n->slot];
    case Node::Kind::unary: {
      const auto t = check(n->lhs, slots);
      if (n->op == Op::neg) {
        expect(t, ExprType::number, "negation");
        return ExprType::number;
      }
      expect(t, ExprType::boolean, "'not'");
      return ExprType::boolean;
    }
    case Node::Kind::binary: {
      const auto l = check(n->lhs, slots);
      const auto r = check(n->rhs, slots);
      switch (n->op) {
        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div:
          expect(l, ExprType::number, "arithmetic");
          expect(r, ExprType::number, "arithmetic");
          return ExprType::number;
        case Op::lt:
        case Op::le:
        case Op::ge:
        case Op::gt:
          expect(l, ExprType::number, "ordering comparison");
          expect(r, ExprType::number, "ordering comparison");
          return ExprType::boolean;
        case Op::eq:
        case Op::ne:
          if (l != r)
            throw ValidationError(std::string("cannot compare ") + type_name(l) + " with " + type_name(r));
          return ExprType::boolean;
        default:
          expect(l, ExprType::boolean, "logical operator");
          expect(r, ExprType::boolean, "logical operator");
          return ExprType::boolean;
      }
    }
  }
  return ExprType::boolean;
}

ExprValue eval(const Node& n, std::span<const ExprValue> slots) {
  switch (n.kind) {
    case Node::Kind::literal:
      return n.literal;
    case Node::Kind::slot:
      return slots[n.slot];
    case Node::Kind::identifier:
      throw ValidationError("unbound identifier '" + n.name + "'");
    case Node::Kind::unary: {
      const auto v = eval(*n.lhs, slots);
      if (n.op == Op::neg) return -std::get<double>(v);
      return !std::get<bool>(v);
    }
    case Node::Kind::binary:
      break;
  }
  // Short-circuit logical operators before evaluating the right side.
  if (n.op == Op::land || n.op == Op::lor || n.op == Op::implies) {
    const bool l = std::get<bool>(eval(*n.lhs, slots));
    if (n.op == Op::land && !l) return false;
    if (n.op == Op::lor && l) return true;
    if (n.op == Op::implies && !l) return true;
    return std::get<bool>(eval(*n.rhs, slots));
  }
  const auto l = eval(*n.lhs, slots);
  const auto r = eval(*n.rhs, slots);
  switch (n.op) {
    case Op::add:
      return std::get<double>(l) + std::get<double>(r);
    case Op::sub:
      return std::get<double>(l) - std::get<double>(r);
    case Op::mul:
      return std::get<double>(l) * std::get<double>(r);
    case Op::div:
      return std::get<double>(l) / std::get<double>(r);
    case Op::lt:
      return std::get<double>(l) < std::get<double>(r);
    case Op::le:
      return std::get<double>(l) <= std::get<double>(r);
    case Op::ge:
      return std::get<double>(l) >= std::get<double>(r);
    case Op::gt:
      return std::get<double>(l) > std::get<double>(r);
    case Op::eq:
      return l == r;
    case Op::ne:
      return l != r;
    default:
      return false;
  }
}

NodePtr bind_node(const NodePtr& n,
                  const std::function<std::optional<Expression::Binding>(std::string_view)>& resolve) {
  if (!n) return n;
  if (n->kind == Node::Kind::identifier) {
    auto b = resolve(n->name);
    if (!b) throw ValidationError("constraint references undeclared name '" + n->name + "'");
    if (std::holds_alternative<ExprValue>(*b)) return make_literal(std::get<ExprValue>(*b));
    auto s = std::make_shared<Node>();
    s->kind = Node::Kind::slot;
    s->name = n->name;
    s->slot = std::get<std::size_t>(*b);
    return s;
  }
  if (n->kind != Node::Kind::unary && n->kind != Node::Kind::binary) return n;
  auto copy = std::make_shared<Node>(*n);
  copy->lhs = bind_node(n->lhs, resolve);
  copy->rhs = bind_node(n->rhs, resolve);
  return copy;
}

}  // namespace

Expression Expression::parse(std::string_view text) {
  Expression e;
  e.text_ = std::string(text);
  e.root_ = Parser(tokenize(text)).parse();
  return e;
}

std::vector<std::string> Expression::identifiers() const {
  std::vector<std::string> out;
  collect(root_, out);
  return out;
}

Expression Expression::bind(
    const std::function<std::optional<Binding>(std::string_view)>& resolve) const {
  Expression e;
  e.text_ = text_;
  e.root_ = bind_node(root_, resolve);
  return e;
}

ExprType Expression::type_check(std::span<const ExprType> slot_types) const {
  return check(root_, slot_types);
}

ExprValue Expression::evaluate(std::span<const ExprValue> slots) const { return eval(*root_, slots); }

}  // namespace slotune
