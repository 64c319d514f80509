#include "calinv/expr.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>

namespace calinv::expr {

SyntaxError::SyntaxError(std::size_t off, const std::string& what)
    : std::runtime_error("syntax error at offset " + std::to_string(off) + ": " + what),
      offset(off) {}

double bump(double s) {
  if (std::abs(s) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End };

struct Token {
  Tok kind;
  double num = 0.0;
  std::string text;
  std::size_t offset = 0;
};

struct FnInfo { const char* name; int arity; };
constexpr std::array<FnInfo, 10> kFunctions = {{
    {"sin", 1}, {"cos", 1}, {"exp", 1}, {"log", 1}, {"sqrt", 1},
    {"abs", 1}, {"bump", 1}, {"min", 2}, {"max", 2}, {"pow", 2},
}};

const FnInfo* find_function(const std::string& name) {
  for (const auto& f : kFunctions)
    if (name == f.name) return &f;
  return nullptr;
}

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
    std::size_t start = i;
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t j = i;
      while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
      // optional exponent
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          ++k;
          while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
          j = k;
        }
      }
      std::string text(src.substr(i, j - i));
      char* end = nullptr;
      double v = std::strtod(text.c_str(), &end);
      if (end != text.c_str() + text.size())
        throw SyntaxError(start, "malformed number '" + text + "'");
      out.push_back({Tok::Number, v, text, start});
      i = j;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      out.push_back({Tok::Ident, 0.0, std::string(src.substr(i, j - i)), start});
      i = j;
      continue;
    }
    Tok k;
    switch (c) {
      case '+': k = Tok::Plus; break;
      case '-': k = Tok::Minus; break;
      case '*': k = Tok::Star; break;
      case '/': k = Tok::Slash; break;
      case '^': k = Tok::Caret; break;
      case '(': k = Tok::LParen; break;
      case ')': k = Tok::RParen; break;
      case ',': k = Tok::Comma; break;
      default:
        throw SyntaxError(start, std::string("unexpected character '") + c + "'");
    }
    out.push_back({k, 0.0, std::string(1, c), start});
    ++i;
  }
  out.push_back({Tok::End, 0.0, "", src.size()});
  return out;
}

// Binding powers. Unary minus sits between mul/div and power.
constexpr int kAddBp = 10;
constexpr int kMulBp = 20;
constexpr int kPrefixBp = 25;
constexpr int kPowBp = 30;

struct Parser {
  const std::vector<Token>& toks;
  std::size_t i = 0;

  const Token& peek() const { return toks[i]; }
  const Token& advance() { return toks[i++]; }

  [[noreturn]] void fail(const Token& t, const std::string& expected) {
    std::string found = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
    throw SyntaxError(t.offset, "expected " + expected + ", found " + found);
  }

  Node parse_expr(int min_bp) {
    Node lhs = parse_operand();
    for (;;) {
      const Token& t = peek();
      char op;
      int bp;
      bool right_assoc = false;
      switch (t.kind) {
        case Tok::Plus:  op = '+'; bp = kAddBp; break;
        case Tok::Minus: op = '-'; bp = kAddBp; break;
        case Tok::Star:  op = '*'; bp = kMulBp; break;
        case Tok::Slash: op = '/'; bp = kMulBp; break;
        case Tok::Caret: op = '^'; bp = kPowBp; right_assoc = true; break;
        default: return lhs;
      }
      if (bp <= min_bp) return lhs;
      advance();
      Node rhs = parse_expr(right_assoc ? bp - 1 : bp);
      Node n;
      n.kind = NodeKind::Binary;
      n.op = op;
      n.args.push_back(std::move(lhs));
      n.args.push_back(std::move(rhs));
      lhs = std::move(n);
    }
  }

  Node parse_operand() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Number: {
        advance();
        Node n;
        n.kind = NodeKind::Number;
        n.number = t.num;
        return n;
      }
      case Tok::Minus: {
        advance();
        Node n;
        n.kind = NodeKind::Unary;
        n.op = '-';
        n.args.push_back(parse_expr(kPrefixBp));
        return n;
      }
      case Tok::Plus: {  // unary plus: accepted, no node
        advance();
        return parse_expr(kPrefixBp);
      }
      case Tok::LParen: {
        advance();
        Node inner = parse_expr(0);
        if (peek().kind != Tok::RParen) fail(peek(), "')'");
        advance();
        return inner;
      }
      case Tok::Ident: {
        advance();
        const FnInfo* fn = find_function(t.text);
        if (peek().kind == Tok::LParen) {
          if (!fn)
            throw SyntaxError(t.offset, "unknown function '" + t.text + "'");
          advance();
          Node n;
          n.kind = NodeKind::Call;
          n.name = t.text;
          n.args.push_back(parse_expr(0));
          for (int a = 1; a < fn->arity; ++a) {
            if (peek().kind != Tok::Comma) fail(peek(), "','");
            advance();
            n.args.push_back(parse_expr(0));
          }
          if (peek().kind != Tok::RParen) fail(peek(), "')'");
          advance();
          return n;
        }
        if (fn) fail(peek(), "'(' after function name '" + t.text + "'");
        Node n;
        n.kind = NodeKind::Variable;
        n.name = t.text;
        return n;
      }
      default:
        fail(t, "expression");
    }
  }
};

void collect_vars(const Node& n, std::set<std::string>& out) {
  if (n.kind == NodeKind::Variable) out.insert(n.name);
  for (const auto& a : n.args) collect_vars(a, out);
}

int node_bp(const Node& n) {
  switch (n.kind) {
    case NodeKind::Binary:
      return (n.op == '+' || n.op == '-') ? kAddBp : (n.op == '^' ? kPowBp : kMulBp);
    case NodeKind::Unary:
      return kPrefixBp;
    default:
      return 100;
  }
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void print_node(const Node& n, std::string& out) {
  auto child = [&out](const Node& c, bool parens) {
    if (parens) out += '(';
    print_node(c, out);
    if (parens) out += ')';
  };
  switch (n.kind) {
    case NodeKind::Number:
      out += format_number(n.number);
      return;
    case NodeKind::Variable:
      out += n.name;
      return;
    case NodeKind::Unary: {
      out += '-';
      child(n.args[0], node_bp(n.args[0]) < kPrefixBp);
      return;
    }
    case NodeKind::Binary: {
      int bp = node_bp(n);
      bool right_assoc = n.op == '^';
      // Same-precedence children are re-parenthesized whenever reparsing
      // would group them differently than the tree does.
      bool lp = node_bp(n.args[0]) < bp || (node_bp(n.args[0]) == bp && right_assoc);
      bool rp = node_bp(n.args[1]) < bp || (node_bp(n.args[1]) == bp && !right_assoc);
      child(n.args[0], lp);
      out += n.op;
      child(n.args[1], rp);
      return;
    }
    case NodeKind::Call: {
      out += n.name;
      out += '(';
      for (std::size_t a = 0; a < n.args.size(); ++a) {
        if (a) out += ',';
        print_node(n.args[a], out);
      }
      out += ')';
      return;
    }
  }
}

double apply_binary(char op, double a, double b) {
  switch (op) {
    case '+': return a + b;
    case '-': return a - b;
    case '*': return a * b;
    case '/':
      if (b == 0.0) throw EvalError("division by zero");
      return a / b;
    case '^': {
      if (a == 0.0 && b < 0.0) throw EvalError("zero raised to a negative power");
      if (a < 0.0 && b != std::floor(b)) throw EvalError("negative base with non-integer exponent");
      return std::pow(a, b);
    }
  }
  throw EvalError("bad operator");
}

double apply_call(const std::string& name, std::span<const double> a) {
  if (name == "sin") return std::sin(a[0]);
  if (name == "cos") return std::cos(a[0]);
  if (name == "exp") return std::exp(a[0]);
  if (name == "log") {
    if (a[0] <= 0.0) throw EvalError("log of a non-positive value");
    return std::log(a[0]);
  }
  if (name == "sqrt") {
    if (a[0] < 0.0) throw EvalError("sqrt of a negative value");
    return std::sqrt(a[0]);
  }
  if (name == "abs") return std::abs(a[0]);
  if (name == "bump") return bump(a[0]);
  if (name == "min") return std::min(a[0], a[1]);
  if (name == "max") return std::max(a[0], a[1]);
  if (name == "pow") return apply_binary('^', a[0], a[1]);
  throw EvalError("unknown function '" + name + "'");
}

double eval_node(const Node& n, const Bindings& b) {
  switch (n.kind) {
    case NodeKind::Number:
      return n.number;
    case NodeKind::Variable: {
      auto it = b.find(n.name);
      if (it == b.end()) throw EvalError("missing binding for variable '" + n.name + "'");
      return it->second;
    }
    case NodeKind::Unary:
      return -eval_node(n.args[0], b);
    case NodeKind::Binary:
      return apply_binary(n.op, eval_node(n.args[0], b), eval_node(n.args[1], b));
    case NodeKind::Call: {
      std::array<double, 2> a{};
      for (std::size_t i = 0; i < n.args.size(); ++i) a[i] = eval_node(n.args[i], b);
      return apply_call(n.name, std::span<const double>(a.data(), n.args.size()));
    }
  }
  throw EvalError("bad node");
}

}  // namespace

Expression Expression::parse(std::string_view source) {
  auto toks = tokenize(source);
  Parser p{toks};
  Expression e;
  e.root_ = p.parse_expr(0);
  if (p.peek().kind != Tok::End) p.fail(p.peek(), "end of input");
  e.source_ = std::string(source);
  collect_vars(e.root_, e.free_vars_);
  return e;
}

double Expression::evaluate(const Bindings& bindings) const {
  return eval_node(root_, bindings);
}

std::string Expression::print() const {
  std::string out;
  print_node(root_, out);
  return out;
}

Compiled Expression::compile(std::span<const std::string> variable_order) const {
  Compiled c;
  auto emit = [&c](int code, int arg) { c.ops_.push_back({code, arg}); };
  auto slot_of = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < variable_order.size(); ++i)
      if (variable_order[i] == name) return static_cast<int>(i);
    throw EvalError("variable '" + name + "' is not in the binding order");
  };

  auto walk = [&](auto&& self, const Node& n) -> void {
    switch (n.kind) {
      case NodeKind::Number:
        c.consts_.push_back(n.number);
        emit(Compiled::kPushConst, static_cast<int>(c.consts_.size() - 1));
        return;
      case NodeKind::Variable:
        emit(Compiled::kPushVar, slot_of(n.name));
        return;
      case NodeKind::Unary:
        self(self, n.args[0]);
        emit(Compiled::kNeg, 0);
        return;
      case NodeKind::Binary:
        self(self, n.args[0]);
        self(self, n.args[1]);
        switch (n.op) {
          case '+': emit(Compiled::kAdd, 0); return;
          case '-': emit(Compiled::kSub, 0); return;
          case '*': emit(Compiled::kMul, 0); return;
          case '/': emit(Compiled::kDiv, 0); return;
          case '^': emit(Compiled::kPow, 0); return;
        }
        return;
      case NodeKind::Call: {
        for (const auto& a : n.args) self(self, a);
        int code;
        if (n.name == "sin") code = Compiled::kSin;
        else if (n.name == "cos") code = Compiled::kCos;
        else if (n.name == "exp") code = Compiled::kExp;
        else if (n.name == "log") code = Compiled::kLog;
        else if (n.name == "sqrt") code = Compiled::kSqrt;
        else if (n.name == "abs") code = Compiled::kAbs;
        else if (n.name == "bump") code = Compiled::kBump;
        else if (n.name == "min") code = Compiled::kMin;
        else if (n.name == "max") code = Compiled::kMax;
        else code = Compiled::kPow;  // pow(a,b)
        emit(code, 0);
        return;
      }
    }
  };
  walk(walk, root_);
  return c;
}

double Compiled::eval(std::span<const double> values) const {
  std::array<double, 64> stack;
  int sp = 0;
  for (const Op& op : ops_) {
    switch (op.code) {
      case kPushConst: stack[sp++] = consts_[op.arg]; break;
      case kPushVar:   stack[sp++] = values[op.arg]; break;
      case kAdd: --sp; stack[sp - 1] += stack[sp]; break;
      case kSub: --sp; stack[sp - 1] -= stack[sp]; break;
      case kMul: --sp; stack[sp - 1] *= stack[sp]; break;
      case kDiv:
        --sp;
        if (stack[sp] == 0.0) throw EvalError("division by zero");
        stack[sp - 1] /= stack[sp];
        break;
      case kPow:
        --sp;
        stack[sp - 1] = apply_binary('^', stack[sp - 1], stack[sp]);
        break;
      case kNeg: stack[sp - 1] = -stack[sp - 1]; break;
      case kSin: stack[sp - 1] = std::sin(stack[sp - 1]); break;
      case kCos: stack[sp - 1] = std::cos(stack[sp - 1]); break;
      case kExp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
      case kLog:
        if (stack[sp - 1] <= 0.0) throw EvalError("log of a non-positive value");
        stack[sp - 1] = std::log(stack[sp - 1]);
        break;
      case kSqrt:
        if (stack[sp - 1] < 0.0) throw EvalError("sqrt of a negative value");
        stack[sp - 1] = std::sqrt(stack[sp - 1]);
        break;
      case kAbs: stack[sp - 1] = std::abs(stack[sp - 1]); break;
      case kBump: stack[sp - 1] = bump(stack[sp - 1]); break;
      case kMin: --sp; stack[sp - 1] = std::min(stack[sp - 1], stack[sp]); break;
      case kMax: --sp; stack[sp - 1] = std::max(stack[sp - 1], stack[sp]); break;
    }
  }
  return stack[0];
}

}  // namespace calinv::expr
