#pragma once

#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Closed-form scalar expressions used by scenario files.
//
// Grammar (Pratt parser, fixed table):
//   binary  + -          (left associative, lowest precedence)
//   binary  * /          (left associative)
//   unary   -            (binds tighter than * / but looser than ^,
//                         so "-2^2" is -(2^2) = -4)
//   binary  ^            (right associative, highest)
//   calls   sin cos exp log sqrt abs bump   (one argument)
//           min max pow                     (two arguments)
//   variables are identifiers; no user-defined functions.
//
// All arithmetic is double precision. Domain violations (log of a
// non-positive value, division by zero, ...) throw EvalError instead of
// propagating NaN.

namespace calinv::expr {

struct SyntaxError : std::runtime_error {
  std::size_t offset;
  SyntaxError(std::size_t off, const std::string& what);
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class NodeKind { Number, Variable, Unary, Binary, Call };

struct Node {
  NodeKind kind = NodeKind::Number;
  double number = 0.0;     // Number
  std::string name;        // Variable, Call
  char op = 0;             // Binary: + - * / ^ ; Unary: -
  std::vector<Node> args;

  bool operator==(const Node&) const = default;
};

using Bindings = std::map<std::string, double>;

/// Smooth cutoff: exp(1 - 1/(1-s^2)) for |s|<1, 0 otherwise.
double bump(double s);

class Compiled;

class Expression {
 public:
  Expression() = default;

  static Expression parse(std::string_view source);

  double evaluate(const Bindings& bindings) const;

  // Canonical text form; parse(print()) yields a structurally identical ast.
  std::string print() const;

  const Node& ast() const { return root_; }
  const std::set<std::string>& free_vars() const { return free_vars_; }
  const std::string& source() const { return source_; }

  // Flatten to a stack program with variables bound to slots of
  // `variable_order`. Unused slots are fine; a used variable missing from
  // the list throws EvalError.
  Compiled compile(std::span<const std::string> variable_order) const;

 private:
  Node root_;
  std::string source_;
  std::set<std::string> free_vars_;
};

// Postfix program for tight evaluation loops. Immutable and safe to share
// across threads; eval() uses only local state.
class Compiled {
 public:
  Compiled() = default;
  double eval(std::span<const double> values) const;
  bool empty() const { return ops_.empty(); }

 private:
  friend class Expression;
  enum Code : int {
    kPushConst, kPushVar, kAdd, kSub, kMul, kDiv, kPow, kNeg,
    kSin, kCos, kExp, kLog, kSqrt, kAbs, kBump, kMin, kMax
  };
  struct Op { int code; int arg; };
  std::vector<Op> ops_;
  std::vector<double> consts_;
};

}  // namespace calinv::expr
