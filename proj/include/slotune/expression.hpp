#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace slotune {

/// Runtime value of a constraint sub-expression. Integers are carried as
/// doubles; every integer in a search space is far below 2^53.
using ExprValue = std::variant<double, bool, std::string>;

enum class ExprType { number, boolean, string };

/// Boolean expression over parameter references in a small infix grammar:
///
///   expr    := or ('implies' expr)?
///   or      := and ('or' and)*
///   and     := not ('and' not)*
///   not     := 'not' not | cmp
///   cmp     := sum (('<' | '<=' | '==' | '!=' | '>=' | '>') sum)?
///   sum     := product (('+' | '-') product)*
///   product := unary (('*' | '/') unary)*
///   unary   := '-' unary | primary
///   primary := number | 'true' | 'false' | 'string' | identifier | '(' expr ')'
///
/// `a implies b` reads "b must hold if a".
class Expression {
 public:
  struct Node;

  /// What an identifier resolves to when binding: a parameter slot or a
  /// constant folded into the tree.
  using Binding = std::variant<std::size_t, ExprValue>;

  static Expression parse(std::string_view text);

  const std::string& text() const noexcept { return text_; }

  /// Identifiers referenced anywhere in the expression, in order of first use.
  std::vector<std::string> identifiers() const;

  /// Resolves identifiers. `resolve` returns nullopt for unknown names, which
  /// raises ValidationError.
  Expression bind(const std::function<std::optional<Binding>(std::string_view)>& resolve) const;

  /// Static type of a bound expression given the type of each slot; throws
  /// ValidationError on operand mismatches.
  ExprType type_check(std::span<const ExprType> slot_types) const;

  /// Evaluates a bound expression against slot values.
  ExprValue evaluate(std::span<const ExprValue> slots) const;

 private:
  std::shared_ptr<const Node> root_;
  std::string text_;
};

}  // namespace slotune
