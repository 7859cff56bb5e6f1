#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dcomp {

using Token = std::int32_t;
inline constexpr Token kMask = -1;

struct GridShape {
  int width = 0;
  int height = 0;

  int size() const noexcept { return width * height; }
  int index(int col, int row) const noexcept { return row * width + col; }
  int col_of(int pos) const noexcept { return pos % width; }
  int row_of(int pos) const noexcept { return pos / width; }

  friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Rendering map between scene objects and tokens. Token 0 is an empty cell;
/// token 1 + shape * colors + color is an object.
struct TokenScheme {
  int shapes = 1;
  int colors = 1;

  int vocab() const noexcept { return 1 + shapes * colors; }
  bool is_object(Token t) const noexcept { return t > 0; }
  int shape_of(Token t) const noexcept { return (t - 1) / colors; }
  int color_of(Token t) const noexcept { return (t - 1) % colors; }
  Token object_token(int shape, int color) const noexcept { return 1 + shape * colors + color; }

  friend bool operator==(const TokenScheme&, const TokenScheme&) = default;
};

/// Matches objects by shape and/or color; -1 is a wildcard.
struct AttributeSelector {
  int shape = -1;
  int color = -1;

  bool matches(Token t, const TokenScheme& scheme) const noexcept;

  friend bool operator==(const AttributeSelector&, const AttributeSelector&) = default;
};

enum class ConditionKind : std::uint8_t { ObjectAtCell, AttributePresent, Relation };
enum class Relation : std::uint8_t { LeftOf, Above };

/// A rule-checkable constraint on a token grid.
///
/// Canonical text forms (also used as model keys):
///   at(COL,ROW[,shape=S][,color=C])
///   present([shape=S][,color=C])
///   left_of(a.shape=S,a.color=C,b.shape=S,b.color=C)   (any subset of keys)
///   above(...)
struct ConditionSpec {
  ConditionKind kind = ConditionKind::ObjectAtCell;
  int col = 0;
  int row = 0;
  AttributeSelector attr;   // object at cell / present / relation lhs
  AttributeSelector other;  // relation rhs
  Relation relation = Relation::LeftOf;

  static ConditionSpec at(int col, int row, AttributeSelector attr = {});
  static ConditionSpec present(AttributeSelector attr);
  static ConditionSpec related(Relation rel, AttributeSelector lhs, AttributeSelector rhs);

  std::string to_string() const;
  static ConditionSpec parse(std::string_view text);

  friend bool operator==(const ConditionSpec&, const ConditionSpec&) = default;
};

/// Throws InvalidArgument when the payload is out of bounds for the world.
void validate(const ConditionSpec& cond, const GridShape& grid, const TokenScheme& scheme,
              bool relational);

bool satisfied(const ConditionSpec& cond, std::span<const Token> grid, const GridShape& shape,
               const TokenScheme& scheme);

/// One flag per condition; the grid must be fully unmasked.
std::vector<bool> check_conditions(std::span<const Token> grid, std::span<const ConditionSpec> conds,
                                   const GridShape& shape, const TokenScheme& scheme);

/// Parses "c1; c2; ..." (empty string gives an empty list).
std::vector<ConditionSpec> parse_condition_list(std::string_view text);
std::string format_condition_list(std::span<const ConditionSpec> conds);

/// Conditions given jointly to a model as one prompt. Order-insensitive key.
using Prompt = std::vector<ConditionSpec>;
std::string prompt_key(std::span<const ConditionSpec> prompt);

}  // namespace dcomp
