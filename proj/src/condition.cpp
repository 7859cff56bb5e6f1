#include "dcomp/condition.hpp"

#include <algorithm>
#include <charconv>

#include "dcomp/error.hpp"

namespace dcomp {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view s, std::string_view context) {
  s = trim(s);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::InvalidArgument,
                "bad integer '" + std::string(s) + "' in condition '" + std::string(context) + "'");
  }
  return v;
}

void append_selector(std::string& out, const AttributeSelector& a, std::string_view prefix,
                     bool& first) {
  auto emit = [&](std::string_view key, int value) {
    if (value < 0) return;
    if (!first) out += ',';
    first = false;
    out += prefix;
    out += key;
    out += '=';
    out += std::to_string(value);
  };
  emit("shape", a.shape);
  emit("color", a.color);
}

bool selector_in_bounds(const AttributeSelector& a, const TokenScheme& scheme) {
  return a.shape >= -1 && a.shape < scheme.shapes && a.color >= -1 && a.color < scheme.colors;
}

}  // namespace

bool AttributeSelector::matches(Token t, const TokenScheme& scheme) const noexcept {
  if (!scheme.is_object(t)) return false;
  if (shape >= 0 && scheme.shape_of(t) != shape) return false;
  if (color >= 0 && scheme.color_of(t) != color) return false;
  return true;
}

ConditionSpec ConditionSpec::at(int col, int row, AttributeSelector attr) {
  ConditionSpec c;
  c.kind = ConditionKind::ObjectAtCell;
  c.col = col;
  c.row = row;
  c.attr = attr;
  return c;
}

ConditionSpec ConditionSpec::present(AttributeSelector attr) {
  ConditionSpec c;
  c.kind = ConditionKind::AttributePresent;
  c.attr = attr;
  return c;
}

ConditionSpec ConditionSpec::related(Relation rel, AttributeSelector lhs, AttributeSelector rhs) {
  ConditionSpec c;
  c.kind = ConditionKind::Relation;
  c.relation = rel;
  c.attr = lhs;
  c.other = rhs;
  return c;
}

std::string ConditionSpec::to_string() const {
  std::string out;
  bool first = true;
  switch (kind) {
    case ConditionKind::ObjectAtCell:
      out = "at(" + std::to_string(col) + "," + std::to_string(row);
      first = false;
      append_selector(out, attr, "", first);
      break;
    case ConditionKind::AttributePresent:
      out = "present(";
      append_selector(out, attr, "", first);
      break;
    case ConditionKind::Relation:
      out = relation == Relation::LeftOf ? "left_of(" : "above(";
      append_selector(out, attr, "a.", first);
      append_selector(out, other, "b.", first);
      break;
  }
  out += ')';
  return out;
}

ConditionSpec ConditionSpec::parse(std::string_view text) {
  const std::string_view src = trim(text);
  const auto open = src.find('(');
  if (open == std::string_view::npos || src.back() != ')') {
    throw Error(ErrorCode::InvalidArgument, "malformed condition '" + std::string(src) + "'");
  }
  const std::string_view name = trim(src.substr(0, open));
  const std::string_view body = src.substr(open + 1, src.size() - open - 2);

  std::vector<std::string_view> args;
  if (!trim(body).empty()) {
    std::size_t start = 0;
    while (true) {
      const auto comma = body.find(',', start);
      args.push_back(trim(body.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  }

  ConditionSpec c;
  std::size_t positional = 0;
  if (name == "at") {
    c.kind = ConditionKind::ObjectAtCell;
    positional = 2;
    if (args.size() < 2) {
      throw Error(ErrorCode::InvalidArgument, "at() needs a column and a row: '" + std::string(src) + "'");
    }
    c.col = parse_int(args[0], src);
    c.row = parse_int(args[1], src);
  } else if (name == "present") {
    c.kind = ConditionKind::AttributePresent;
  } else if (name == "left_of" || name == "above") {
    c.kind = ConditionKind::Relation;
    c.relation = name == "left_of" ? Relation::LeftOf : Relation::Above;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown condition kind '" + std::string(name) + "'");
  }

  for (std::size_t i = positional; i < args.size(); ++i) {
    const auto eq = args[i].find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidArgument, "expected key=value in '" + std::string(src) + "'");
    }
    std::string_view key = trim(args[i].substr(0, eq));
    const int value = parse_int(args[i].substr(eq + 1), src);
    AttributeSelector* target = &c.attr;
    if (c.kind == ConditionKind::Relation) {
      if (key.starts_with("a.")) {
        key.remove_prefix(2);
      } else if (key.starts_with("b.")) {
        key.remove_prefix(2);
        target = &c.other;
      } else {
        throw Error(ErrorCode::InvalidArgument, "relation keys need an a./b. prefix: '" + std::string(src) + "'");
      }
    }
    if (key == "shape") {
      target->shape = value;
    } else if (key == "color") {
      target->color = value;
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown key '" + std::string(key) + "' in '" + std::string(src) + "'");
    }
  }
  return c;
}

void validate(const ConditionSpec& cond, const GridShape& grid, const TokenScheme& scheme,
              bool relational) {
  const std::string name = cond.to_string();
  if (!selector_in_bounds(cond.attr, scheme) || !selector_in_bounds(cond.other, scheme)) {
    throw Error(ErrorCode::InvalidArgument, "attribute out of range in " + name);
  }
  switch (cond.kind) {
    case ConditionKind::ObjectAtCell:
      if (cond.col < 0 || cond.col >= grid.width || cond.row < 0 || cond.row >= grid.height) {
        throw Error(ErrorCode::InvalidArgument, "cell out of bounds in " + name);
      }
      break;
    case ConditionKind::AttributePresent:
      break;
    case ConditionKind::Relation:
      if (!relational) {
        throw Error(ErrorCode::InvalidArgument, "relation condition in a non-relational world: " + name);
      }
      break;
  }
}

bool satisfied(const ConditionSpec& cond, std::span<const Token> grid, const GridShape& shape,
               const TokenScheme& scheme) {
  switch (cond.kind) {
    case ConditionKind::ObjectAtCell:
      return cond.attr.matches(grid[static_cast<std::size_t>(shape.index(cond.col, cond.row))], scheme);
    case ConditionKind::AttributePresent:
      return std::any_of(grid.begin(), grid.end(),
                         [&](Token t) { return cond.attr.matches(t, scheme); });
    case ConditionKind::Relation:
      for (int a = 0; a < shape.size(); ++a) {
        if (!cond.attr.matches(grid[static_cast<std::size_t>(a)], scheme)) continue;
        for (int b = 0; b < shape.size(); ++b) {
          if (b == a || !cond.other.matches(grid[static_cast<std::size_t>(b)], scheme)) continue;
          const bool ok = cond.relation == Relation::LeftOf ? shape.col_of(a) < shape.col_of(b)
                                                            : shape.row_of(a) < shape.row_of(b);
          if (ok) return true;
        }
      }
      return false;
  }
  return false;
}

std::vector<bool> check_conditions(std::span<const Token> grid, std::span<const ConditionSpec> conds,
                                   const GridShape& shape, const TokenScheme& scheme) {
  if (static_cast<int>(grid.size()) != shape.size()) {
    throw Error(ErrorCode::ShapeMismatch, "grid length does not match grid shape");
  }
  if (std::any_of(grid.begin(), grid.end(), [](Token t) { return t < 0; })) {
    throw Error(ErrorCode::InvalidArgument, "check_conditions needs a fully unmasked grid");
  }
  std::vector<bool> out;
  out.reserve(conds.size());
  for (const auto& c : conds) out.push_back(satisfied(c, grid, shape, scheme));
  return out;
}

std::vector<ConditionSpec> parse_condition_list(std::string_view text) {
  std::vector<ConditionSpec> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto semi = text.find(';', start);
    const auto piece = trim(text.substr(start, semi == std::string_view::npos ? semi : semi - start));
    if (!piece.empty()) out.push_back(ConditionSpec::parse(piece));
    if (semi == std::string_view::npos) break;
    start = semi + 1;
  }
  return out;
}

std::string format_condition_list(std::span<const ConditionSpec> conds) {
  std::string out;
  for (std::size_t i = 0; i < conds.size(); ++i) {
    if (i) out += "; ";
    out += conds[i].to_string();
  }
  return out;
}

std::string prompt_key(std::span<const ConditionSpec> prompt) {
  std::vector<std::string> parts;
  parts.reserve(prompt.size());
  for (const auto& c : prompt) parts.push_back(c.to_string());
  std::sort(parts.begin(), parts.end());
  parts.erase(std::unique(parts.begin(), parts.end()), parts.end());
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += '&';
    out += parts[i];
  }
  return out;
}

}  // namespace dcomp
