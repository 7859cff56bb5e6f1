#include "dcomp/world.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "dcomp/error.hpp"

namespace dcomp {

namespace {

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > UINT64_MAX / a) return UINT64_MAX;
  return a * b;
}

std::uint64_t ipow(std::uint64_t base, int exp) {
  std::uint64_t r = 1;
  for (int i = 0; i < exp; ++i) r = saturating_mul(r, base);
  return r;
}

}  // namespace

World::World(GridShape grid, TokenScheme scheme) : grid_(grid), scheme_(scheme) {
  if (grid.width < 1 || grid.height < 1) throw Error(ErrorCode::InvalidArgument, "grid must be at least 1x1");
  if (scheme.shapes < 1 || scheme.colors < 1) {
    throw Error(ErrorCode::InvalidArgument, "token scheme needs at least one shape and one color");
  }
  if (scheme.vocab() > 255) throw Error(ErrorCode::InvalidArgument, "vocabulary above 255 tokens");
}

std::vector<ConditionSpec> World::condition_vocabulary() const {
  std::vector<ConditionSpec> out;
  for (int r = 0; r < grid_.height; ++r)
    for (int c = 0; c < grid_.width; ++c) out.push_back(ConditionSpec::at(c, r));
  return out;
}

void World::validate(const ConditionSpec& cond) const { dcomp::validate(cond, grid_, scheme_, relational()); }

void World::check_enumerable() const {
  const auto n = support_size();
  if (n > kMaxEnumerableStates) {
    throw Error(ErrorCode::StateSpaceTooLarge,
                std::to_string(n) + " support states exceed the cap of " + std::to_string(kMaxEnumerableStates));
  }
}

// ---------------------------------------------------------------------------

SceneWorld::SceneWorld(const SceneWorldConfig& cfg) : World(cfg.grid, cfg.scheme), cfg_(cfg) {
  if (length() > 24) throw Error(ErrorCode::InvalidArgument, "scene grids are limited to 24 cells");
  if (cfg.min_objects < 0 || cfg.max_objects < cfg.min_objects || cfg.min_objects > length()) {
    throw Error(ErrorCode::InvalidArgument, "object count range is invalid");
  }
  cfg_.max_objects = std::min(cfg.max_objects, length());
}

std::uint64_t SceneWorld::support_size() const {
  const auto types = static_cast<std::uint64_t>(cfg_.scheme.shapes * cfg_.scheme.colors);
  std::uint64_t n = 0;
  for (int k = cfg_.min_objects; k <= cfg_.max_objects; ++k) {
    n += saturating_mul(binomial(length(), k), ipow(types, k));
  }
  return n;
}

double SceneWorld::state_prob(int k) const {
  if (k < cfg_.min_objects || k > cfg_.max_objects) return 0.0;
  const double types = cfg_.scheme.shapes * cfg_.scheme.colors;
  const double counts = cfg_.max_objects - cfg_.min_objects + 1;
  return 1.0 / (counts * static_cast<double>(binomial(length(), k)) * std::pow(types, k));
}

void SceneWorld::for_each_state(const StateVisitor& visit) const {
  check_enumerable();
  const int n = length();
  const int types = cfg_.scheme.shapes * cfg_.scheme.colors;
  std::vector<Token> grid(static_cast<std::size_t>(n), 0);
  std::vector<int> cells;
  std::vector<int> type_idx;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    const int k = std::popcount(mask);
    if (k < cfg_.min_objects || k > cfg_.max_objects) continue;
    cells.clear();
    for (int p = 0; p < n; ++p)
      if (mask & (1u << p)) cells.push_back(p);
    const double p_state = state_prob(k);
    type_idx.assign(static_cast<std::size_t>(k), 0);
    std::fill(grid.begin(), grid.end(), 0);
    while (true) {
      for (int i = 0; i < k; ++i) grid[static_cast<std::size_t>(cells[static_cast<std::size_t>(i)])] = 1 + type_idx[static_cast<std::size_t>(i)];
      visit(grid, p_state);
      int i = k - 1;
      while (i >= 0 && ++type_idx[static_cast<std::size_t>(i)] == types) type_idx[static_cast<std::size_t>(i--)] = 0;
      if (i < 0) break;
    }
  }
}

std::vector<Token> SceneWorld::sample(Rng& rng) const {
  const int n = length();
  const int k = cfg_.min_objects + static_cast<int>(rng.below(static_cast<std::size_t>(cfg_.max_objects - cfg_.min_objects + 1)));
  std::vector<int> cells(static_cast<std::size_t>(n));
  std::iota(cells.begin(), cells.end(), 0);
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::size_t>(n - i));
    std::swap(cells[static_cast<std::size_t>(i)], cells[j]);
  }
  std::vector<Token> grid(static_cast<std::size_t>(n), 0);
  const auto types = static_cast<std::size_t>(cfg_.scheme.shapes * cfg_.scheme.colors);
  for (int i = 0; i < k; ++i) grid[static_cast<std::size_t>(cells[static_cast<std::size_t>(i)])] = 1 + static_cast<Token>(rng.below(types));
  return grid;
}

std::vector<ConditionSpec> SceneWorld::condition_vocabulary() const {
  auto out = World::condition_vocabulary();
  if (scheme().colors > 1)
    for (int c = 0; c < scheme().colors; ++c) out.push_back(ConditionSpec::present({-1, c}));
  if (scheme().shapes > 1)
    for (int s = 0; s < scheme().shapes; ++s) out.push_back(ConditionSpec::present({s, -1}));
  if (cfg_.relational) {
    for (auto rel : {Relation::LeftOf, Relation::Above})
      for (int a = 0; a < scheme().colors; ++a)
        for (int b = 0; b < scheme().colors; ++b)
          if (a != b) out.push_back(ConditionSpec::related(rel, {-1, a}, {-1, b}));
  }
  return out;
}

// ---------------------------------------------------------------------------

FactorizedWorld::FactorizedWorld(GridShape grid, TokenScheme scheme, std::vector<std::vector<double>> cell_tables)
    : World(grid, scheme), tables_(std::move(cell_tables)) {
  if (static_cast<int>(tables_.size()) != length()) {
    throw Error(ErrorCode::InvalidTable, "expected " + std::to_string(length()) + " cell tables, got " +
                                             std::to_string(tables_.size()));
  }
  for (std::size_t p = 0; p < tables_.size(); ++p) {
    const auto& t = tables_[p];
    if (static_cast<int>(t.size()) != vocab()) {
      throw Error(ErrorCode::InvalidTable, "cell " + std::to_string(p) + " table has wrong length");
    }
    double sum = 0.0;
    for (double v : t) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(ErrorCode::InvalidTable, "cell " + std::to_string(p) + " has a negative or non-finite entry");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw Error(ErrorCode::InvalidTable, "cell " + std::to_string(p) + " table sums to " + std::to_string(sum));
    }
  }
}

std::uint64_t FactorizedWorld::support_size() const {
  std::uint64_t n = 1;
  for (const auto& t : tables_) {
    n = saturating_mul(n, static_cast<std::uint64_t>(std::count_if(t.begin(), t.end(), [](double v) { return v > 0.0; })));
  }
  return n;
}

void FactorizedWorld::for_each_state(const StateVisitor& visit) const {
  check_enumerable();
  const int n = length();
  std::vector<std::vector<Token>> support(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) {
    const auto& t = tables_[static_cast<std::size_t>(p)];
    for (int k = 0; k < vocab(); ++k)
      if (t[static_cast<std::size_t>(k)] > 0.0) support[static_cast<std::size_t>(p)].push_back(k);
  }
  std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
  std::vector<Token> grid(static_cast<std::size_t>(n));
  // prefix[p] = product of table entries for cells < p.
  std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 1.0);
  auto refresh_from = [&](int from) {
    for (int p = from; p < n; ++p) {
      const auto sp = static_cast<std::size_t>(p);
      grid[sp] = support[sp][idx[sp]];
      prefix[sp + 1] = prefix[sp] * tables_[sp][static_cast<std::size_t>(grid[sp])];
    }
  };
  refresh_from(0);
  while (true) {
    visit(grid, prefix[static_cast<std::size_t>(n)]);
    int p = n - 1;
    while (p >= 0 && ++idx[static_cast<std::size_t>(p)] == support[static_cast<std::size_t>(p)].size()) idx[static_cast<std::size_t>(p--)] = 0;
    if (p < 0) break;
    refresh_from(p);
  }
}

std::vector<Token> FactorizedWorld::sample(Rng& rng) const {
  std::vector<Token> grid(tables_.size());
  for (std::size_t p = 0; p < tables_.size(); ++p) grid[p] = static_cast<Token>(rng.categorical(std::span<const double>(tables_[p])));
  return grid;
}

std::vector<ConditionSpec> FactorizedWorld::condition_vocabulary() const {
  auto out = World::condition_vocabulary();
  if (scheme().colors > 1) {
    for (int r = 0; r < grid().height; ++r)
      for (int c = 0; c < grid().width; ++c)
        for (int k = 0; k < scheme().colors; ++k) out.push_back(ConditionSpec::at(c, r, {-1, k}));
  }
  return out;
}

std::vector<double> FactorizedWorld::conditioned_table(int pos, std::span<const ConditionSpec> prompt) const {
  std::vector<double> t = tables_[static_cast<std::size_t>(pos)];
  for (const auto& c : prompt) {
    if (c.kind != ConditionKind::ObjectAtCell) {
      throw Error(ErrorCode::InvalidArgument, "conditioned_table only handles cell conditions");
    }
    if (grid().index(c.col, c.row) != pos) continue;
    for (std::size_t k = 0; k < t.size(); ++k)
      if (!c.attr.matches(static_cast<Token>(k), scheme())) t[k] = 0.0;
  }
  const double sum = std::accumulate(t.begin(), t.end(), 0.0);
  if (sum <= 0.0) return {};
  for (double& v : t) v /= sum;
  return t;
}

std::shared_ptr<FactorizedWorld> build_factorized_world(int grid_w, int grid_h, int vocab,
                                                        std::vector<std::vector<double>> cell_tables) {
  if (vocab < 2) throw Error(ErrorCode::InvalidTable, "factorized worlds need K >= 2");
  return std::make_shared<FactorizedWorld>(GridShape{grid_w, grid_h}, TokenScheme{1, vocab - 1},
                                           std::move(cell_tables));
}

std::vector<std::vector<double>> uniform_object_tables(int cells, int vocab, double object_prob) {
  if (vocab < 2 || !(object_prob >= 0.0 && object_prob <= 1.0)) {
    throw Error(ErrorCode::InvalidTable, "object_prob must lie in [0,1] with K >= 2");
  }
  std::vector<double> t(static_cast<std::size_t>(vocab), object_prob / (vocab - 1));
  t[0] = 1.0 - object_prob;
  return std::vector<std::vector<double>>(static_cast<std::size_t>(cells), t);
}

// ---------------------------------------------------------------------------

Posterior::Posterior(int length, std::vector<std::uint8_t> states, std::vector<double> probs)
    : length_(length), states_(std::move(states)), probs_(std::move(probs)) {}

std::vector<Token> Posterior::state(std::size_t i) const {
  const auto* base = states_.data() + i * static_cast<std::size_t>(length_);
  return std::vector<Token>(base, base + length_);
}

std::vector<std::vector<double>> Posterior::marginals(int vocab) const {
  std::vector<std::vector<NeumaierSum>> acc(static_cast<std::size_t>(length_),
                                            std::vector<NeumaierSum>(static_cast<std::size_t>(vocab)));
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const auto* s = states_.data() + i * static_cast<std::size_t>(length_);
    for (int p = 0; p < length_; ++p) acc[static_cast<std::size_t>(p)][s[p]].add(probs_[i]);
  }
  std::vector<std::vector<double>> out(acc.size(), std::vector<double>(static_cast<std::size_t>(vocab)));
  for (std::size_t p = 0; p < acc.size(); ++p)
    for (std::size_t k = 0; k < acc[p].size(); ++k) out[p][k] = acc[p][k].value();
  return out;
}

double Posterior::prob_of(std::span<const Token> grid) const {
  if (static_cast<int>(grid.size()) != length_) return 0.0;
  const auto n = static_cast<std::size_t>(length_);
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const auto* s = states_.data() + i * n;
    bool same = true;
    for (std::size_t p = 0; p < n && same; ++p) same = s[p] == grid[p];
    if (same) return probs_[i];
  }
  return 0.0;
}

Posterior enumerate_posterior(const World& world, std::span<const ConditionSpec> conds) {
  for (const auto& c : conds) world.validate(c);
  std::vector<std::uint8_t> states;
  std::vector<double> probs;
  NeumaierSum total;
  world.for_each_state([&](std::span<const Token> grid, double p) {
    for (const auto& c : conds)
      if (!satisfied(c, grid, world.grid(), world.scheme())) return;
    for (Token t : grid) states.push_back(static_cast<std::uint8_t>(t));
    probs.push_back(p);
    total.add(p);
  });
  const double z = total.value();
  if (probs.empty() || !(z > 0.0)) {
    throw Error(ErrorCode::EmptyIntersection, "no state satisfies " + format_condition_list(conds));
  }
  for (double& p : probs) p /= z;
  return Posterior(world.length(), std::move(states), std::move(probs));
}

double satisfaction_probability(const World& world, std::span<const ConditionSpec> conds) {
  for (const auto& c : conds) world.validate(c);
  NeumaierSum hit;
  world.for_each_state([&](std::span<const Token> grid, double p) {
    for (const auto& c : conds)
      if (!satisfied(c, grid, world.grid(), world.scheme())) return;
    hit.add(p);
  });
  return hit.value();
}

std::string grid_to_text(std::span<const Token> grid, const GridShape& shape) {
  std::string out;
  for (int r = 0; r < shape.height; ++r) {
    for (int c = 0; c < shape.width; ++c) {
      const Token t = grid[static_cast<std::size_t>(shape.index(c, r))];
      if (c) out += ' ';
      out += t == kMask ? "?" : (t == 0 ? "." : std::to_string(t));
    }
    out += '\n';
  }
  return out;
}

}  // namespace dcomp
