#include "stopwalk/gauge.hpp"

#include <algorithm>
#include <cstdlib>

namespace stopwalk {

WordMetric::WordMetric(Group group, int bfs_radius)
    : group_(std::move(group)), bfs_radius_(bfs_radius) {
  if (bfs_radius_ < 0) throw usage_error("BFS radius must be >= 0");
  if (!closed_form()) bfs_ = build_bfs();
}

bool WordMetric::closed_form() const {
  return group_.has_standard_generators() && group_.kind() != GroupKind::lamplighter;
}

std::shared_ptr<const WordMetric::BfsTable> WordMetric::build_bfs() const {
  auto table = std::make_shared<BfsTable>();
  const auto& gens = group_.generators();
  std::vector<Element> frontier{group_.identity()};
  table->emplace(group_.identity(), BfsEntry{0, -1});
  for (int d = 1; d <= bfs_radius_ && !frontier.empty(); ++d) {
    std::vector<Element> next;
    for (const auto& g : frontier) {
      for (std::size_t i = 0; i < gens.size(); ++i) {
        Element h = multiply(group_, g, gens[i]);
        if (table->emplace(h, BfsEntry{d, static_cast<int>(i)}).second) next.push_back(std::move(h));
      }
    }
    frontier = std::move(next);
  }
  return table;
}

const WordMetric::BfsTable& WordMetric::bfs() const {
  if (!bfs_) throw usage_error("word metric has no BFS table");
  return *bfs_;
}

int WordMetric::length(const Element& g) const {
  require_member(group_, g);
  if (closed_form()) {
    const auto& d = g.data();
    switch (group_.kind()) {
      case GroupKind::lattice: {
        long total = 0;
        for (auto x : d) total += std::labs(x);
        return static_cast<int>(total);
      }
      case GroupKind::free:
        return static_cast<int>(d.size());
      case GroupKind::cyclic:
        return std::min(d[0], group_.parameter() - d[0]);
      case GroupKind::lamplighter:
        break;
    }
  }
  const auto& table = bfs();
  auto it = table.find(g);
  if (it == table.end()) {
    throw unreachable_error(encode(group_, g) + " is not within word length " +
                            std::to_string(bfs_radius_) + " of the identity");
  }
  return it->second.distance;
}

std::vector<Element> WordMetric::geodesic(const Element& g) const {
  require_member(group_, g);
  const GroupKind kind = group_.kind();
  std::vector<Element> word;
  if (closed_form()) {
    const auto& d = g.data();
    switch (kind) {
      case GroupKind::lattice:
        for (std::size_t i = 0; i < d.size(); ++i) {
          Element::Storage step(d.size(), 0);
          step[i] = d[i] > 0 ? 1 : -1;
          for (int k = 0; k < std::abs(d[i]); ++k) word.emplace_back(kind, step);
        }
        return word;
      case GroupKind::free:
        for (auto letter : d) word.emplace_back(kind, Element::Storage{letter});
        return word;
      case GroupKind::cyclic: {
        const int n = group_.parameter();
        const bool forward = d[0] <= n - d[0];
        const int steps = forward ? d[0] : n - d[0];
        for (int k = 0; k < steps; ++k) word.emplace_back(kind, Element::Storage{forward ? 1 : n - 1});
        return word;
      }
      case GroupKind::lamplighter:
        break;
    }
  }
  const auto& table = bfs();
  const auto& gens = group_.generators();
  Element cur = g;
  while (true) {
    auto it = table.find(cur);
    if (it == table.end()) {
      throw unreachable_error(encode(group_, g) + " is not within word length " +
                              std::to_string(bfs_radius_) + " of the identity");
    }
    if (it->second.distance == 0) break;
    const Element& gen = gens[it->second.parent_generator];
    word.push_back(gen);
    cur = multiply(group_, cur, inverse(group_, gen));
  }
  std::reverse(word.begin(), word.end());
  return word;
}

std::vector<Element> WordMetric::ball(int radius) const {
  std::vector<std::pair<int, Element>> found;
  const auto& gens = group_.generators();
  absl::flat_hash_map<Element, int> seen{{group_.identity(), 0}};
  std::vector<Element> frontier{group_.identity()};
  for (int d = 1; d <= radius && !frontier.empty(); ++d) {
    std::vector<Element> next;
    for (const auto& g : frontier) {
      for (const auto& s : gens) {
        Element h = multiply(group_, g, s);
        if (seen.emplace(h, d).second) next.push_back(std::move(h));
      }
    }
    frontier = std::move(next);
  }
  for (auto& [g, d] : seen) found.emplace_back(d, g);
  std::sort(found.begin(), found.end(), [this](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return encoding_less(group_, a.second, b.second);
  });
  std::vector<Element> out;
  out.reserve(found.size());
  for (auto& [d, g] : found) out.push_back(std::move(g));
  return out;
}

Gauge Gauge::word_length(const Group& group, int bfs_radius) {
  Gauge gauge;
  gauge.kind_ = Kind::word_length;
  gauge.subadditive_ = true;
  gauge.metric_ = std::make_shared<const WordMetric>(group, bfs_radius);
  return gauge;
}

Gauge Gauge::table(const Group& group, Table entries, DefaultRule rule, int chunk_length,
                   bool subadditive) {
  if (chunk_length < 1) throw usage_error("chunk length must be >= 1");
  for (const auto& [g, entry] : entries) {
    require_member(group, g);
    if (!(entry.value >= 0.0)) throw usage_error("gauge values must be nonnegative");
    if (g == group.identity() && entry.value != 0.0) throw usage_error("gauge of identity must be 0");
  }
  Gauge gauge;
  gauge.kind_ = Kind::table;
  gauge.subadditive_ = subadditive;
  gauge.metric_ = std::make_shared<const WordMetric>(group);
  gauge.table_ = std::make_shared<const Table>(std::move(entries));
  gauge.rule_ = rule;
  gauge.chunk_length_ = chunk_length;
  return gauge;
}

double gauge_value(const Gauge& gauge, const Group& group, const Element& g) {
  if (!(gauge.group() == group)) throw usage_error("gauge belongs to a different group");
  if (gauge.kind() == Gauge::Kind::word_length) return gauge.metric().length(g);

  require_member(group, g);
  if (g == group.identity()) return 0.0;
  const auto& table = gauge.entries();
  if (auto it = table.find(g); it != table.end()) return it->second.value;
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (gauge.default_rule() == Gauge::DefaultRule::infinite) return inf;

  std::vector<Element> word;
  try {
    word = gauge.metric().geodesic(g);
  } catch (const unreachable_error&) {
    return inf;
  }
  double total = 0.0;
  const std::size_t block = static_cast<std::size_t>(gauge.chunk_length());
  for (std::size_t start = 0; start < word.size(); start += block) {
    Element piece = group.identity();
    for (std::size_t i = start; i < std::min(word.size(), start + block); ++i) {
      multiply_into(group, piece, word[i]);
    }
    if (piece == group.identity()) continue;
    auto it = table.find(piece);
    if (it == table.end()) return inf;
    total += it->second.value;
  }
  return total;
}

int word_length(const Group& group, const Element& g, int bfs_radius) {
  return WordMetric(group, bfs_radius).length(g);
}

}  // namespace stopwalk
