#pragma once

#include <limits>
#include <memory>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "stopwalk/group.hpp"

namespace stopwalk {

/// Word length with respect to a group's generating set.
///
/// Closed forms are used for the standard generators of Z^d (L1 norm), F_k
/// (reduced length) and Z/n; every other case (the lamplighter always) runs a
/// breadth-first search of the Cayley graph, built once up to `bfs_radius`.
class WordMetric {
 public:
  static constexpr int default_bfs_radius = 20;

  explicit WordMetric(Group group, int bfs_radius = default_bfs_radius);

  const Group& group() const { return group_; }
  int bfs_radius() const { return bfs_radius_; }

  /// Throws unreachable_error if a BFS-backed length exceeds the radius.
  int length(const Element& g) const;
  /// A shortest sequence of generators whose product is g.
  std::vector<Element> geodesic(const Element& g) const;
  /// All elements of length <= radius, sorted by length then encoding.
  std::vector<Element> ball(int radius) const;

 private:
  struct BfsEntry {
    int distance;
    int parent_generator;  // generator that was applied last on a geodesic
  };
  using BfsTable = absl::flat_hash_map<Element, BfsEntry>;

  bool closed_form() const;
  std::shared_ptr<const BfsTable> build_bfs() const;
  const BfsTable& bfs() const;

  Group group_;
  int bfs_radius_;
  std::shared_ptr<const BfsTable> bfs_;
};

/// A gauge function |.| on a group. Values are reals so that the Green
/// metric shares the type with word length.
class Gauge {
 public:
  enum class Kind { word_length, table };
  enum class DefaultRule {
    infinite,         // elements missing from the table are at distance +inf
    geodesic_chunks,  // sum of table values over consecutive geodesic blocks
  };
  struct Entry {
    double value = 0.0;
    double stderr = 0.0;
  };
  using Table = absl::flat_hash_map<Element, Entry>;

  static Gauge word_length(const Group& group, int bfs_radius = WordMetric::default_bfs_radius);
  /// Table gauge. `chunk_length` is the geodesic block length used by the
  /// geodesic_chunks rule (normally the table's radius).
  static Gauge table(const Group& group, Table entries, DefaultRule rule, int chunk_length,
                     bool subadditive);

  Kind kind() const { return kind_; }
  bool subadditive() const { return subadditive_; }
  const Group& group() const { return metric_->group(); }
  const Table& entries() const { return *table_; }
  DefaultRule default_rule() const { return rule_; }
  int chunk_length() const { return chunk_length_; }
  const WordMetric& metric() const { return *metric_; }

 private:
  Gauge() = default;

  Kind kind_ = Kind::word_length;
  bool subadditive_ = true;
  std::shared_ptr<const WordMetric> metric_;
  std::shared_ptr<const Table> table_;
  DefaultRule rule_ = DefaultRule::infinite;
  int chunk_length_ = 1;
};

/// |g| under the gauge. Word-length gauges return exact integer lengths;
/// table gauges return the stored value or apply the default rule.
double gauge_value(const Gauge& gauge, const Group& group, const Element& g);

/// Convenience: word length w.r.t. the group's generating set.
int word_length(const Group& group, const Element& g, int bfs_radius = WordMetric::default_bfs_radius);

}  // namespace stopwalk
