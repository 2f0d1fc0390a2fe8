#pragma once

// Finitely supported sub-probability measures on a group.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <absl/container/flat_hash_map.h>
#include <json.hpp>

#include "stopwalk/gauge.hpp"
#include "stopwalk/group.hpp"
#include "stopwalk/rng.hpp"

namespace stopwalk {

/// Tolerance for "mass = 1" and for weight sums supplied by callers.
inline constexpr double probability_tolerance = 1e-9;
/// Atoms lighter than this are dropped (and reported) by truncating routines.
inline constexpr double weight_floor = 1e-15;

class Measure {
 public:
  using Atoms = absl::flat_hash_map<Element, double>;

  /// Zero weights are discarded; negative weights are an error. The mass is
  /// the (compensated) sum of the weights.
  Measure(Group group, Atoms atoms);
  /// As above, additionally checking |sum - declared_mass| <= 1e-12.
  Measure(Group group, Atoms atoms, double declared_mass);

  static Measure dirac(const Group& group, const Element& g);
  /// Equal weights on the listed (distinct) elements.
  static Measure uniform(const Group& group, const std::vector<Element>& support);
  /// Built from canonical text encodings, e.g. {{"(1)", 0.5}, {"(-1)", 0.5}}.
  static Measure from_text(const Group& group, const std::vector<std::pair<std::string, double>>& atoms);

  const Group& group() const { return group_; }
  const Atoms& atoms() const { return atoms_; }
  double mass() const { return mass_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }
  bool is_probability() const;

  /// Weight of g, 0 when g is not an atom.
  double weight(const Element& g) const;
  /// Atoms in canonical encoding order.
  std::vector<std::pair<Element, double>> sorted_atoms() const;
  /// This measure scaled to mass 1. Throws usage_error when empty.
  Measure normalized() const;

 private:
  Group group_;
  Atoms atoms_;
  double mass_ = 0.0;
};

/// Atoms in a fixed order (lexicographic on the element payload). Hash-map
/// iteration order varies between runs, so every floating-point reduction
/// over atoms goes through this to keep results bit-reproducible.
std::vector<const std::pair<const Element, double>*> canonical_atoms(const Measure::Atoms& atoms);

struct TruncationReport {
  double retained_mass = 0.0;
  double dropped_mass = 0.0;
  std::size_t support_size = 0;
};

/// Drops atoms below weight_floor and, if more than `support_cap` remain,
/// the lightest atoms (ties by encoding order) until `support_cap` remain.
/// Returns the dropped mass.
double truncate_atoms(const Group& group, Measure::Atoms& atoms, std::size_t support_cap);

/// (mu * nu)(g) = sum_h mu(h) nu(h^{-1} g).
Measure convolve(const Measure& mu, const Measure& nu);

/// mu^{*n}, truncating after every factor when the support exceeds the cap.
std::pair<Measure, TruncationReport> convolution_power(const Measure& mu, int n, std::size_t support_cap);

/// Shannon entropy in nats. Requires a probability measure.
double entropy(const Measure& mu);

/// sum_g |g| mu(g).
double first_moment(const Measure& mu, const Gauge& gauge);

/// Pointwise convex combination; weights must sum to 1 within 1e-12.
Measure mix(const std::vector<std::pair<double, Measure>>& components);

/// (beta, alpha): beta is mu restricted to B, alpha = mu - beta.
std::pair<Measure, Measure> decompose(const Measure& mu, const std::vector<Element>& subset);

/// Total variation distance (1/2) sum |mu(g) - nu(g)|.
double total_variation(const Measure& mu, const Measure& nu);

/// Inverse-CDF sampler over a probability measure with atoms in encoding
/// order, so draws depend only on the measure's contents and the stream.
class Sampler {
 public:
  explicit Sampler(const Measure& mu);
  const Element& operator()(PrngStream& rng) const;
  const Group& group() const { return group_; }

 private:
  Group group_;
  std::vector<Element> atoms_;
  std::vector<double> cumulative_;
};

/// One draw from mu. Builds a Sampler per call; use Sampler for bulk draws.
Element sample(const Measure& mu, PrngStream& rng);

nlohmann::json group_to_json(const Group& group);
Group group_from_json(const nlohmann::json& j);
/// {"group": ..., "mass": m, "atoms": [[element, weight], ...]} sorted by
/// element encoding.
nlohmann::json measure_to_json(const Measure& mu);
Measure measure_from_json(const nlohmann::json& j);

}  // namespace stopwalk
