#pragma once

// The law mu_tau of x_tau: exact forward evolution, closed forms, Monte Carlo.

#include <cstddef>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stopwalk/measure.hpp"
#include "stopwalk/stopping.hpp"

namespace stopwalk {

struct ExactTransformResult {
  /// Sub-probability measure of x_tau over stops at steps 1..horizon.
  Measure measure;
  /// stopped_by_step[s-1] = P(tau = s).
  std::vector<double> stopped_by_step;
  /// Mass still running at the horizon.
  double unresolved_mass = 0.0;
  /// Mass discarded by the floor and the support cap.
  TruncationReport truncation;

  /// sum_s s P(tau = s): E(tau) when unresolved_mass is 0, else a lower bound.
  double expected_time() const;
  /// measure.mass + unresolved + dropped; 1 up to rounding.
  double accounted_mass() const;
};

/// Forward evolution of the joint law of (x_s, automaton state). Auxiliary
/// randomness enters through branch probabilities, so randomized rules are
/// exact too. The running frontier is capped at `support_cap` entries.
/// Throws budget_error when truncation drops more than 1e-9.
ExactTransformResult transformed_measure_exact(const StoppingRule& rule, const Measure& mu, std::size_t horizon,
                                               std::size_t support_cap);

/// Empirical law of x_tau over `paths` sampled paths, each atom weighted
/// 1/paths, so its mass is one minus the censored fraction (also returned).
std::pair<Measure, double> transformed_measure_mc(const StoppingRule& rule, const Measure& mu, std::size_t paths,
                                                  std::size_t horizon, PrngStream rng, unsigned threads = 1);

/// beta + sum_{i=1..i_max} alpha^{*i} * beta, with unresolved mass
/// mass(alpha)^{i_max+1}.
ExactTransformResult willis_closed_form(const Measure& beta, const Measure& alpha, int i_max,
                                        std::size_t support_cap = std::size_t{1} << 22);

/// sum_{n<=n_max} theta(n) mu^{*n}; the theta tail beyond n_max is unresolved.
ExactTransformResult convex_combination_measure(const std::vector<std::pair<int, double>>& theta, const Measure& mu,
                                                int n_max, std::size_t support_cap);

/// Measure JSON plus "unresolved_mass" and "stopped_by_step".
nlohmann::json transform_to_json(const ExactTransformResult& result);

}  // namespace stopwalk
