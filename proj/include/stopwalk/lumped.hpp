#pragma once

// Exact entropies of convolution powers of mu_tau for the simple random walk
// on F_k and tau = first time the increment is a fixed letter m.
//
// mu_tau^{*n}(g) depends only on the letter counts of y = g m^{-1} (how many
// m, m^{-1} and other letters its reduced word has), so the entropy is a sum
// over count classes instead of over ~(2k-1)^L elements. With w_m = z/2k and
// w_x = 1/2k otherwise, the first-passage series
//   F_x = w_x / (1 - sum_{y != x} w_y F_{y^{-1}})
// and G_0 = 1 / (1 - sum_y w_y F_{y^{-1}}) give
//   mu_tau^{*n}(g) = (1/2k) [z^{n-1}] G_0 F_m^i F_M^j F_o^l,
// where (i, j, l) are the counts of m, M = m^{-1} and other letters in y.

#include <optional>
#include <vector>

#include "stopwalk/measure.hpp"
#include "stopwalk/stopping.hpp"

namespace stopwalk {

struct LumpedEntropies {
  /// H(mu_tau^{*n}) for n = 0..n_max, over words of length <= cutoff.
  std::vector<double> entropies;
  /// 1 - (mass covered) for each n; entropies are of the covered part.
  std::vector<double> unresolved;
  int cutoff = 0;
};

/// Throws budget_error if no cutoff up to `max_cutoff` brings every
/// unresolved mass under `target`.
LumpedEntropies first_letter_power_entropies(int rank, int n_max, double target = 1e-8, int max_cutoff = 512);

/// mu_tau^{*n}(g) for the marked letter m = a (the first generator).
double first_letter_power_probability(int rank, int n, const Element& g);

/// The rank when (mu, rule) is the SRW on F_k with first_increment_in of a
/// single letter, i.e. when the lumped computation applies.
std::optional<int> lumped_rank(const Measure& mu, const StoppingRule& rule);

}  // namespace stopwalk
