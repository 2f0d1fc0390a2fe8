#pragma once

// Markov stopping times as finite prefix automata, optionally randomized.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <absl/container/inlined_vector.h>
#include <json.hpp>

#include "stopwalk/measure.hpp"
#include "stopwalk/walk.hpp"

namespace stopwalk {

/// Automaton state. Its layout is private to each rule kind; hitting_subset
/// carries the current (relative) position, compose prefixes a phase.
using RuleState = absl::InlinedVector<std::int32_t, 8>;

/// One outcome of reading an increment: with probability `prob` (taken over
/// the auxiliary randomness) the rule either stops or moves to `next`.
struct Branch {
  double prob = 1.0;
  bool stop = false;
  RuleState next;
};
using Branches = absl::InlinedVector<Branch, 2>;

class StoppingRule {
 public:
  enum class Kind { constant, first_increment_in, hitting_subgroup, hitting_subset, randomized_horizon, willis, compose };

  static StoppingRule constant(int k);
  static StoppingRule first_increment_in(const Group& group, std::vector<Element> set);
  /// First s >= 1 with phi(x_s) = 0, where phi: G -> Z/modulus sends the
  /// i-th standard generator (of each +/- pair) to coefficients[i]. The
  /// hitting set is the kernel of phi, a subgroup of index modulus / gcd.
  ///   Z^d: one coefficient per axis; F_k: one per letter;
  ///   lamplighter: {t, toggle}; Z/n: one.
  static StoppingRule hitting_subgroup(const Group& group, int modulus, std::vector<int> coefficients);
  /// First s >= 1 with x_s in the (finite) set.
  static StoppingRule hitting_subset(const Group& group, std::vector<Element> set);
  /// Stop at s = omega, omega ~ theta drawn once at the start. theta is a
  /// finite list of (n >= 1, probability) summing to 1.
  static StoppingRule randomized_horizon(std::vector<std::pair<int, double>> theta);
  /// Stop after an increment h with probability beta(h) / mu(h), where
  /// mu = alpha + beta.
  static StoppingRule willis(const Measure& alpha, const Measure& beta);
  /// tau_1 + tau_2 o U^{tau_1}.
  static StoppingRule compose(const StoppingRule& first, const StoppingRule& second);

  Kind kind() const;
  /// Short description for reports, e.g. "first_increment_in{a}".
  std::string name() const;
  /// False when stopping can depend on auxiliary randomness.
  bool deterministic() const;
  /// Index of the hitting subgroup (hitting_subgroup rules only).
  int subgroup_index() const;

  /// Distribution of the initial state (a single state with probability 1
  /// except for randomized horizons).
  std::vector<std::pair<double, RuleState>> initial() const;
  /// Reads increment h in state `state`. Branch probabilities sum to 1;
  /// stopping branches come first.
  Branches step(const RuleState& state, const Element& h) const;

  /// Checks the rule against the walk it will run on (group, and for willis
  /// that alpha + beta = mu). Throws usage_error.
  void validate_for(const Measure& mu) const;

  nlohmann::json to_json() const;

  struct Node;

 private:
  explicit StoppingRule(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

struct StopOutcome {
  bool stopped = false;
  /// Stop index, or the horizon when censored.
  std::size_t index = 0;
  /// x_index (the last position when censored).
  Element position;
};

/// First s <= horizon at which the rule stops on `path`. Auxiliary uniforms
/// are drawn from `aux` only where a choice is actually random.
StopOutcome evaluate(const StoppingRule& rule, const SamplePath& path, PrngStream& aux, std::size_t horizon);

/// tau_1 = evaluate; tau_{m+1} = tau_m + tau(U^{tau_m} path), each leg with
/// its own auxiliary substream aux.substream(m). The horizon bounds the total
/// index. `visit(m, outcome)` is called for m = 1..count in order, with the
/// absolute position x_{tau_m}; a censored leg is reported and ends the run.
void iterate_visit(const StoppingRule& rule, const SamplePath& path, const PrngStream& aux, std::size_t count,
                   std::size_t horizon, const std::function<void(std::size_t, const StopOutcome&)>& visit);

/// The outcomes of iterate_visit collected; the last one is censored if the
/// horizon was hit before `count` stops.
std::vector<StopOutcome> iterate(const StoppingRule& rule, const SamplePath& path, const PrngStream& aux,
                                 std::size_t count, std::size_t horizon);

/// Mean stop index over uncensored paths, with the censored fraction
/// reported (and lower_bound set when it is positive). Throws budget_error
/// if every path is censored.
Estimate expectation_estimate(const StoppingRule& rule, const Measure& mu, std::size_t paths, std::size_t horizon,
                              PrngStream rng, unsigned threads = 1);

StoppingRule compose(const StoppingRule& first, const StoppingRule& second);

/// Builds a rule from its JSON spec (see README for the grammar). `base`
/// supplies mu for a willis rule given only "beta".
StoppingRule build_stopping_rule(const nlohmann::json& spec, const Group& group,
                                 const std::optional<Measure>& base = std::nullopt);

}  // namespace stopwalk
