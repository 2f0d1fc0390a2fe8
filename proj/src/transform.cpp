#include "stopwalk/transform.hpp"

#include <algorithm>
#include <cmath>

#include <absl/container/flat_hash_map.h>

#include "stopwalk/parallel.hpp"
#include "stopwalk/summation.hpp"

namespace stopwalk {

namespace {

struct FrontierKey {
  Element position;
  RuleState state;

  friend bool operator==(const FrontierKey& a, const FrontierKey& b) {
    return a.position == b.position && a.state == b.state;
  }
  template <typename H>
  friend H AbslHashValue(H h, const FrontierKey& k) {
    return H::combine(std::move(h), k.position, absl::MakeSpan(k.state.data(), k.state.size()));
  }
};

bool key_less(const FrontierKey& a, const FrontierKey& b) {
  const auto& x = a.position.data();
  const auto& y = b.position.data();
  if (x != y) return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
  return std::lexicographical_compare(a.state.begin(), a.state.end(), b.state.begin(), b.state.end());
}

using Frontier = absl::flat_hash_map<FrontierKey, double>;

std::vector<const std::pair<const FrontierKey, double>*> ordered(const Frontier& f) {
  std::vector<const std::pair<const FrontierKey, double>*> out;
  out.reserve(f.size());
  for (const auto& e : f) out.push_back(&e);
  std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) { return key_less(a->first, b->first); });
  return out;
}

double sorted_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  CompensatedSum s;
  for (double x : v) s += x;
  return s.value();
}

// Floor and cap on the frontier; ties at the cap threshold broken by key order.
double truncate_frontier(Frontier& f, std::size_t cap) {
  std::vector<double> dropped;
  absl::erase_if(f, [&](const auto& e) {
    if (e.second < weight_floor) {
      dropped.push_back(e.second);
      return true;
    }
    return false;
  });
  if (f.size() > cap) {
    auto entries = ordered(f);
    std::stable_sort(entries.begin(), entries.end(), [](const auto* a, const auto* b) { return a->second < b->second; });
    std::vector<FrontierKey> victims;
    for (std::size_t i = 0; i < f.size() - cap; ++i) {
      dropped.push_back(entries[i]->second);
      victims.push_back(entries[i]->first);
    }
    for (const auto& k : victims) f.erase(k);
  }
  return sorted_sum(std::move(dropped));
}

ExactTransformResult make_result(const Group& group, Measure::Atoms atoms, std::vector<double> stopped,
                                 double unresolved, double dropped) {
  Measure m(group, std::move(atoms));
  TruncationReport report{m.mass(), dropped, m.size()};
  return ExactTransformResult{std::move(m), std::move(stopped), unresolved, report};
}

}  // namespace

double ExactTransformResult::expected_time() const {
  CompensatedSum e;
  for (std::size_t s = 0; s < stopped_by_step.size(); ++s) e += static_cast<double>(s + 1) * stopped_by_step[s];
  return e.value();
}

double ExactTransformResult::accounted_mass() const {
  return measure.mass() + unresolved_mass + truncation.dropped_mass;
}

ExactTransformResult transformed_measure_exact(const StoppingRule& rule, const Measure& mu, std::size_t horizon,
                                               std::size_t support_cap) {
  if (!mu.is_probability()) throw usage_error("transformed_measure_exact needs a probability measure");
  if (horizon < 1) throw usage_error("horizon must be >= 1");
  if (support_cap < 1) throw usage_error("support cap must be >= 1");
  rule.validate_for(mu);
  const Group& group = mu.group();
  const auto steps = canonical_atoms(mu.atoms());

  Frontier frontier;
  for (auto& [p, s] : rule.initial()) frontier[FrontierKey{group.identity(), std::move(s)}] += p;
  Measure::Atoms out;
  std::vector<double> stopped;
  double dropped = 0.0;

  for (std::size_t s = 1; s <= horizon && !frontier.empty(); ++s) {
    Frontier next;
    next.reserve(frontier.size() * steps.size());
    CompensatedSum stopped_now;
    // Branches depend on (state, increment) only; cache them per state.
    absl::flat_hash_map<RuleState, std::vector<Branches>> cache;
    for (const auto* entry : ordered(frontier)) {
      const auto& [key, w] = *entry;
      auto it = cache.find(key.state);
      if (it == cache.end()) {
        std::vector<Branches> per_step;
        per_step.reserve(steps.size());
        for (const auto* atom : steps) per_step.push_back(rule.step(key.state, atom->first));
        it = cache.emplace(key.state, std::move(per_step)).first;
      }
      for (std::size_t a = 0; a < steps.size(); ++a) {
        Element x = key.position;
        multiply_into(group, x, steps[a]->first);
        const double base = w * steps[a]->second;
        for (const Branch& b : it->second[a]) {
          const double mass = base * b.prob;
          if (mass == 0.0) continue;
          if (b.stop) {
            out[x] += mass;
            stopped_now += mass;
          } else {
            next[FrontierKey{x, b.next}] += mass;
          }
        }
      }
    }
    stopped.push_back(stopped_now.value());
    dropped += truncate_frontier(next, support_cap);
    if (dropped > 1e-9) {
      throw budget_error("transformed_measure_exact: support cap " + std::to_string(support_cap) +
                         " drops mass " + format_double(dropped) + " by step " + std::to_string(s));
    }
    frontier = std::move(next);
  }
  std::vector<double> remaining;
  for (const auto& [k, w] : frontier) remaining.push_back(w);
  return make_result(group, std::move(out), std::move(stopped), sorted_sum(std::move(remaining)), dropped);
}

std::pair<Measure, double> transformed_measure_mc(const StoppingRule& rule, const Measure& mu, std::size_t paths,
                                                  std::size_t horizon, PrngStream rng, unsigned threads) {
  if (!mu.is_probability()) throw usage_error("transformed_measure_mc needs a probability measure");
  if (paths == 0) throw usage_error("need at least one path");
  rule.validate_for(mu);
  std::vector<StopOutcome> outcomes(paths);
  parallel_for(paths, threads, [&](unsigned, std::size_t i) {
    const PrngStream stream = rng.substream(i);
    const auto path = SamplePath::streaming(mu, stream.substream(0));
    PrngStream aux = stream.substream(1);
    outcomes[i] = evaluate(rule, path, aux, horizon);
  });
  absl::flat_hash_map<Element, std::size_t> counts;
  std::size_t censored = 0;
  for (const auto& o : outcomes) {
    if (o.stopped) {
      ++counts[o.position];
    } else {
      ++censored;
    }
  }
  Measure::Atoms atoms;
  const double n = static_cast<double>(paths);
  for (const auto& [g, c] : counts) atoms.emplace(g, static_cast<double>(c) / n);
  return {Measure(mu.group(), std::move(atoms)), static_cast<double>(censored) / n};
}

ExactTransformResult willis_closed_form(const Measure& beta, const Measure& alpha, int i_max,
                                        std::size_t support_cap) {
  if (!(alpha.group() == beta.group())) throw usage_error("willis_closed_form: alpha and beta on different groups");
  if (beta.empty()) throw usage_error("willis_closed_form: beta must have positive mass");
  if (std::abs(alpha.mass() + beta.mass() - 1.0) > probability_tolerance) {
    throw usage_error("willis_closed_form: mass(alpha) + mass(beta) must be 1");
  }
  if (i_max < 0) throw usage_error("willis_closed_form: i_max must be >= 0");
  const Group& group = beta.group();
  Measure::Atoms out;
  std::vector<double> stopped;
  double dropped = 0.0;
  Measure term = beta;
  for (int i = 0;; ++i) {
    for (const auto* atom : canonical_atoms(term.atoms())) out[atom->first] += atom->second;
    stopped.push_back(term.mass());
    if (i == i_max || alpha.empty()) break;
    Measure::Atoms next = convolve(alpha, term).atoms();
    dropped += truncate_atoms(group, next, support_cap);
    term = Measure(group, std::move(next));
  }
  // Pad so stopped_by_step covers steps 1..i_max+1 even when alpha is empty.
  stopped.resize(static_cast<std::size_t>(i_max) + 1, 0.0);
  const double unresolved = alpha.empty() ? 0.0 : std::pow(alpha.mass(), i_max + 1);
  return make_result(group, std::move(out), std::move(stopped), unresolved, dropped);
}

ExactTransformResult convex_combination_measure(const std::vector<std::pair<int, double>>& theta, const Measure& mu,
                                                int n_max, std::size_t support_cap) {
  if (n_max < 1) throw usage_error("convex_combination_measure: n_max must be >= 1");
  std::vector<double> weights(static_cast<std::size_t>(n_max), 0.0);
  CompensatedSum total;
  for (const auto& [n, p] : theta) {
    if (n < 1 || !(p >= 0.0)) throw usage_error("theta must be a nonnegative measure on positive integers");
    total += p;
    if (n <= n_max) weights[static_cast<std::size_t>(n - 1)] += p;
  }
  if (std::abs(total.value() - 1.0) > probability_tolerance) throw usage_error("theta must sum to 1");
  const Group& group = mu.group();
  Measure::Atoms out;
  Measure::Atoms power{{group.identity(), 1.0}};
  double dropped = 0.0;
  CompensatedSum covered;
  const auto factor = canonical_atoms(mu.atoms());
  for (int n = 1; n <= n_max; ++n) {
    Measure::Atoms next;
    for (const auto* left : canonical_atoms(power)) {
      for (const auto* atom : factor) {
        Element gh = left->first;
        multiply_into(group, gh, atom->first);
        next[std::move(gh)] += left->second * atom->second;
      }
    }
    power = std::move(next);
    const double t = weights[static_cast<std::size_t>(n - 1)];
    // Truncation of a power matters only in proportion to what is still used.
    double later = 0.0;
    for (int m = n; m <= n_max; ++m) later += weights[static_cast<std::size_t>(m - 1)];
    dropped += later * truncate_atoms(group, power, support_cap);
    if (dropped > 1e-9) {
      throw budget_error("convex_combination_measure: support cap " + std::to_string(support_cap) +
                         " drops mass " + format_double(dropped));
    }
    covered += t;
    if (t == 0.0) continue;
    for (const auto* atom : canonical_atoms(power)) out[atom->first] += t * atom->second;
  }
  const double unresolved = std::max(0.0, 1.0 - covered.value());
  return make_result(group, std::move(out), std::move(weights), unresolved, dropped);
}

nlohmann::json transform_to_json(const ExactTransformResult& result) {
  nlohmann::json j = measure_to_json(result.measure);
  j["unresolved_mass"] = result.unresolved_mass;
  j["stopped_by_step"] = result.stopped_by_step;
  j["dropped_mass"] = result.truncation.dropped_mass;
  return j;
}

}  // namespace stopwalk
