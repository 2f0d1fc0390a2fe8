#include "stopwalk/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <absl/container/flat_hash_set.h>

#include "stopwalk/parallel.hpp"
#include "stopwalk/summation.hpp"

namespace stopwalk {

struct StoppingRule::Node {
  Kind kind = Kind::constant;
  std::optional<Group> group;

  int k = 1;                                   // constant
  absl::flat_hash_set<Element> set;            // first_increment_in, hitting_subset
  std::vector<Element> sorted_set;             //   (encoding order, for names)
  int modulus = 1;                             // hitting_subgroup
  std::vector<int> coefficients;               //
  std::vector<std::pair<int, double>> theta;   // randomized_horizon
  std::optional<Measure> alpha, beta;          // willis
  std::shared_ptr<const Node> first, second;  // compose
};

namespace {

using Node = StoppingRule::Node;

int mod(long long a, int m) {
  const long long r = a % m;
  return static_cast<int>(r < 0 ? r + m : r);
}

// phi(h) for the homomorphism G -> Z/m of a hitting_subgroup rule.
int character(const Node& node, const Element& h) {
  const auto& d = h.data();
  long long v = 0;
  switch (node.group->kind()) {
    case GroupKind::lattice:
      for (std::size_t i = 0; i < d.size(); ++i) v += static_cast<long long>(node.coefficients[i]) * d[i];
      break;
    case GroupKind::free:
      for (std::int32_t letter : d) {
        const long long c = node.coefficients[static_cast<std::size_t>(std::abs(letter) - 1)];
        v += letter > 0 ? c : -c;
      }
      break;
    case GroupKind::lamplighter:
      v = static_cast<long long>(node.coefficients[0]) * d[0] +
          static_cast<long long>(node.coefficients[1]) * static_cast<long long>(d.size() - 1);
      break;
    case GroupKind::cyclic:
      v = static_cast<long long>(node.coefficients[0]) * d[0];
      break;
  }
  return mod(v, node.modulus);
}

std::vector<std::pair<double, RuleState>> initial_of(const Node& node) {
  switch (node.kind) {
    case StoppingRule::Kind::constant:
      return {{1.0, RuleState{node.k}}};
    case StoppingRule::Kind::first_increment_in:
    case StoppingRule::Kind::willis:
      return {{1.0, RuleState{}}};
    case StoppingRule::Kind::hitting_subgroup:
      return {{1.0, RuleState{0}}};
    case StoppingRule::Kind::hitting_subset: {
      const auto& id = node.group->identity().data();
      return {{1.0, RuleState(id.begin(), id.end())}};
    }
    case StoppingRule::Kind::randomized_horizon: {
      std::vector<std::pair<double, RuleState>> out;
      for (const auto& [n, p] : node.theta) out.push_back({p, RuleState{n}});
      return out;
    }
    case StoppingRule::Kind::compose: {
      auto out = initial_of(*node.first);
      for (auto& [p, s] : out) s.insert(s.begin(), 0);
      return out;
    }
  }
  return {};
}

Branches step_of(const Node& node, const RuleState& state, const Element& h) {
  Branches out;
  switch (node.kind) {
    case StoppingRule::Kind::constant:
    case StoppingRule::Kind::randomized_horizon:
      if (state[0] <= 1) {
        out.push_back({1.0, true, {}});
      } else {
        out.push_back({1.0, false, RuleState{state[0] - 1}});
      }
      return out;
    case StoppingRule::Kind::first_increment_in:
      out.push_back({1.0, node.set.contains(h), {}});
      return out;
    case StoppingRule::Kind::hitting_subgroup: {
      const int coset = mod(static_cast<long long>(state[0]) + character(node, h), node.modulus);
      out.push_back({1.0, coset == 0, RuleState{coset}});
      return out;
    }
    case StoppingRule::Kind::hitting_subset: {
      Element x(node.group->kind(), Element::Storage(state.begin(), state.end()));
      multiply_into(*node.group, x, h);
      if (node.set.contains(x)) {
        out.push_back({1.0, true, {}});
      } else {
        out.push_back({1.0, false, RuleState(x.data().begin(), x.data().end())});
      }
      return out;
    }
    case StoppingRule::Kind::willis: {
      const double b = node.beta->weight(h);
      const double total = b + node.alpha->weight(h);
      const double p = total > 0.0 ? b / total : 0.0;
      if (p >= 1.0) {
        out.push_back({1.0, true, {}});
      } else if (p <= 0.0) {
        out.push_back({1.0, false, {}});
      } else {
        out.push_back({p, true, {}});
        out.push_back({1.0 - p, false, {}});
      }
      return out;
    }
    case StoppingRule::Kind::compose: {
      const RuleState inner(state.begin() + 1, state.end());
      if (state[0] == 0) {
        for (auto& b : step_of(*node.first, inner, h)) {
          if (!b.stop) {
            b.next.insert(b.next.begin(), 0);
            out.push_back(std::move(b));
            continue;
          }
          // First rule done: continue in the second rule's initial states.
          for (auto& [p, s] : initial_of(*node.second)) {
            s.insert(s.begin(), 1);
            out.push_back({b.prob * p, false, std::move(s)});
          }
        }
      } else {
        for (auto& b : step_of(*node.second, inner, h)) {
          if (!b.stop) b.next.insert(b.next.begin(), 1);
          out.push_back(std::move(b));
        }
      }
      // Keep the documented order: stopping branches first.
      std::stable_partition(out.begin(), out.end(), [](const Branch& b) { return b.stop; });
      return out;
    }
  }
  return out;
}

bool deterministic_of(const Node& node) {
  switch (node.kind) {
    case StoppingRule::Kind::randomized_horizon:
      return node.theta.size() == 1;
    case StoppingRule::Kind::willis:
      for (const auto& [g, b] : node.beta->atoms()) {
        if (node.alpha->weight(g) > 0.0) return false;
      }
      return true;
    case StoppingRule::Kind::compose:
      return deterministic_of(*node.first) && deterministic_of(*node.second);
    default:
      return true;
  }
}

std::string set_text(const Node& node) {
  std::string out = "{";
  for (std::size_t i = 0; i < node.sorted_set.size(); ++i) {
    if (i) out += " ";
    out += encode(*node.group, node.sorted_set[i]);
  }
  return out + "}";
}

std::string measure_text(const Measure& m) {
  std::string out = "{";
  bool first = true;
  for (const auto& [g, w] : m.sorted_atoms()) {
    if (!first) out += " ";
    first = false;
    out += encode(m.group(), g) + ":" + format_double(w);
  }
  return out + "}";
}

std::string name_of(const Node& node) {
  switch (node.kind) {
    case StoppingRule::Kind::constant:
      return "constant(" + std::to_string(node.k) + ")";
    case StoppingRule::Kind::first_increment_in:
      return "first_increment_in" + set_text(node);
    case StoppingRule::Kind::hitting_subgroup: {
      std::string out = "hitting_subgroup(mod " + std::to_string(node.modulus) + ";";
      for (int c : node.coefficients) out += " " + std::to_string(c);
      return out + ")";
    }
    case StoppingRule::Kind::hitting_subset:
      return "hitting_subset" + set_text(node);
    case StoppingRule::Kind::randomized_horizon: {
      std::string out = "randomized_horizon{";
      for (std::size_t i = 0; i < node.theta.size(); ++i) {
        if (i) out += " ";
        out += std::to_string(node.theta[i].first) + ":" + format_double(node.theta[i].second);
      }
      return out + "}";
    }
    case StoppingRule::Kind::willis:
      return "willis(beta=" + measure_text(*node.beta) + ")";
    case StoppingRule::Kind::compose:
      return "compose(" + name_of(*node.first) + "; " + name_of(*node.second) + ")";
  }
  return "";
}

nlohmann::json atoms_json(const Measure& m) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& [g, w] : m.sorted_atoms()) atoms.push_back({encode(m.group(), g), w});
  return atoms;
}

nlohmann::json json_of(const Node& node) {
  using nlohmann::json;
  switch (node.kind) {
    case StoppingRule::Kind::constant:
      return {{"kind", "constant"}, {"k", node.k}};
    case StoppingRule::Kind::first_increment_in:
    case StoppingRule::Kind::hitting_subset: {
      json set = json::array();
      for (const auto& g : node.sorted_set) set.push_back(encode(*node.group, g));
      return {{"kind", node.kind == StoppingRule::Kind::hitting_subset ? "hitting_subset" : "first_increment_in"},
              {"set", set}};
    }
    case StoppingRule::Kind::hitting_subgroup:
      return {{"kind", "hitting_subgroup"}, {"modulus", node.modulus}, {"coefficients", node.coefficients}};
    case StoppingRule::Kind::randomized_horizon: {
      json theta = json::array();
      for (const auto& [n, p] : node.theta) theta.push_back({n, p});
      return {{"kind", "randomized_horizon"}, {"theta", theta}};
    }
    case StoppingRule::Kind::willis:
      return {{"kind", "willis"}, {"alpha", atoms_json(*node.alpha)}, {"beta", atoms_json(*node.beta)}};
    case StoppingRule::Kind::compose:
      return {{"kind", "compose"}, {"first", json_of(*node.first)}, {"second", json_of(*node.second)}};
  }
  return {};
}

void validate_node(const Node& node, const Measure& mu) {
  if (node.group && !(*node.group == mu.group())) {
    throw usage_error("stopping rule is defined on " + node.group->name() + " but the walk lives on " +
                      mu.group().name());
  }
  switch (node.kind) {
    case StoppingRule::Kind::first_increment_in: {
      double mass = 0.0;
      for (const auto& g : node.sorted_set) mass += mu.weight(g);
      if (mass <= 0.0) throw usage_error("first_increment_in: mu(B) = 0, the rule never stops");
      break;
    }
    case StoppingRule::Kind::willis: {
      std::vector<Element> support;
      for (const Measure* m : {&*node.alpha, &*node.beta, &mu}) {
        for (const auto* atom : canonical_atoms(m->atoms())) support.push_back(atom->first);
      }
      for (const auto& g : support) {
        if (std::abs(node.alpha->weight(g) + node.beta->weight(g) - mu.weight(g)) > 1e-12) {
          throw usage_error("willis: alpha + beta differs from mu at " + encode(mu.group(), g));
        }
      }
      break;
    }
    case StoppingRule::Kind::compose:
      validate_node(*node.first, mu);
      validate_node(*node.second, mu);
      break;
    default:
      break;
  }
}

std::vector<Element> distinct_sorted(const Group& group, std::vector<Element> set, const char* who) {
  if (set.empty()) throw usage_error(std::string(who) + ": the set must be nonempty");
  for (const auto& g : set) require_member(group, g);
  std::sort(set.begin(), set.end(), [&](const Element& a, const Element& b) { return encoding_less(group, a, b); });
  set.erase(std::unique(set.begin(), set.end()), set.end());
  return set;
}

}  // namespace

StoppingRule StoppingRule::constant(int k) {
  if (k < 1) throw usage_error("constant rule needs k >= 1");
  auto node = std::make_shared<Node>();
  node->kind = Kind::constant;
  node->k = k;
  return StoppingRule(std::move(node));
}

StoppingRule StoppingRule::first_increment_in(const Group& group, std::vector<Element> set) {
  auto node = std::make_shared<Node>();
  node->kind = Kind::first_increment_in;
  node->group = group;
  node->sorted_set = distinct_sorted(group, std::move(set), "first_increment_in");
  node->set.insert(node->sorted_set.begin(), node->sorted_set.end());
  return StoppingRule(std::move(node));
}

StoppingRule StoppingRule::hitting_subgroup(const Group& group, int modulus, std::vector<int> coefficients) {
  if (modulus < 1) throw usage_error("hitting_subgroup: modulus must be >= 1");
  std::size_t expected = 1;
  switch (group.kind()) {
    case GroupKind::lattice:
    case GroupKind::free:
      expected = static_cast<std::size_t>(group.parameter());
      break;
    case GroupKind::lamplighter:
      expected = 2;
      break;
    case GroupKind::cyclic:
      expected = 1;
      break;
  }
  if (coefficients.size() != expected) {
    throw usage_error("hitting_subgroup on " + group.name() + " needs " + std::to_string(expected) +
                      " coefficients");
  }
  // The map must be a well-defined homomorphism.
  if (group.kind() == GroupKind::lamplighter && mod(2LL * coefficients[1], modulus) != 0) {
    throw usage_error("hitting_subgroup: the toggle has order 2, so 2 * coefficient must vanish mod modulus");
  }
  if (group.kind() == GroupKind::cyclic &&
      mod(static_cast<long long>(coefficients[0]) * group.parameter(), modulus) != 0) {
    throw usage_error("hitting_subgroup: coefficient * order must vanish mod modulus");
  }
  auto node = std::make_shared<Node>();
  node->kind = Kind::hitting_subgroup;
  node->group = group;
  node->modulus = modulus;
  for (int& c : coefficients) c = mod(c, modulus);
  node->coefficients = std::move(coefficients);
  return StoppingRule(std::move(node));
}

StoppingRule StoppingRule::hitting_subset(const Group& group, std::vector<Element> set) {
  auto node = std::make_shared<Node>();
  node->kind = Kind::hitting_subset;
  node->group = group;
  node->sorted_set = distinct_sorted(group, std::move(set), "hitting_subset");
  node->set.insert(node->sorted_set.begin(), node->sorted_set.end());
  return StoppingRule(std::move(node));
}

StoppingRule StoppingRule::randomized_horizon(std::vector<std::pair<int, double>> theta) {
  if (theta.empty()) throw usage_error("randomized_horizon: theta is empty");
  std::sort(theta.begin(), theta.end());
  std::vector<std::pair<int, double>> merged;
  CompensatedSum total;
  for (const auto& [n, p] : theta) {
    if (n < 1) throw usage_error("randomized_horizon: theta lives on positive integers");
    if (!(p >= 0.0) || !std::isfinite(p)) throw usage_error("randomized_horizon: weights must be nonnegative");
    total += p;
    if (p == 0.0) continue;
    if (!merged.empty() && merged.back().first == n) {
      merged.back().second += p;
    } else {
      merged.emplace_back(n, p);
    }
  }
  if (std::abs(total.value() - 1.0) > probability_tolerance) {
    throw usage_error("randomized_horizon: theta must be a probability measure");
  }
  auto node = std::make_shared<Node>();
  node->kind = Kind::randomized_horizon;
  node->theta = std::move(merged);
  return StoppingRule(std::move(node));
}

StoppingRule StoppingRule::willis(const Measure& alpha, const Measure& beta) {
  if (!(alpha.group() == beta.group())) throw usage_error("willis: alpha and beta live on different groups");
  if (beta.empty()) throw usage_error("willis: beta must have positive mass");
  if (std::abs(alpha.mass() + beta.mass() - 1.0) > probability_tolerance) {
    throw usage_error("willis: alpha + beta must be a probability measure");
  }
  auto node = std::make_shared<Node>();
  node->kind = Kind::willis;
  node->group = alpha.group();
  node->alpha = alpha;
  node->beta = beta;
  return StoppingRule(std::move(node));
}

StoppingRule StoppingRule::compose(const StoppingRule& first, const StoppingRule& second) {
  if (first.node_->group && second.node_->group && !(*first.node_->group == *second.node_->group)) {
    throw usage_error("compose: rules live on different groups");
  }
  auto node = std::make_shared<Node>();
  node->kind = Kind::compose;
  node->group = first.node_->group ? first.node_->group : second.node_->group;
  node->first = first.node_;
  node->second = second.node_;
  return StoppingRule(std::move(node));
}

StoppingRule compose(const StoppingRule& first, const StoppingRule& second) {
  return StoppingRule::compose(first, second);
}

StoppingRule::Kind StoppingRule::kind() const { return node_->kind; }
std::string StoppingRule::name() const { return name_of(*node_); }
bool StoppingRule::deterministic() const { return deterministic_of(*node_); }

int StoppingRule::subgroup_index() const {
  if (node_->kind != Kind::hitting_subgroup) throw usage_error("subgroup_index: not a hitting_subgroup rule");
  int g = node_->modulus;
  for (int c : node_->coefficients) g = std::gcd(g, c);
  return node_->modulus / g;
}

std::vector<std::pair<double, RuleState>> StoppingRule::initial() const { return initial_of(*node_); }

Branches StoppingRule::step(const RuleState& state, const Element& h) const { return step_of(*node_, state, h); }

void StoppingRule::validate_for(const Measure& mu) const { validate_node(*node_, mu); }

nlohmann::json StoppingRule::to_json() const { return json_of(*node_); }

// ---- evaluation ----

namespace {

template <typename Options>
std::size_t choose(const Options& options, PrngStream& aux) {
  if (options.size() == 1) return 0;
  const double u = aux.uniform();
  double cumulative = 0.0;
  for (std::size_t i = 0; i + 1 < options.size(); ++i) {
    cumulative += options[i].first;
    if (u < cumulative) return i;
  }
  return options.size() - 1;
}

std::size_t choose_branch(const Branches& branches, PrngStream& aux) {
  if (branches.size() == 1) return 0;
  const double u = aux.uniform();
  double cumulative = 0.0;
  for (std::size_t i = 0; i + 1 < branches.size(); ++i) {
    cumulative += branches[i].prob;
    if (u < cumulative) return i;
  }
  return branches.size() - 1;
}

}  // namespace

StopOutcome evaluate(const StoppingRule& rule, const SamplePath& path, PrngStream& aux, std::size_t horizon) {
  if (horizon < 1) throw usage_error("evaluate needs horizon >= 1");
  const Group& group = path.group();
  const auto init = rule.initial();
  RuleState state = init[choose(init, aux)].second;
  Element x = group.identity();
  for (std::size_t s = 1; s <= horizon; ++s) {
    const Element& h = path.increment(s);
    multiply_into(group, x, h);
    Branches branches = rule.step(state, h);
    Branch& b = branches[choose_branch(branches, aux)];
    if (b.stop) return StopOutcome{true, s, std::move(x)};
    state = std::move(b.next);
  }
  return StopOutcome{false, horizon, std::move(x)};
}

void iterate_visit(const StoppingRule& rule, const SamplePath& path, const PrngStream& aux, std::size_t count,
                   std::size_t horizon, const std::function<void(std::size_t, const StopOutcome&)>& visit) {
  if (count < 1) throw usage_error("iterate needs count >= 1");
  const Group& group = path.group();
  std::size_t tau = 0;
  Element x = group.identity();
  for (std::size_t m = 1; m <= count; ++m) {
    PrngStream leg_aux = aux.substream(m - 1);
    if (tau >= horizon) {
      visit(m, StopOutcome{false, horizon, x});
      return;
    }
    const StopOutcome leg = evaluate(rule, path.shifted(tau), leg_aux, horizon - tau);
    multiply_into(group, x, leg.position);
    tau += leg.index;
    visit(m, StopOutcome{leg.stopped, tau, x});
    if (!leg.stopped) return;
  }
}

std::vector<StopOutcome> iterate(const StoppingRule& rule, const SamplePath& path, const PrngStream& aux,
                                 std::size_t count, std::size_t horizon) {
  std::vector<StopOutcome> out;
  iterate_visit(rule, path, aux, count, horizon, [&](std::size_t, const StopOutcome& o) { out.push_back(o); });
  return out;
}

Estimate expectation_estimate(const StoppingRule& rule, const Measure& mu, std::size_t paths, std::size_t horizon,
                              PrngStream rng, unsigned threads) {
  if (!mu.is_probability()) throw usage_error("expectation_estimate needs a probability measure");
  if (paths == 0) throw usage_error("need at least one path");
  rule.validate_for(mu);
  std::vector<double> index(paths, -1.0);
  parallel_for(paths, threads, [&](unsigned, std::size_t i) {
    const PrngStream stream = rng.substream(i);
    const auto path = SamplePath::streaming(mu, stream.substream(0));
    PrngStream aux = stream.substream(1);
    const StopOutcome o = evaluate(rule, path, aux, horizon);
    if (o.stopped) index[i] = static_cast<double>(o.index);
  });
  std::vector<double> stopped;
  for (double v : index) {
    if (v >= 0.0) stopped.push_back(v);
  }
  if (stopped.empty()) throw budget_error("expectation_estimate: every path was censored at horizon " +
                                          std::to_string(horizon));
  CompensatedSum sum;
  for (double v : stopped) sum += v;
  const double mean = sum.value() / static_cast<double>(stopped.size());
  CompensatedSum sq;
  for (double v : stopped) sq += (v - mean) * (v - mean);
  Estimate e;
  e.value = mean;
  e.stderr = stopped.size() > 1
                 ? std::sqrt(sq.value() / static_cast<double>(stopped.size() - 1) / static_cast<double>(stopped.size()))
                 : 0.0;
  e.samples = paths;
  e.censored_mass = static_cast<double>(paths - stopped.size()) / static_cast<double>(paths);
  e.lower_bound = e.censored_mass > 0.0;
  return e;
}

// ---- JSON ----

namespace {

Measure atoms_from_json(const nlohmann::json& j, const Group& group) {
  const nlohmann::json& list = j.is_object() ? j.at("atoms") : j;
  if (!list.is_array()) throw usage_error("expected a list of [element, weight] atoms");
  std::vector<std::pair<std::string, double>> atoms;
  for (const auto& a : list) {
    if (!a.is_array() || a.size() != 2) throw usage_error("atoms must be [element, weight] pairs");
    atoms.emplace_back(a[0].get<std::string>(), a[1].get<double>());
  }
  return Measure::from_text(group, atoms);
}

std::vector<Element> elements_from_json(const nlohmann::json& j, const Group& group) {
  if (!j.is_array()) throw usage_error("expected a list of elements");
  std::vector<Element> out;
  for (const auto& e : j) out.push_back(decode(group, e.get<std::string>()));
  return out;
}

}  // namespace

StoppingRule build_stopping_rule(const nlohmann::json& spec, const Group& group, const std::optional<Measure>& base) {
  try {
    if (!spec.is_object() || !spec.contains("kind")) throw usage_error("stopping rule spec needs a \"kind\"");
    const std::string kind = spec.at("kind").get<std::string>();
    if (kind == "constant") return StoppingRule::constant(spec.at("k").get<int>());
    if (kind == "first_increment_in") {
      return StoppingRule::first_increment_in(group, elements_from_json(spec.at("set"), group));
    }
    if (kind == "hitting_subset") return StoppingRule::hitting_subset(group, elements_from_json(spec.at("set"), group));
    if (kind == "hitting_subgroup") {
      return StoppingRule::hitting_subgroup(group, spec.at("modulus").get<int>(),
                                            spec.at("coefficients").get<std::vector<int>>());
    }
    if (kind == "randomized_horizon") {
      std::vector<std::pair<int, double>> theta;
      for (const auto& t : spec.at("theta")) {
        if (!t.is_array() || t.size() != 2) throw usage_error("theta entries are [n, probability] pairs");
        theta.emplace_back(t[0].get<int>(), t[1].get<double>());
      }
      return StoppingRule::randomized_horizon(std::move(theta));
    }
    if (kind == "willis") {
      const Measure beta = atoms_from_json(spec.at("beta"), group);
      if (spec.contains("alpha")) return StoppingRule::willis(atoms_from_json(spec.at("alpha"), group), beta);
      if (!base) throw usage_error("willis rule without \"alpha\" needs the walk's measure");
      Measure::Atoms alpha;
      for (const auto* atom : canonical_atoms(base->atoms())) {
        const double rest = atom->second - beta.weight(atom->first);
        if (rest < -1e-15) {
          throw usage_error("willis: beta exceeds mu at " + encode(group, atom->first));
        }
        if (rest > 0.0) alpha.emplace(atom->first, rest);
      }
      for (const auto& [g, w] : beta.atoms()) {
        if (base->weight(g) == 0.0) throw usage_error("willis: beta exceeds mu at " + encode(group, g));
      }
      return StoppingRule::willis(Measure(group, std::move(alpha)), beta);
    }
    if (kind == "compose") {
      std::vector<nlohmann::json> parts;
      if (spec.contains("rules")) {
        for (const auto& r : spec.at("rules")) parts.push_back(r);
      } else {
        parts = {spec.at("first"), spec.at("second")};
      }
      if (parts.size() < 2) throw usage_error("compose needs at least two rules");
      StoppingRule out = build_stopping_rule(parts.back(), group, base);
      for (std::size_t i = parts.size() - 1; i-- > 0;) {
        out = StoppingRule::compose(build_stopping_rule(parts[i], group, base), out);
      }
      return out;
    }
    throw usage_error("unknown stopping rule kind \"" + kind + "\"");
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("malformed stopping rule spec: ") + e.what());
  }
}

}  // namespace stopwalk
