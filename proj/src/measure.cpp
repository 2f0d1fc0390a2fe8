#include "stopwalk/measure.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stopwalk/summation.hpp"

namespace stopwalk {

namespace {

double sum_weights(const Measure::Atoms& atoms) {
  CompensatedSum total;
  for (const auto* atom : canonical_atoms(atoms)) total += atom->second;
  return total.value();
}

void require_same_group(const Measure& a, const Measure& b) {
  if (!(a.group() == b.group())) {
    throw usage_error("measures live on different groups: " + a.group().name() + " vs " +
                      b.group().name());
  }
}

}  // namespace

std::vector<const std::pair<const Element, double>*> canonical_atoms(const Measure::Atoms& atoms) {
  std::vector<const std::pair<const Element, double>*> out;
  out.reserve(atoms.size());
  for (const auto& atom : atoms) out.push_back(&atom);
  std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
    const auto& x = a->first.data();
    const auto& y = b->first.data();
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
  });
  return out;
}

Measure::Measure(Group group, Atoms atoms) : group_(std::move(group)), atoms_(std::move(atoms)) {
  for (auto it = atoms_.begin(); it != atoms_.end();) {
    if (!(it->second >= 0.0) || !std::isfinite(it->second)) {
      throw usage_error("measure weights must be finite and nonnegative");
    }
    require_member(group_, it->first);
    if (it->second == 0.0) {
      atoms_.erase(it++);
    } else {
      ++it;
    }
  }
  mass_ = sum_weights(atoms_);
  if (mass_ > 1.0 + probability_tolerance) {
    throw usage_error("measure mass " + std::to_string(mass_) + " exceeds 1");
  }
}

Measure::Measure(Group group, Atoms atoms, double declared_mass) : Measure(std::move(group), std::move(atoms)) {
  if (std::abs(mass_ - declared_mass) > 1e-12) {
    throw usage_error("declared mass does not match the sum of the weights");
  }
}

Measure Measure::dirac(const Group& group, const Element& g) { return Measure(group, Atoms{{g, 1.0}}); }

Measure Measure::uniform(const Group& group, const std::vector<Element>& support) {
  if (support.empty()) throw usage_error("uniform measure needs a nonempty support");
  Atoms atoms;
  const double w = 1.0 / static_cast<double>(support.size());
  for (const auto& g : support) {
    if (!atoms.emplace(g, w).second) throw usage_error("uniform support has a repeated element");
  }
  return Measure(group, std::move(atoms));
}

Measure Measure::from_text(const Group& group, const std::vector<std::pair<std::string, double>>& atoms) {
  Atoms table;
  for (const auto& [text, w] : atoms) table[decode(group, text)] += w;
  return Measure(group, std::move(table));
}

bool Measure::is_probability() const { return std::abs(mass_ - 1.0) <= probability_tolerance; }

double Measure::weight(const Element& g) const {
  auto it = atoms_.find(g);
  return it == atoms_.end() ? 0.0 : it->second;
}

std::vector<std::pair<Element, double>> Measure::sorted_atoms() const {
  std::vector<std::pair<std::string, const std::pair<const Element, double>*>> keyed;
  keyed.reserve(atoms_.size());
  for (const auto& atom : atoms_) keyed.emplace_back(encode(group_, atom.first), &atom);
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<Element, double>> out;
  out.reserve(keyed.size());
  for (const auto& [key, atom] : keyed) out.emplace_back(atom->first, atom->second);
  return out;
}

Measure Measure::normalized() const {
  if (atoms_.empty()) throw usage_error("cannot normalize the zero measure");
  Atoms scaled = atoms_;
  for (auto& [g, w] : scaled) w /= mass_;
  return Measure(group_, std::move(scaled));
}

double truncate_atoms(const Group& group, Measure::Atoms& atoms, std::size_t support_cap) {
  // Dropped weights are summed in sorted order so the total does not depend
  // on hash-map layout.
  std::vector<double> dropped;
  auto total = [&dropped] {
    std::sort(dropped.begin(), dropped.end());
    CompensatedSum sum;
    for (double w : dropped) sum += w;
    return sum.value();
  };
  absl::erase_if(atoms, [&](const auto& atom) {
    if (atom.second < weight_floor) {
      dropped.push_back(atom.second);
      return true;
    }
    return false;
  });
  if (atoms.size() <= support_cap) return total();

  const std::size_t excess = atoms.size() - support_cap;
  std::vector<double> weights;
  weights.reserve(atoms.size());
  for (const auto& [g, w] : atoms) weights.push_back(w);
  std::nth_element(weights.begin(), weights.begin() + static_cast<std::ptrdiff_t>(excess - 1), weights.end());
  const double threshold = weights[excess - 1];

  // Everything strictly lighter than the threshold goes; ties at the
  // threshold are broken by encoding order.
  std::vector<std::pair<std::string, Element>> ties;
  std::size_t removed = 0;
  for (auto it = atoms.begin(); it != atoms.end();) {
    if (it->second < threshold) {
      dropped.push_back(it->second);
      atoms.erase(it++);
      ++removed;
    } else {
      if (it->second == threshold) ties.emplace_back(encode(group, it->first), it->first);
      ++it;
    }
  }
  std::sort(ties.begin(), ties.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; removed < excess && i < ties.size(); ++i, ++removed) {
    dropped.push_back(threshold);
    atoms.erase(ties[i].second);
  }
  return total();
}

Measure convolve(const Measure& mu, const Measure& nu) {
  require_same_group(mu, nu);
  const Group& group = mu.group();
  Measure::Atoms out;
  out.reserve(mu.size() * nu.size());
  const auto right = canonical_atoms(nu.atoms());
  for (const auto* left : canonical_atoms(mu.atoms())) {
    const auto& [g, wg] = *left;
    for (const auto* atom : right) {
      const auto& [h, wh] = *atom;
      Element gh = g;
      multiply_into(group, gh, h);
      out[std::move(gh)] += wg * wh;
    }
  }
  return Measure(group, std::move(out));
}

std::pair<Measure, TruncationReport> convolution_power(const Measure& mu, int n, std::size_t support_cap) {
  if (n < 0) throw usage_error("convolution power must be >= 0");
  if (support_cap < 1) throw usage_error("support cap must be >= 1");
  const Group& group = mu.group();
  Measure::Atoms current{{group.identity(), 1.0}};
  double dropped = 0.0;
  const auto factor = canonical_atoms(mu.atoms());
  for (int step = 0; step < n; ++step) {
    Measure::Atoms next;
    next.reserve(std::min(support_cap, current.size() * mu.size()));
    for (const auto* left : canonical_atoms(current)) {
      const auto& [g, wg] = *left;
      for (const auto* atom : factor) {
        const auto& [h, wh] = *atom;
        Element gh = g;
        multiply_into(group, gh, h);
        next[std::move(gh)] += wg * wh;
      }
    }
    // Dropped mass at this stage would have been multiplied by mass(mu)
    // in the remaining factors; reporting it unscaled keeps the bound valid.
    dropped += truncate_atoms(group, next, support_cap);
    current = std::move(next);
  }
  Measure result(group, std::move(current));
  TruncationReport report{result.mass(), dropped, result.size()};
  return {std::move(result), report};
}

double entropy(const Measure& mu) {
  if (!mu.is_probability()) {
    throw usage_error("entropy needs a probability measure (mass " + std::to_string(mu.mass()) +
                      "); normalize first");
  }
  CompensatedSum h;
  for (const auto* atom : canonical_atoms(mu.atoms())) h += -atom->second * std::log(atom->second);
  return std::max(0.0, h.value());
}

double first_moment(const Measure& mu, const Gauge& gauge) {
  CompensatedSum total;
  for (const auto* atom : canonical_atoms(mu.atoms())) total += gauge_value(gauge, mu.group(), atom->first) * atom->second;
  return total.value();
}

Measure mix(const std::vector<std::pair<double, Measure>>& components) {
  if (components.empty()) throw usage_error("mix needs at least one component");
  CompensatedSum weight_sum;
  for (const auto& [a, m] : components) {
    if (!(a >= 0.0)) throw usage_error("mixture weights must be nonnegative");
    require_same_group(components.front().second, m);
    weight_sum += a;
  }
  if (std::abs(weight_sum.value() - 1.0) > 1e-12) throw usage_error("mixture weights must sum to 1");
  Measure::Atoms out;
  for (const auto& [a, m] : components) {
    if (a == 0.0) continue;
    for (const auto& [g, w] : m.atoms()) out[g] += a * w;
  }
  return Measure(components.front().second.group(), std::move(out));
}

std::pair<Measure, Measure> decompose(const Measure& mu, const std::vector<Element>& subset) {
  absl::flat_hash_map<Element, bool> in_b;
  for (const auto& g : subset) {
    require_member(mu.group(), g);
    in_b[g] = true;
  }
  Measure::Atoms beta, alpha;
  for (const auto& [g, w] : mu.atoms()) (in_b.contains(g) ? beta : alpha).emplace(g, w);
  if (beta.empty()) throw usage_error("decompose: mu(B) = 0");
  return {Measure(mu.group(), std::move(beta)), Measure(mu.group(), std::move(alpha))};
}

double total_variation(const Measure& mu, const Measure& nu) {
  require_same_group(mu, nu);
  CompensatedSum total;
  for (const auto* atom : canonical_atoms(mu.atoms())) total += std::abs(atom->second - nu.weight(atom->first));
  for (const auto* atom : canonical_atoms(nu.atoms())) {
    if (!mu.atoms().contains(atom->first)) total += atom->second;
  }
  return 0.5 * total.value();
}

Sampler::Sampler(const Measure& mu) : group_(mu.group()) {
  if (!mu.is_probability()) throw usage_error("sampling needs a probability measure");
  CompensatedSum running;
  for (auto& [g, w] : mu.sorted_atoms()) {
    running += w;
    atoms_.push_back(std::move(g));
    cumulative_.push_back(running.value());
  }
}

const Element& Sampler::operator()(PrngStream& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  const auto index = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), atoms_.size() - 1);
  return atoms_[index];
}

Element sample(const Measure& mu, PrngStream& rng) { return Sampler(mu)(rng); }

nlohmann::json group_to_json(const Group& group) {
  nlohmann::json j;
  switch (group.kind()) {
    case GroupKind::lattice:
      j = {{"kind", "Zd"}, {"d", group.parameter()}};
      break;
    case GroupKind::free:
      j = {{"kind", "free"}, {"rank", group.parameter()}};
      break;
    case GroupKind::lamplighter:
      j = {{"kind", "lamplighter"}};
      break;
    case GroupKind::cyclic:
      j = {{"kind", "cyclic"}, {"order", group.parameter()}};
      break;
  }
  if (!group.has_standard_generators()) {
    auto gens = nlohmann::json::array();
    for (const auto& g : group.generators()) gens.push_back(encode(group, g));
    j["generators"] = gens;
  }
  return j;
}

Group group_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw usage_error("group: expected an object with a \"kind\" field");
  const std::string kind = j.at("kind").get<std::string>();
  auto int_field = [&](const char* name) {
    if (!j.contains(name) || !j.at(name).is_number_integer()) {
      throw usage_error(std::string("group.") + name + ": expected an integer");
    }
    return j.at(name).get<int>();
  };
  Group group = Group::lamplighter();
  if (kind == "Zd" || kind == "lattice") {
    group = Group::lattice(int_field("d"));
  } else if (kind == "free" || kind == "Free") {
    group = Group::free(int_field("rank"));
  } else if (kind == "lamplighter" || kind == "Lamplighter") {
    group = Group::lamplighter();
  } else if (kind == "cyclic" || kind == "Cyclic") {
    group = Group::cyclic(int_field("order"));
  } else {
    throw usage_error("group.kind: unknown kind '" + kind + "'");
  }
  if (j.contains("generators")) {
    std::vector<Element> gens;
    for (const auto& s : j.at("generators")) gens.push_back(decode(group, s.get<std::string>()));
    group = group.with_generators(std::move(gens));
  }
  return group;
}

nlohmann::json measure_to_json(const Measure& mu) {
  auto atoms = nlohmann::json::array();
  for (const auto& [g, w] : mu.sorted_atoms()) atoms.push_back({encode(mu.group(), g), w});
  return {{"group", group_to_json(mu.group())}, {"mass", mu.mass()}, {"atoms", atoms}};
}

Measure measure_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("group") || !j.contains("atoms")) {
    throw usage_error("measure: expected {\"group\", \"atoms\"}");
  }
  const Group group = group_from_json(j.at("group"));
  Measure::Atoms atoms;
  for (const auto& atom : j.at("atoms")) {
    if (!atom.is_array() || atom.size() != 2) throw usage_error("measure.atoms: expected [element, weight] pairs");
    atoms[decode(group, atom[0].get<std::string>())] += atom[1].get<double>();
  }
  if (j.contains("mass")) return Measure(group, std::move(atoms), j.at("mass").get<double>());
  return Measure(group, std::move(atoms));
}

}  // namespace stopwalk
