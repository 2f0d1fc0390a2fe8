#include <doctest.h>

#include <cmath>
#include <map>

#include "stopwalk/measure.hpp"

using namespace stopwalk;

namespace {

const Group Z = Group::lattice(1);
const Group F2 = Group::free(2);

Measure srw(const Group& g) { return Measure::uniform(g, g.generators()); }

// Oracle: enumerate every increment sequence of length n.
std::map<std::string, double> enumerate_power(const Measure& mu, int n) {
  const auto atoms = mu.sorted_atoms();
  std::map<std::string, double> out;
  std::vector<std::size_t> idx(n, 0);
  while (true) {
    Element g = mu.group().identity();
    double w = 1.0;
    for (int i = 0; i < n; ++i) {
      g = multiply(mu.group(), g, atoms[idx[i]].first);
      w *= atoms[idx[i]].second;
    }
    out[encode(mu.group(), g)] += w;
    int pos = n - 1;
    while (pos >= 0 && ++idx[pos] == atoms.size()) idx[pos--] = 0;
    if (pos < 0) break;
  }
  return out;
}

void check_matches(const Measure& mu, const std::map<std::string, double>& expected, double tol = 1e-15) {
  CHECK(mu.size() == expected.size());
  for (const auto& [text, w] : expected) {
    CAPTURE(text);
    CHECK(std::abs(mu.weight(decode(mu.group(), text)) - w) <= tol);
  }
}

}  // namespace

TEST_CASE("measure construction invariants") {
  CHECK_THROWS_AS(Measure::from_text(Z, {{"1", -0.1}}), usage_error);
  CHECK_THROWS_AS(Measure::from_text(Z, {{"1", 0.7}, {"2", 0.7}}), usage_error);
  CHECK_THROWS_AS(Measure(Z, {{decode(Z, "1"), 0.5}}, 0.6), usage_error);
  const Measure half = Measure::from_text(Z, {{"1", 0.5}, {"2", 0.0}});
  CHECK(half.size() == 1);
  CHECK_FALSE(half.is_probability());
  CHECK(srw(F2).is_probability());
}

TEST_CASE("convolve: spec examples") {
  const Element a = decode(F2, "a"), b = decode(F2, "b");
  const Measure ab = convolve(Measure::dirac(F2, a), Measure::dirac(F2, b));
  CHECK(ab.size() == 1);
  CHECK(ab.weight(decode(F2, "ab")) == 1.0);

  check_matches(convolve(srw(Z), srw(Z)), enumerate_power(srw(Z), 2));
  check_matches(convolve(srw(Z), srw(Z)), {{"(-2)", 0.25}, {"(0)", 0.5}, {"(2)", 0.25}});

  const Measure left = Measure::from_text(Z, {{"-1", 0.5}});
  const Measure right = Measure::from_text(Z, {{"1", 0.5}});
  const Measure prod = convolve(left, right);
  check_matches(prod, {{"(0)", 0.25}});
  CHECK(prod.mass() == 0.25);
  CHECK_THROWS_AS(convolve(srw(Z), srw(F2)), usage_error);
}

TEST_CASE("convolution_power: spec examples") {
  auto [zero, r0] = convolution_power(srw(F2), 0, 100);
  CHECK(zero.size() == 1);
  CHECK(zero.weight(F2.identity()) == 1.0);

  auto [z4, r4] = convolution_power(srw(Z), 4, 1000);
  check_matches(z4, enumerate_power(srw(Z), 4));
  check_matches(z4, {{"(-4)", 1 / 16.0}, {"(-2)", 4 / 16.0}, {"(0)", 6 / 16.0}, {"(2)", 4 / 16.0}, {"(4)", 1 / 16.0}});
  CHECK(r4.dropped_mass == 0.0);

  auto [f2sq, rf] = convolution_power(srw(F2), 2, 1000);
  const auto expected = enumerate_power(srw(F2), 2);
  check_matches(f2sq, expected);
  CHECK(f2sq.weight(F2.identity()) == 0.25);
  int length_two = 0;
  for (const auto& [g, w] : f2sq.atoms()) {
    if (g.data().size() == 2) {
      ++length_two;
      CHECK(w == 1.0 / 16);
    }
  }
  CHECK(length_two == 12);
}

TEST_CASE("convolution_power truncation is reported and deterministic") {
  const Measure mu = srw(F2);
  auto [full, rfull] = convolution_power(mu, 5, 1'000'000);
  auto [cut, rcut] = convolution_power(mu, 5, 50);
  CHECK(cut.size() == 50);
  CHECK(rcut.support_size == 50);
  CHECK(rcut.dropped_mass > 0.0);
  CHECK(rcut.retained_mass + rcut.dropped_mass >= 1.0 - 1e-12);
  auto [again, ragain] = convolution_power(mu, 5, 50);
  CHECK(measure_to_json(again) == measure_to_json(cut));
  CHECK(rfull.dropped_mass == 0.0);
  CHECK(std::abs(full.mass() - 1.0) < 1e-12);
}

TEST_CASE("convolution_power without truncation equals iterated convolve") {
  for (const Measure& mu : {srw(Z), srw(F2), Measure::from_text(Z, {{"1", 0.75}, {"-1", 0.25}}),
                            srw(Group::lamplighter())}) {
    Measure iter = Measure::dirac(mu.group(), mu.group().identity());
    for (int n = 1; n <= 5; ++n) {
      iter = convolve(iter, mu);
      auto [power, report] = convolution_power(mu, n, 10'000'000);
      REQUIRE(power.size() == iter.size());
      for (const auto& [g, w] : iter.atoms()) REQUIRE(power.weight(g) == w);
    }
  }
}

TEST_CASE("convolution associativity and mass multiplicativity on random triples") {
  PrngStream rng(21, 0);
  const Group groups[] = {Z, F2, Group::lamplighter()};
  for (int trial = 0; trial < 40; ++trial) {
    const Group& group = groups[trial % 3];
    auto random_measure = [&]() {
      Measure::Atoms atoms;
      const auto& gens = group.generators();
      for (int i = 0; i < 3; ++i) {
        Element g = group.identity();
        for (int k = 0; k < 3; ++k) multiply_into(group, g, gens[rng.next_u64() % gens.size()]);
        atoms[g] += 0.05 + 0.25 * rng.uniform();
      }
      return Measure(group, atoms);
    };
    const Measure a = random_measure(), b = random_measure(), c = random_measure();
    const Measure left = convolve(convolve(a, b), c);
    const Measure right = convolve(a, convolve(b, c));
    CHECK(total_variation(left, right) < 1e-14);
    CHECK(std::abs(left.mass() - a.mass() * b.mass() * c.mass()) < 1e-14);
  }
}

TEST_CASE("entropy: spec examples") {
  CHECK(entropy(Measure::dirac(F2, decode(F2, "ab"))) == 0.0);
  CHECK(entropy(srw(F2)) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  const Measure dyadic = Measure::from_text(Z, {{"0", 0.5}, {"1", 0.25}, {"2", 0.125}, {"3", 0.125}});
  const double direct = -(0.5 * std::log(0.5) + 0.25 * std::log(0.25) + 2 * 0.125 * std::log(0.125));
  CHECK(std::abs(entropy(dyadic) - direct) < 1e-15);
  CHECK(std::abs(entropy(dyadic) - 1.75 * std::log(2.0)) < 1e-12);
  CHECK_THROWS_AS(entropy(Measure::from_text(Z, {{"1", 0.5}})), usage_error);
}

TEST_CASE("first_moment: spec examples") {
  const Gauge zgauge = Gauge::word_length(Z);
  CHECK(first_moment(Measure::dirac(Z, Z.identity()), zgauge) == 0.0);
  CHECK(first_moment(srw(Z), zgauge) == 1.0);
  Measure::Atoms geometric;
  for (int i = 1; i <= 30; ++i) geometric[decode(Z, std::to_string(2 - i))] = std::ldexp(1.0, -i);
  // Series sum_i |2 - i| 2^{-i} = 1/2 + 1/2.
  CHECK(std::abs(first_moment(Measure(Z, geometric), zgauge) - 1.0) < 1e-6);

  const Group ll = Group::lamplighter();
  CHECK_THROWS_AS(first_moment(Measure::dirac(ll, decode(ll, "{}|40")), Gauge::word_length(ll)), unreachable_error);
}

TEST_CASE("mix: spec examples") {
  const Measure mu = srw(Z);
  CHECK(total_variation(mix({{1.0, mu}}), mu) == 0.0);
  const Measure mixed = mix({{0.5, mu}, {0.5, convolve(mu, mu)}});
  check_matches(mixed, {{"(-2)", 1 / 8.0}, {"(-1)", 1 / 4.0}, {"(0)", 1 / 4.0}, {"(1)", 1 / 4.0}, {"(2)", 1 / 8.0}});
  const Measure two = mix({{0.5, Measure::dirac(F2, decode(F2, "a"))}, {0.5, Measure::dirac(F2, decode(F2, "b"))}});
  check_matches(two, {{"a", 0.5}, {"b", 0.5}});
  CHECK_THROWS_AS(mix({{0.5, mu}, {0.6, mu}}), usage_error);
  CHECK_THROWS_AS(mix({{0.5, mu}, {0.5, srw(F2)}}), usage_error);
}

TEST_CASE("decompose: spec examples") {
  auto [beta_all, alpha_none] = decompose(srw(Z), {decode(Z, "1"), decode(Z, "-1"), decode(Z, "5")});
  CHECK(beta_all.mass() == 1.0);
  CHECK(alpha_none.empty());

  auto [beta, alpha] = decompose(srw(Z), {decode(Z, "1")});
  check_matches(beta, {{"(1)", 0.5}});
  check_matches(alpha, {{"(-1)", 0.5}});

  auto [fb, fa] = decompose(srw(F2), {decode(F2, "a")});
  CHECK(fb.mass() == 0.25);
  CHECK(fa.mass() == 0.75);
  CHECK_THROWS_AS(decompose(srw(Z), {decode(Z, "3")}), usage_error);
}

TEST_CASE("sample: spec examples") {
  PrngStream rng(5, 0);
  const Element g = decode(F2, "aB");
  for (int i = 0; i < 10; ++i) CHECK(sample(Measure::dirac(F2, g), rng) == g);

  const Sampler sampler(srw(F2));
  PrngStream s1(99, 3), s2(99, 3);
  for (int i = 0; i < 100; ++i) CHECK(sampler(s1) == sampler(s2));

  const Sampler zs(srw(Z));
  PrngStream s3(7, 0);
  const int draws = 100'000;
  int plus = 0;
  for (int i = 0; i < draws; ++i) plus += zs(s3) == decode(Z, "1");
  const double sd = std::sqrt(draws * 0.25);
  CHECK(std::abs(plus - draws / 2.0) <= 4 * sd);
  CHECK_THROWS_AS(Sampler(Measure::from_text(Z, {{"1", 0.5}})), usage_error);
}

TEST_CASE("entropy subadditivity and pointwise convolution bound") {
  const std::vector<Measure> walks = {srw(Z), srw(F2), Measure::from_text(Z, {{"1", 0.75}, {"-1", 0.25}}),
                                      srw(Group::lamplighter()), srw(Group::lattice(2)), srw(Group::cyclic(5))};
  for (const auto& mu : walks) {
    CAPTURE(mu.group().name());
    std::vector<Measure> powers;
    std::vector<double> h;
    for (int n = 0; n <= 12; ++n) {
      auto [p, r] = convolution_power(mu, n, 5'000'000);
      REQUIRE(r.dropped_mass == 0.0);
      h.push_back(entropy(p));
      powers.push_back(std::move(p));
    }
    for (int n = 1; n <= 6; ++n) {
      for (int m = 1; m <= 6; ++m) CHECK(h[n + m] <= h[n] + h[m] + 1e-9);
    }
    for (int n = 0; n <= 6; ++n) {
      for (const auto& [g, wg] : powers[n].atoms()) {
        for (const auto& [s, ws] : mu.atoms()) {
          REQUIRE(powers[n + 1].weight(multiply(mu.group(), g, s)) >= wg * ws * (1 - 1e-12));
        }
      }
    }
  }
}

TEST_CASE("measure JSON round-trips bit-exactly") {
  auto [mu, r] = convolution_power(Measure::from_text(Z, {{"1", 0.7}, {"-1", 0.2}, {"3", 0.1}}), 6, 1000);
  const auto j = measure_to_json(mu);
  const Measure back = measure_from_json(nlohmann::json::parse(j.dump()));
  REQUIRE(back.size() == mu.size());
  for (const auto& [g, w] : mu.atoms()) REQUIRE(back.weight(g) == w);
  // atoms sorted by encoding
  const auto& atoms = j.at("atoms");
  for (std::size_t i = 1; i < atoms.size(); ++i) CHECK(atoms[i - 1][0].get<std::string>() < atoms[i][0].get<std::string>());

  const Group custom = F2.with_generators({decode(F2, "a"), decode(F2, "A"), decode(F2, "ab"), decode(F2, "BA")});
  CHECK(group_from_json(group_to_json(custom)) == custom);
  CHECK_THROWS_AS(group_from_json(nlohmann::json{{"kind", "torus"}}), usage_error);
  CHECK_THROWS_AS(measure_from_json(nlohmann::json{{"group", group_to_json(Z)}, {"atoms", {{"1", 0.5}}}, {"mass", 1.0}}),
                  usage_error);
}
