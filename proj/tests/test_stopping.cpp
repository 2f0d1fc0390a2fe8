#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "stopwalk/stopping.hpp"

using namespace stopwalk;

namespace {

const Group Z = Group::lattice(1);
const Group F2 = Group::free(2);

Measure srw(const Group& g) { return Measure::uniform(g, g.generators()); }

SamplePath z_path(const std::vector<int>& steps) {
  std::vector<Element> inc;
  for (int s : steps) inc.push_back(decode(Z, "(" + std::to_string(s) + ")"));
  return SamplePath(Z, inc);
}

StopOutcome run(const StoppingRule& r, const SamplePath& p, std::size_t horizon, std::uint64_t aux_index = 0) {
  PrngStream aux(99, aux_index);
  return evaluate(r, p, aux, horizon);
}

const StoppingRule plus_one = StoppingRule::first_increment_in(Z, {decode(Z, "1")});

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("evaluate: basic rules") {
  const auto p = z_path({-1, -1, 1, 1, -1});
  auto c3 = run(StoppingRule::constant(3), p, 5);
  CHECK(c3.stopped);
  CHECK(c3.index == 3);
  CHECK(c3.position == decode(Z, "-1"));

  auto f = run(plus_one, p, 5);
  CHECK(f.stopped);
  CHECK(f.index == 3);

  auto censored = run(plus_one, z_path({-1, -1, -1}), 3);
  CHECK_FALSE(censored.stopped);
  CHECK(censored.index == 3);
  CHECK(censored.position == decode(Z, "-3"));

  CHECK_FALSE(run(StoppingRule::constant(4), p, 3).stopped);
}

TEST_CASE("evaluate: hitting 2Z always stops at 2") {
  const auto even = StoppingRule::hitting_subgroup(Z, 2, {1});
  CHECK(even.subgroup_index() == 2);
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto path = generate_path(srw(Z), 10, PrngStream(3, i));
    const auto o = run(even, path, 10);
    CHECK(o.stopped);
    CHECK(o.index == 2);
  }
}

TEST_CASE("evaluate: hitting_subgroup on other groups") {
  // Kernel of the letter-count parity on F2 (index 2) and of a -> 1, b -> 0 mod 3.
  CHECK(StoppingRule::hitting_subgroup(F2, 2, {1, 1}).subgroup_index() == 2);
  CHECK(StoppingRule::hitting_subgroup(F2, 6, {2, 4}).subgroup_index() == 3);
  CHECK(StoppingRule::hitting_subgroup(Group::lamplighter(), 2, {0, 1}).subgroup_index() == 2);
  CHECK_THROWS_AS(StoppingRule::hitting_subgroup(Group::lamplighter(), 3, {0, 1}), usage_error);
  CHECK_THROWS_AS(StoppingRule::hitting_subgroup(Group::cyclic(5), 3, {1}), usage_error);
  CHECK_THROWS_AS(StoppingRule::hitting_subgroup(F2, 2, {1}), usage_error);

  const auto r = StoppingRule::hitting_subgroup(F2, 3, {1, 0});
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto path = generate_path(srw(F2), 400, PrngStream(4, i));
    const auto o = run(r, path, 400);
    REQUIRE(o.stopped);
    // Oracle: the exponent sum of a in x_s.
    long a_sum = 0;
    for (std::int32_t letter : o.position.data()) a_sum += std::abs(letter) == 1 ? (letter > 0 ? 1 : -1) : 0;
    CHECK(a_sum % 3 == 0);
    for (std::size_t s = 1; s < o.index; ++s) {
      long partial = 0;
      for (std::int32_t letter : path.position(s).data()) partial += std::abs(letter) == 1 ? (letter > 0 ? 1 : -1) : 0;
      CHECK(partial % 3 != 0);
    }
  }
}

TEST_CASE("evaluate: hitting_subset tracks the position") {
  const auto r = StoppingRule::hitting_subset(Z, {decode(Z, "2"), decode(Z, "-3")});
  const auto o = run(r, z_path({1, -1, -1, 1, 1, 1, -1}), 7);
  CHECK(o.stopped);
  CHECK(o.index == 6);
  CHECK(o.position == decode(Z, "2"));
  // The identity itself only counts at s >= 1.
  const auto back = StoppingRule::hitting_subset(Z, {Z.identity()});
  CHECK(run(back, z_path({1, -1}), 2).index == 2);
}

TEST_CASE("randomized horizon frequencies") {
  const auto r = StoppingRule::randomized_horizon({{1, 0.5}, {2, 0.5}});
  CHECK_FALSE(r.deterministic());
  const auto path = z_path({1, 1});
  const int n = 100000;
  int ones = 0;
  PrngStream aux(5, 0);
  for (int i = 0; i < n; ++i) {
    const auto o = evaluate(r, path, aux, 2);
    REQUIRE(o.stopped);
    ones += o.index == 1;
  }
  const double sigma = std::sqrt(0.25 / n);
  CHECK(std::abs(double(ones) / n - 0.5) <= 4 * sigma);
  CHECK_THROWS_AS(StoppingRule::randomized_horizon({{0, 1.0}}), usage_error);
  CHECK_THROWS_AS(StoppingRule::randomized_horizon({{1, 0.4}}), usage_error);
}

TEST_CASE("willis with singular alpha, beta is first_increment_in(supp beta)") {
  const Measure mu = srw(F2);
  const auto [beta, alpha] = decompose(mu, {decode(F2, "a"), decode(F2, "b")});
  const auto w = StoppingRule::willis(alpha, beta);
  CHECK(w.deterministic());
  const auto f = StoppingRule::first_increment_in(F2, {decode(F2, "a"), decode(F2, "b")});
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto path = generate_path(mu, 100, PrngStream(6, i));
    const auto a = run(w, path, 100, i);
    const auto b = run(f, path, 100, i + 1000);
    CHECK(a.stopped == b.stopped);
    CHECK(a.index == b.index);
  }
}

TEST_CASE("willis thinning: alpha = beta = mu/2 gives a geometric(1/2) time") {
  const Measure mu = srw(Z);
  const Measure half = Measure::from_text(Z, {{"(1)", 0.25}, {"(-1)", 0.25}});
  const auto w = StoppingRule::willis(half, half);
  CHECK_FALSE(w.deterministic());
  const auto e = expectation_estimate(w, mu, 20000, 200, PrngStream(7, 0));
  CHECK(std::abs(e.value - 2.0) <= 3 * e.stderr);
}

TEST_CASE("iterate") {
  const auto path = generate_path(srw(F2), 50, PrngStream(8, 0));
  const auto c = iterate(StoppingRule::constant(3), path, PrngStream(8, 1), 5, 50);
  REQUIRE(c.size() == 5);
  for (std::size_t m = 0; m < 5; ++m) {
    CHECK(c[m].index == 3 * (m + 1));
    CHECK(c[m].position == path.position(3 * (m + 1)));
  }

  const auto f = iterate(plus_one, z_path({-1, 1, 1, -1, 1}), PrngStream(8, 2), 3, 5);
  REQUIRE(f.size() == 3);
  CHECK(f[0].index == 2);
  CHECK(f[1].index == 3);
  CHECK(f[2].index == 5);
  CHECK(f[2].position == decode(Z, "1"));

  const auto cut = iterate(plus_one, z_path({-1, 1, -1, -1}), PrngStream(8, 3), 3, 4);
  REQUIRE(cut.size() == 2);
  CHECK(cut[0].stopped);
  CHECK_FALSE(cut[1].stopped);
  CHECK(cut[1].index == 4);
}

TEST_CASE("iterate: increments are identically distributed and E(tau_n) = n E(tau)") {
  const Measure mu = srw(F2);
  const auto rule = StoppingRule::first_increment_in(F2, {decode(F2, "a")});
  const std::size_t paths = 3000;
  std::vector<std::vector<double>> gaps(4);
  std::vector<double> tau4;
  for (std::size_t i = 0; i < paths; ++i) {
    const auto path = SamplePath::streaming(mu, PrngStream(9, i));
    const auto out = iterate(rule, path, PrngStream(10, i), 4, 100000);
    REQUIRE(out.size() == 4);
    for (std::size_t m = 0; m < 4; ++m) {
      gaps[m].push_back(double(out[m].index) - (m ? double(out[m - 1].index) : 0.0));
    }
    tau4.push_back(double(out[3].index));
  }
  // 1% two-sample KS critical value.
  const double critical = 1.628 * std::sqrt(2.0 / paths);
  for (std::size_t m = 1; m < 4; ++m) CHECK(ks_statistic(gaps[0], gaps[m]) < critical);

  double mean = 0.0, sq = 0.0;
  for (double t : tau4) mean += t;
  mean /= paths;
  for (double t : tau4) sq += (t - mean) * (t - mean);
  const double se = std::sqrt(sq / (paths - 1) / paths);
  CHECK(std::abs(mean - 4 * 4.0) <= 3 * se);
  // Var(tau_4 / 4) = Var(tau) / 4 with Var(tau) = (1 - p) / p^2 = 12.
  const double var = sq / (paths - 1) / 16;
  CHECK(var == doctest::Approx(12.0 / 4).epsilon(0.15));
}

TEST_CASE("expectation estimates") {
  const auto c = expectation_estimate(StoppingRule::constant(5), srw(Z), 100, 10, PrngStream(11, 0));
  CHECK(c.value == 5.0);
  CHECK(c.stderr == 0.0);
  CHECK(c.censored_mass == 0.0);

  const auto a = expectation_estimate(StoppingRule::first_increment_in(F2, {decode(F2, "a")}), srw(F2), 20000,
                                      1000, PrngStream(11, 1));
  CHECK(std::abs(a.value - 4.0) <= 3 * a.stderr);

  const auto two = expectation_estimate(StoppingRule::hitting_subgroup(Z, 2, {1}), srw(Z), 500, 10, PrngStream(11, 2));
  CHECK(two.value == 2.0);

  const auto short_h = expectation_estimate(plus_one, srw(Z), 2000, 2, PrngStream(11, 3));
  CHECK(short_h.lower_bound);
  CHECK(short_h.censored_mass == doctest::Approx(0.25).epsilon(0.2));

  const Measure minus = Measure::dirac(Z, decode(Z, "-1"));
  CHECK_THROWS_AS(expectation_estimate(plus_one, minus, 10, 5, PrngStream(1, 0)), usage_error);
  CHECK_THROWS_AS(expectation_estimate(StoppingRule::hitting_subset(Z, {decode(Z, "5")}), minus, 10, 5,
                                       PrngStream(1, 0)),
                  budget_error);
}

TEST_CASE("compose") {
  const auto c5 = compose(StoppingRule::constant(2), StoppingRule::constant(3));
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto path = generate_path(srw(F2), 10, PrngStream(12, i));
    CHECK(run(c5, path, 10).index == 5);
  }
  const auto cf = compose(StoppingRule::constant(1), plus_one);
  CHECK(run(cf, z_path({1, -1, 1}), 3).index == 3);
  CHECK(run(cf, z_path({-1, 1, 1}), 3).index == 2);

  // Randomized second rule is drawn when the first one stops.
  const auto cr = compose(plus_one, StoppingRule::randomized_horizon({{1, 0.5}, {3, 0.5}}));
  std::map<std::size_t, int> counts;
  PrngStream aux(13, 0);
  for (int i = 0; i < 4000; ++i) ++counts[evaluate(cr, z_path({-1, 1, 1, 1, 1}), aux, 5).index];
  CHECK(counts.size() == 2);
  CHECK(std::abs(counts[3] / 4000.0 - 0.5) <= 4 * std::sqrt(0.25 / 4000));
  CHECK(counts[5] + counts[3] == 4000);
}

TEST_CASE("compose: expectations add") {
  const Measure mu = srw(F2);
  const std::vector<StoppingRule> rules = {
      StoppingRule::constant(2),
      StoppingRule::first_increment_in(F2, {decode(F2, "a")}),
      StoppingRule::hitting_subgroup(F2, 2, {1, 1}),
      StoppingRule::randomized_horizon({{1, 0.3}, {4, 0.7}}),
  };
  for (std::size_t i = 0; i < rules.size(); ++i) {
    for (std::size_t j = 0; j < rules.size(); ++j) {
      const auto e1 = expectation_estimate(rules[i], mu, 4000, 5000, PrngStream(14, 3 * i));
      const auto e2 = expectation_estimate(rules[j], mu, 4000, 5000, PrngStream(14, 3 * j + 1));
      const auto e = expectation_estimate(compose(rules[i], rules[j]), mu, 4000, 5000, PrngStream(14, 100 + 10 * i + j));
      CAPTURE(i);
      CAPTURE(j);
      CHECK(std::abs(e.value - e1.value - e2.value) <= 3 * std::sqrt(e.stderr * e.stderr + e1.stderr * e1.stderr +
                                                                      e2.stderr * e2.stderr) + 1e-12);
    }
  }
}

TEST_CASE("prefix measurability: splicing a new suffix keeps the stop index") {
  const Measure mu = srw(F2);
  const std::vector<StoppingRule> rules = {
      StoppingRule::first_increment_in(F2, {decode(F2, "a")}),
      StoppingRule::hitting_subset(F2, {decode(F2, "ab"), decode(F2, "B")}),
      StoppingRule::hitting_subgroup(F2, 3, {1, 2}),
      compose(StoppingRule::constant(2), StoppingRule::first_increment_in(F2, {decode(F2, "b")})),
  };
  const Sampler sampler(mu);
  for (const auto& rule : rules) {
    for (std::uint64_t i = 0; i < 100; ++i) {
      const auto path = generate_path(mu, 300, PrngStream(15, i));
      const auto o = run(rule, path, 300, i);
      if (!o.stopped) continue;
      std::vector<Element> spliced;
      for (std::size_t s = 1; s <= o.index; ++s) spliced.push_back(path.increment(s));
      PrngStream fresh(16, i);
      while (spliced.size() < 300) spliced.push_back(sampler(fresh));
      const auto again = run(rule, SamplePath(F2, spliced), 300, i);
      CHECK(again.stopped);
      CHECK(again.index == o.index);
    }
  }
}

TEST_CASE("rule specs from JSON") {
  using nlohmann::json;
  const Measure mu = srw(F2);
  const json specs = json::parse(R"([
    {"kind": "constant", "k": 3},
    {"kind": "first_increment_in", "set": ["a"]},
    {"kind": "hitting_subgroup", "modulus": 2, "coefficients": [1, 1]},
    {"kind": "hitting_subset", "set": ["ab", "B"]},
    {"kind": "randomized_horizon", "theta": [[1, 0.5], [2, 0.5]]},
    {"kind": "willis", "beta": [["a", 0.125]]},
    {"kind": "compose", "rules": [{"kind": "constant", "k": 1}, {"kind": "constant", "k": 2}, {"kind": "constant", "k": 4}]}
  ])");
  for (const auto& spec : specs) {
    const auto rule = build_stopping_rule(spec, F2, mu);
    rule.validate_for(mu);
    const auto again = build_stopping_rule(rule.to_json(), F2, mu);
    CHECK(again.name() == rule.name());
  }
  const auto w = build_stopping_rule(specs[5], F2, mu);
  CHECK(w.name() == "willis(beta={a:0.125})");
  const auto chain = build_stopping_rule(specs[6], F2, mu);
  CHECK(run(chain, generate_path(mu, 10, PrngStream(1, 0)), 10).index == 7);

  CHECK_THROWS_AS(build_stopping_rule(json::parse(R"({"kind": "willis", "beta": [["a", 0.5]]})"), F2, mu),
                  usage_error);
  CHECK_THROWS_AS(build_stopping_rule(json::parse(R"({"kind": "nope"})"), F2, mu), usage_error);
  CHECK_THROWS_AS(build_stopping_rule(json::parse(R"({"kind": "constant"})"), F2, mu), usage_error);
  CHECK_THROWS_AS(build_stopping_rule(json::parse(R"({"kind": "constant", "k": 0})"), F2, mu), usage_error);
  CHECK_THROWS_AS(build_stopping_rule(json::parse(R"({"kind": "willis", "beta": [["a", 0.1]]})"), F2), usage_error);

  // alpha + beta must equal the walk's measure.
  const auto bad = StoppingRule::willis(Measure::from_text(F2, {{"A", 0.5}}), Measure::from_text(F2, {{"a", 0.5}}));
  CHECK_THROWS_AS(bad.validate_for(mu), usage_error);
}
