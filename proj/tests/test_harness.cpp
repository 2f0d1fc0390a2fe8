#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "stopwalk/experiment.hpp"

using namespace stopwalk;
using nlohmann::json;

namespace {

json base(const std::string& experiment, json group, json measure) {
  return {{"experiment", experiment}, {"group", std::move(group)}, {"measure", std::move(measure)}, {"seed", 11}};
}

const json Z = {{"kind", "lattice"}, {"d", 1}};
const json F2 = {{"kind", "free"}, {"rank", 2}};
const json Z2 = {{"kind", "cyclic"}, {"order", 2}};
const json biased = {{"atoms", {{"(1)", 0.75}, {"(-1)", 0.25}}}};
const json delta1 = {{"atoms", {{"(1)", 1.0}}}};

json rule_constant(int k) { return {{"kind", "constant"}, {"k", k}}; }
json rule_first(const std::string& letter) { return {{"kind", "first_increment_in"}, {"set", {letter}}}; }

std::string usage_message(const json& j) {
  try {
    (void)run_experiment(parse_config(j));
  } catch (const usage_error& e) {
    return e.what();
  }
  return "";
}

// Recomputes the verdict from the CSV row alone.
bool verdict_from_csv(const std::string& row) {
  std::vector<std::string> f;
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  REQUIRE(f.size() == 18);
  const Comparison c = f[17] == "upper_bound" ? Comparison::upper_bound : Comparison::two_sided;
  return comparison_passes(c, std::stod(f[7]), std::stod(f[8]), std::stod(f[9]), std::stod(f[10]), std::stod(f[15]),
                           std::stod(f[16]));
}

}  // namespace

TEST_CASE("config: measure grammar") {
  const Group z = Group::lattice(1);
  const Measure srw = parse_measure_spec("srw", z);
  CHECK(srw.weight(decode(z, "(1)")) == doctest::Approx(0.5));
  const Measure sq = parse_measure_spec({{"power", 2}, {"of", "srw"}}, z);
  CHECK(sq.weight(z.identity()) == doctest::Approx(0.5));
  CHECK(sq.weight(decode(z, "(2)")) == doctest::Approx(0.25));
  const Measure m = parse_measure_spec({{"mix", {{0.5, "srw"}, {0.5, {{"power", 2}, {"of", "srw"}}}}}}, z);
  CHECK(m.weight(decode(z, "(1)")) == doctest::Approx(0.25));
  CHECK(m.weight(z.identity()) == doctest::Approx(0.25));
  CHECK(m.mass() == doctest::Approx(1.0));
  CHECK_THROWS_AS(parse_measure_spec({{"atoms", {{"(1)", 0.5}}}}, z), usage_error);
  CHECK_THROWS_AS(parse_measure_spec("lazy", z), usage_error);
}

TEST_CASE("config: errors name the offending field") {
  json j = base("kac", Z, "srw");
  j.erase("group");
  CHECK(usage_message(j).find("'group'") != std::string::npos);

  j = base("kac", Z, "srw");
  j["paths"] = -5;
  CHECK(usage_message(j).find("'paths'") != std::string::npos);

  j = base("kac", Z, "srw");
  j["tolerance"] = 1.5;
  CHECK(usage_message(j).find("'tolerance'") != std::string::npos);

  j = base("kac", Z, "srw");
  j["rule"] = {{"kind", "nonsense"}};
  CHECK(usage_message(j).find("'rule'") != std::string::npos);

  j = base("tea", Z, "srw");
  CHECK(usage_message(j).find("'experiment'") != std::string::npos);
}

TEST_CASE("comparison rule") {
  CHECK(comparison_passes(Comparison::two_sided, 1.04, 0, 1.0, 0, 0.05, 3));
  CHECK_FALSE(comparison_passes(Comparison::two_sided, 1.06, 0, 1.0, 0, 0.05, 3));
  // sigma term wins when it is looser
  CHECK(comparison_passes(Comparison::two_sided, 1.14, 0.04, 1.0, 0.03, 0.05, 3));
  CHECK(comparison_passes(Comparison::two_sided, 0.0, 0, 0.0, 0, 0.05, 3));
  CHECK(comparison_passes(Comparison::upper_bound, 0.5, 0, 1.0, 0, 0.05, 3));
  CHECK_FALSE(comparison_passes(Comparison::upper_bound, 1.1, 0, 1.0, 0, 0.05, 3));
}

TEST_CASE("entropy scaling: Z2 with delta_1 and constant(5)") {
  json j = base("entropy_scaling", Z2, {{"atoms", {{"1 mod 2", 1.0}}}});
  j["rule"] = rule_constant(5);
  j["paths"] = 100;
  const auto r = run_experiment(parse_config(j));
  CHECK(r.verdict == Verdict::pass);
  CHECK(std::abs(r.left.value) <= 1e-12);
  CHECK(std::abs(r.right.value) <= 1e-12);
}

TEST_CASE("entropy scaling: constant(2) on F2") {
  json j = base("entropy_scaling", F2, "srw");
  j["rule"] = rule_constant(2);
  j["n_max"] = 8;
  j["n_max_transformed"] = 4;
  j["paths"] = 100;
  const auto r = run_experiment(parse_config(j));
  CHECK(r.verdict == Verdict::pass);
  CHECK(r.right.stderr > 0.0);
  CHECK(r.ratio == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("entropy scaling: blown support cap is inconclusive, not a failure") {
  json j = base("entropy_scaling", F2, "srw");
  j["rule"] = rule_constant(2);
  j["n_max"] = 8;
  j["n_max_transformed"] = 4;
  j["paths"] = 100;
  j["support_cap"] = 50;
  const auto r = run_experiment(parse_config(j));
  CHECK(r.verdict == Verdict::inconclusive);
  CHECK_FALSE(r.notes.empty());
}

TEST_CASE("entropy scaling: unresolved transform mass is inconclusive") {
  json j = base("entropy_scaling", Z, "srw");
  j["rule"] = rule_first("(1)");
  j["horizon"] = 5;
  j["paths"] = 1000;
  const auto r = run_experiment(parse_config(j));
  CHECK(r.verdict == Verdict::inconclusive);
  CHECK(r.unresolved_mass == doctest::Approx(1.0 / 32));
}

TEST_CASE("escape scaling: delta_1 on Z is exact") {
  json j = base("escape_scaling", Z, delta1);
  j["rule"] = rule_constant(3);
  j["n"] = 50;
  j["paths"] = 200;
  const auto r = run_experiment(parse_config(j));
  CHECK(r.verdict == Verdict::pass);
  CHECK(r.left.value == 3.0);
  CHECK(r.right.value == 3.0);
  CHECK(r.left.stderr == 0.0);
}

TEST_CASE("escape scaling: biased Z with first_increment_in(+1)") {
  json j = base("escape_scaling", Z, biased);
  j["rule"] = rule_first("(1)");
  j["n"] = 200;
  j["paths"] = 20000;
  j["threads"] = 4;
  j["tolerance"] = 0.02;
  const auto r = run_experiment(parse_config(j));
  CHECK(r.verdict == Verdict::pass);
  CHECK(r.left.value == doctest::Approx(2.0 / 3).epsilon(0.02));
  CHECK(r.right.value == doctest::Approx(2.0 / 3).epsilon(0.02));
}

TEST_CASE("entropy bound") {
  SUBCASE("SRW on Z, first_increment_in(+1): equality case") {
    json j = base("entropy_bound", Z, "srw");
    j["rule"] = rule_first("(1)");
    j["horizon"] = 60;
    const auto r = run_experiment(parse_config(j));
    CHECK(r.verdict == Verdict::pass);
    CHECK(r.comparison == Comparison::upper_bound);
    CHECK(r.left.value == doctest::Approx(2 * std::log(2.0)).epsilon(1e-9));
    CHECK(r.right.value == doctest::Approx(2 * std::log(2.0)).epsilon(1e-9));
  }
  SUBCASE("SRW on F2, constant(3)") {
    json j = base("entropy_bound", F2, "srw");
    j["rule"] = rule_constant(3);
    j["horizon"] = 5;
    const auto r = run_experiment(parse_config(j));
    CHECK(r.verdict == Verdict::pass);
    CHECK(r.right.value == doctest::Approx(3 * std::log(4.0)));
    CHECK(r.left.value < r.right.value);
  }
  SUBCASE("randomized rules are out of scope") {
    json j = base("entropy_bound", Z, "srw");
    j["rule"] = {{"kind", "randomized_horizon"}, {"theta", {{1, 0.5}, {2, 0.5}}}};
    CHECK(usage_message(j).find("non-randomized") != std::string::npos);
  }
}

TEST_CASE("green entropy") {
  SUBCASE("delta_1 on Z: 0 = 0") {
    json j = base("green_entropy", Z, delta1);
    j["gauge"] = {{"kind", "green"}, {"radius", 3}, {"horizon", 50}, {"paths", 200}};
    j["n"] = 100;
    j["paths"] = 200;
    j["n_max"] = 8;
    const auto r = run_experiment(parse_config(j));
    CHECK(r.verdict == Verdict::pass);
    CHECK(r.left.value == 0.0);
    CHECK(std::abs(r.right.value) <= 1e-12);
  }
  SUBCASE("biased Z: Green speed 0, entropy estimate small but biased") {
    json j = base("green_entropy", Z, biased);
    j["gauge"] = {{"kind", "green"}, {"radius", 3}, {"horizon", 200}, {"paths", 20000}};
    j["n"] = 400;
    j["paths"] = 2000;
    j["n_max"] = 32;
    const auto r = run_experiment(parse_config(j));
    CHECK(r.verdict != Verdict::inconclusive);
    CHECK(r.left.value == 0.0);
    CHECK(r.right.value >= 0.0);
    CHECK(r.right.value < 1e-3);
  }
  SUBCASE("SRW on Z looks recurrent") {
    json j = base("green_entropy", Z, "srw");
    j["gauge"] = {{"kind", "green"}, {"radius", 3}, {"horizon", 200}, {"paths", 5000}};
    const auto r = run_experiment(parse_config(j));
    CHECK(r.verdict == Verdict::inconclusive);
  }
  SUBCASE("SRW on F2: Green speed near ln 3 / 2") {
    json j = base("green_entropy", F2, "srw");
    j["gauge"] = {{"kind", "green"}, {"radius", 3}, {"horizon", 200}, {"paths", 20000}};
    j["n"] = 400;
    j["paths"] = 2000;
    j["n_max"] = 10;
    j["threads"] = 4;
    const auto r = run_experiment(parse_config(j));
    CHECK(r.verdict == Verdict::pass);
    CHECK(r.left.value == doctest::Approx(0.5 * std::log(3.0)).epsilon(0.05));
  }
}

TEST_CASE("kac check") {
  SUBCASE("2Z under SRW: exactly 2") {
    json j = base("kac", Z, "srw");
    j["rule"] = {{"kind", "hitting_subgroup"}, {"modulus", 2}, {"coefficients", {1}}};
    j["paths"] = 1000;
    const auto r = run_experiment(parse_config(j));
    CHECK(r.verdict == Verdict::pass);
    CHECK(r.left.value == 2.0);
    CHECK(r.left.stderr == 0.0);
    CHECK(r.right.value == 2.0);
  }
  SUBCASE("2Z under uniform{-1,0,1}: 2 within 3 sigma") {
    json j = base("kac", Z, {{"uniform", {"(-1)", "(0)", "(1)"}}});
    j["rule"] = {{"kind", "hitting_subgroup"}, {"modulus", 2}, {"coefficients", {1}}};
    j["paths"] = 50000;
    const auto r = run_experiment(parse_config(j));
    CHECK(r.verdict == Verdict::pass);
    CHECK(std::abs(r.left.value - 2.0) <= 3 * r.left.stderr);
  }
  SUBCASE("whole group: index 1") {
    json j = base("kac", Z, "srw");
    j["rule"] = {{"kind", "hitting_subgroup"}, {"modulus", 1}, {"coefficients", {0}}};
    j["paths"] = 100;
    const auto r = run_experiment(parse_config(j));
    CHECK(r.verdict == Verdict::pass);
    CHECK(r.left.value == 1.0);
  }
  SUBCASE("other rules are rejected") {
    json j = base("kac", Z, "srw");
    j["rule"] = rule_first("(1)");
    CHECK(usage_message(j).find("subgroup") != std::string::npos);
  }
}

TEST_CASE("csv: verdict recomputable and bit-identical for a fixed seed") {
  json j = base("escape_scaling", Z, biased);
  j["rule"] = rule_first("(1)");
  j["n"] = 50;
  j["paths"] = 3000;
  const auto a = report_csv_row(run_experiment(parse_config(j)));
  j["threads"] = 3;
  const auto b = report_csv_row(run_experiment(parse_config(j)));
  CHECK(a == b);
  j["seed"] = 12;
  const auto c = report_csv_row(run_experiment(parse_config(j)));
  CHECK(a != c);
  for (const auto& row : {a, c}) {
    const bool pass = row.find(",PASS,") != std::string::npos;
    CHECK(verdict_from_csv(row) == pass);
  }
  CHECK(report_csv_header().rfind(
            "experiment,group,measure_id,rule,n,paths,seed,left,left_stderr,right,right_stderr,ratio,censored_mass,"
            "unresolved_mass,verdict",
            0) == 0);
}

#ifdef STOPWALK_CLI
namespace {

int cli(const std::string& args) {
  const int status = std::system((std::string(STOPWALK_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

std::string write_config(const std::string& name, const json& j) {
  const std::string path = "harness_" + name + ".json";
  std::ofstream(path) << j.dump();
  return path;
}

}  // namespace

TEST_CASE("cli: exit codes") {
  CHECK(cli("verify --config does_not_exist.json") == 64);
  CHECK(cli("") == 64);
  CHECK(cli("dance --config x.json") == 64);

  std::ofstream("harness_broken.json") << "{ not json";
  CHECK(cli("verify --config harness_broken.json") == 64);

  json pass = base("kac", Z, "srw");
  pass["rule"] = {{"kind", "hitting_subgroup"}, {"modulus", 2}, {"coefficients", {1}}};
  pass["paths"] = 100;
  CHECK(cli("verify --config " + write_config("pass", pass)) == 0);

  // E(tau) = 2 is right, but 50 paths cannot meet a 1e-6 tolerance
  json fail = pass;
  fail["measure"] = {{"uniform", {"(-1)", "(0)", "(1)"}}};
  fail["paths"] = 50;
  fail["tolerance"] = {{"relative", 1e-6}, {"sigma", 1e-6}};
  CHECK(cli("verify --config " + write_config("fail", fail)) == 1);

  json undecided = base("entropy_scaling", Z, "srw");
  undecided["rule"] = rule_first("(1)");
  undecided["horizon"] = 5;
  undecided["paths"] = 100;
  CHECK(cli("verify --config " + write_config("undecided", undecided)) == 2);
}

TEST_CASE("cli: verify writes the same CSV twice for the same seed") {
  json j = base("escape_scaling", Z, biased);
  j["rule"] = rule_first("(1)");
  j["n"] = 20;
  j["paths"] = 500;
  const std::string cfg = write_config("csv", j);
  REQUIRE(cli("verify --config " + cfg + " --seed 5 --threads 1 --out harness_a.csv") == 0);
  REQUIRE(cli("verify --config " + cfg + " --seed 5 --threads 4 --out harness_b.csv") == 0);
  auto slurp = [](const char* p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp("harness_a.csv") == slurp("harness_b.csv"));
  CHECK(slurp("harness_a.csv").find(",5,") != std::string::npos);
}

TEST_CASE("cli: transform prints measure JSON") {
  json j = base("entropy_bound", Z, "srw");
  j["rule"] = {{"kind", "willis"}, {"beta", json::array({json::array({"(1)", 0.5})})}};
  j["horizon"] = 40;
  const std::string cfg = write_config("willis", j);
  REQUIRE(std::system((std::string(STOPWALK_CLI) + " transform --config " + cfg + " > harness_t.json 2>/dev/null")
                          .c_str()) == 0);
  json out;
  std::ifstream("harness_t.json") >> out;
  CHECK(out.at("unresolved_mass").get<double>() <= 1e-8);
  CHECK(out.at("atoms").size() == 40);
}
#endif
