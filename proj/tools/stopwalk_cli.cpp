// Command-line runner for stopped random walk experiments.
//
//   stopwalk verify --config cfg.json [--seed N] [--out r.csv] [--threads N] [--tolerance X]
//   stopwalk entropy | escape | expectation | transform --config cfg.json ...
//
// Exit codes: 0 pass, 1 fail, 2 inconclusive, 64 usage error.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "stopwalk/experiment.hpp"
#include "stopwalk/transform.hpp"

namespace {

using namespace stopwalk;

constexpr int exit_pass = 0;
constexpr int exit_fail = 1;
constexpr int exit_inconclusive = 2;
constexpr int exit_usage = 64;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> threads;
  std::optional<double> tolerance;
};

ExperimentConfig load(const Options& o) {
  std::ifstream in(o.config_path);
  if (!in) throw usage_error("cannot open config '" + o.config_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw usage_error("config '" + o.config_path + "' is not valid JSON: " + e.what());
  }
  if (o.seed) j["seed"] = *o.seed;
  if (o.threads) j["threads"] = *o.threads;
  if (o.tolerance) {
    if (j.contains("tolerance") && j["tolerance"].is_object()) {
      j["tolerance"]["relative"] = *o.tolerance;
    } else {
      j["tolerance"] = *o.tolerance;
    }
  }
  return parse_config(j);
}

void emit(const Options& o, const std::string& header, const std::string& row) {
  if (o.out.empty()) return;
  std::ofstream out(o.out);
  if (!out) throw usage_error("cannot write '" + o.out + "'");
  out << header << '\n' << row << '\n';
}

int run_verify(const Options& o) {
  const ExperimentConfig c = load(o);
  const VerificationReport r = run_experiment(c);
  emit(o, report_csv_header(), report_csv_row(r));
  std::cout << report_summary(r) << '\n';
  switch (r.verdict) {
    case Verdict::pass:
      return exit_pass;
    case Verdict::fail:
      return exit_fail;
    default:
      return exit_inconclusive;
  }
}

int run_entropy(const Options& o) {
  const ExperimentConfig c = load(o);
  const EntropyProfile p = entropy_difference_estimate(c.measure, c.n_max, c.support_cap);
  std::cout << "n,entropy,difference\n";
  for (std::size_t n = 0; n < p.entropies.size(); ++n) {
    std::cout << n << ',' << format_double(p.entropies[n]) << ','
              << (n == 0 ? std::string() : format_double(p.differences[n - 1])) << '\n';
  }
  emit(o, estimate_csv_header(),
       estimate_csv_row("entropy_difference", c.group, c.measure_id, c.n_max, 0, p.estimate, c.seed));
  std::cout << "PASS entropy h=" << format_double(p.estimate.value) << " +- " << format_double(p.estimate.stderr)
            << '\n';
  return exit_pass;
}

int run_escape(const Options& o) {
  const ExperimentConfig c = load(o);
  const Estimate e = escape_rate_estimate(c.measure, Gauge::word_length(c.group), c.n, c.paths,
                                          PrngStream(c.seed, 0), c.threads);
  emit(o, estimate_csv_header(), estimate_csv_row("escape_rate", c.group, c.measure_id, c.n, c.paths, e, c.seed));
  std::cout << "PASS escape l=" << format_double(e.value) << " +- " << format_double(e.stderr) << '\n';
  return exit_pass;
}

int run_expectation(const Options& o) {
  const ExperimentConfig c = load(o);
  const Estimate e = expectation_estimate(c.rule(), c.measure, c.paths, c.horizon, PrngStream(c.seed, 0), c.threads);
  emit(o, estimate_csv_header(),
       estimate_csv_row("expectation", c.group, c.measure_id, static_cast<long>(c.horizon), c.paths, e, c.seed));
  const bool ok = e.censored_mass <= c.censored_tolerance;
  std::cout << (ok ? "PASS" : "INCONCLUSIVE") << " expectation E(tau)=" << format_double(e.value) << " +- "
            << format_double(e.stderr) << " censored=" << format_double(e.censored_mass) << '\n';
  return ok ? exit_pass : exit_inconclusive;
}

int run_transform(const Options& o) {
  const ExperimentConfig c = load(o);
  const ExactTransformResult t = transformed_measure_exact(c.rule(), c.measure, c.horizon, c.support_cap);
  const std::string text = transform_to_json(t).dump();
  std::cout << text << '\n';
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    if (!out) throw usage_error("cannot write '" + o.out + "'");
    out << text << '\n';
  }
  const bool ok = t.unresolved_mass <= c.unresolved_tolerance;
  std::cerr << (ok ? "PASS" : "INCONCLUSIVE") << " transform unresolved_mass=" << format_double(t.unresolved_mass)
            << '\n';
  return ok ? exit_pass : exit_inconclusive;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stopped random walks on groups: transforms, entropy and escape-rate checks"};
  app.require_subcommand(1);
  Options o;
  int (*action)(const Options&) = nullptr;

  auto add = [&](const char* name, const char* help, int (*fn)(const Options&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config_path, "experiment config (JSON)")->required();
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { o.seed = s; }, "master seed");
    sub->add_option("--out", o.out, "output file (CSV, or JSON for transform)");
    sub->add_option_function<unsigned>("--threads", [&](const unsigned& t) { o.threads = t; }, "worker threads")
        ->check(CLI::PositiveNumber);
    sub->add_option_function<double>("--tolerance", [&](const double& t) { o.tolerance = t; }, "relative tolerance")
        ->check(CLI::Range(0.0, 1.0));
    sub->callback([&action, fn] { action = fn; });
  };
  add("verify", "run the experiment named in the config and report a verdict", run_verify);
  add("entropy", "exact entropies H(mu^n) and the asymptotic entropy estimate", run_entropy);
  add("escape", "rate of escape in word length", run_escape);
  add("expectation", "Monte Carlo mean of the stopping time", run_expectation);
  add("transform", "exact transformed measure as JSON", run_transform);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }
  try {
    return action(o);
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return exit_usage;
  } catch (const budget_error& e) {
    std::cout << "INCONCLUSIVE " << e.what() << '\n';
    return exit_inconclusive;
  } catch (const unreachable_error& e) {
    std::cout << "INCONCLUSIVE " << e.what() << '\n';
    return exit_inconclusive;
  }
}
