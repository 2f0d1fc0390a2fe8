#include "stopwalk/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "stopwalk/lumped.hpp"
#include "stopwalk/parallel.hpp"
#include "stopwalk/transform.hpp"

namespace stopwalk {

namespace {

using nlohmann::json;

// Stream indices under the master seed, one per estimator.
constexpr std::uint64_t stream_expectation = 1;
constexpr std::uint64_t stream_left = 2;
constexpr std::uint64_t stream_base = 3;
constexpr std::uint64_t stream_green_table = 4;
constexpr std::uint64_t stream_green_walk = 5;
constexpr std::uint64_t stream_return = 6;

constexpr double bound_slack = 1e-9;

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw usage_error("config field '" + field + "': " + what);
}

template <typename T>
T positive(const json& j, const std::string& field, T fallback) {
  if (!j.contains(field)) return fallback;
  const json& v = j.at(field);
  if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) field_error(field, "expected a number");
    const T x = v.get<T>();
    if (!(x > 0)) field_error(field, "must be positive");
    return x;
  } else {
    if (!v.is_number_integer()) field_error(field, "expected an integer");
    if (v.get<long long>() <= 0) field_error(field, "must be positive");
    return v.get<T>();
  }
}

// Default measure id: the spec itself, kept free of CSV separators.
std::string describe(const json& spec) {
  if (spec.is_string()) return spec.get<std::string>();
  std::string s = spec.dump();
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '"', '\'');
  return s;
}

// Fraction of walks that come back to the identity within the horizon.
double return_probability(const Measure& mu, int horizon, std::size_t paths, PrngStream rng, unsigned threads) {
  std::vector<char> back(paths, 0);
  const Element e = mu.group().identity();
  parallel_for(paths, threads, [&](unsigned, std::size_t i) {
    const auto path = SamplePath::streaming(mu, rng.substream(i));
    for (int s = 1; s <= horizon; ++s) {
      if (path.position(static_cast<std::size_t>(s)) == e) {
        back[i] = 1;
        return;
      }
    }
  });
  std::size_t count = 0;
  for (char b : back) count += static_cast<std::size_t>(b);
  return static_cast<double>(count) / static_cast<double>(paths);
}

Measure parse_measure_inner(const json& spec, const Group& group, const std::string& field) {
  if (spec.is_string()) {
    if (spec.get<std::string>() == "srw") return Measure::uniform(group, group.generators());
    field_error(field, "unknown measure '" + spec.get<std::string>() + "'");
  }
  if (!spec.is_object()) field_error(field, "expected a string or an object");
  try {
    if (spec.contains("srw")) return Measure::uniform(group, group.generators());
    if (spec.contains("atoms")) {
      // [[element, weight], ...] or {element: weight, ...}
      Measure::Atoms atoms;
      const json& list = spec.at("atoms");
      if (list.is_object()) {
        for (const auto& [text, w] : list.items()) {
          if (!w.is_number()) field_error(field + ".atoms", "weights must be numbers");
          atoms[decode(group, text)] += w.get<double>();
        }
      } else {
        for (const auto& atom : list) {
          if (!atom.is_array() || atom.size() != 2 || !atom[0].is_string() || !atom[1].is_number()) {
            field_error(field + ".atoms", "expected [element, weight] pairs");
          }
          atoms[decode(group, atom[0].get<std::string>())] += atom[1].get<double>();
        }
      }
      Measure mu(group, std::move(atoms));
      if (!mu.is_probability()) field_error(field + ".atoms", "weights must sum to 1");
      return mu;
    }
    if (spec.contains("uniform")) {
      std::vector<Element> support;
      for (const auto& s : spec.at("uniform")) support.push_back(decode(group, s.get<std::string>()));
      return Measure::uniform(group, support);
    }
    if (spec.contains("power")) {
      const int k = positive<int>(spec, "power", 1);
      if (!spec.contains("of")) field_error(field, "'power' needs 'of'");
      const Measure base = parse_measure_inner(spec.at("of"), group, field + ".of");
      auto [m, report] = convolution_power(base, k, std::size_t{1} << 22);
      if (report.dropped_mass > 0.0) field_error(field, "power too large to tabulate");
      return m;
    }
    if (spec.contains("mix")) {
      std::vector<std::pair<double, Measure>> parts;
      for (const auto& part : spec.at("mix")) {
        if (!part.is_array() || part.size() != 2 || !part[0].is_number()) {
          field_error(field + ".mix", "expected [weight, measure] pairs");
        }
        parts.emplace_back(part[0].get<double>(), parse_measure_inner(part[1], group, field + ".mix"));
      }
      return mix(parts);
    }
  } catch (const json::exception& e) {
    field_error(field, e.what());
  }
  field_error(field, "expected one of srw, atoms, uniform, power, mix");
}

Estimate product(const Estimate& a, const Estimate& b) {
  Estimate out;
  out.value = a.value * b.value;
  out.stderr = std::hypot(a.value * b.stderr, b.value * a.stderr);
  out.samples = std::max(a.samples, b.samples);
  out.censored_mass = std::max(a.censored_mass, b.censored_mass);
  out.lower_bound = a.lower_bound || b.lower_bound;
  return out;
}

VerificationReport base_report(const ExperimentConfig& c, const std::string& rule_name, long n, std::size_t paths) {
  VerificationReport r;
  r.experiment = c.experiment;
  r.group = c.group.name();
  r.measure_id = c.measure_id;
  r.rule = rule_name;
  r.n = n;
  r.paths = paths;
  r.seed = c.seed;
  r.rel_tolerance = c.rel_tolerance;
  r.sigma_multiplier = c.sigma_multiplier;
  return r;
}

void finish(VerificationReport& r) {
  r.ratio = r.left.value / r.right.value;
  r.verdict = comparison_passes(r.comparison, r.left.value, r.left.stderr, r.right.value, r.right.stderr,
                                r.rel_tolerance, r.sigma_multiplier)
                  ? Verdict::pass
                  : Verdict::fail;
}

VerificationReport inconclusive(VerificationReport r, const std::string& why) {
  r.ratio = r.left.value / r.right.value;
  r.verdict = Verdict::inconclusive;
  r.notes.push_back(why);
  return r;
}

}  // namespace

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::pass:
      return "PASS";
    case Verdict::fail:
      return "FAIL";
    case Verdict::inconclusive:
      return "INCONCLUSIVE";
  }
  return "INCONCLUSIVE";
}

StoppingRule ExperimentConfig::rule() const {
  if (!rule_spec) throw usage_error("config field 'rule': required by this experiment");
  try {
    return build_stopping_rule(*rule_spec, group, measure);
  } catch (const usage_error& e) {
    throw usage_error(std::string("config field 'rule': ") + e.what());
  }
}

Measure parse_measure_spec(const json& spec, const Group& group) {
  return parse_measure_inner(spec, group, "measure");
}

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw usage_error("config: expected a JSON object");
  ExperimentConfig c;
  if (j.contains("experiment")) {
    if (!j.at("experiment").is_string()) field_error("experiment", "expected a string");
    c.experiment = j.at("experiment").get<std::string>();
  }
  if (!j.contains("group")) field_error("group", "missing");
  try {
    c.group = group_from_json(j.at("group"));
  } catch (const usage_error& e) {
    field_error("group", e.what());
  } catch (const json::exception& e) {
    field_error("group", e.what());
  }
  if (!j.contains("measure")) field_error("measure", "missing");
  c.measure = parse_measure_spec(j.at("measure"), c.group);
  if (j.contains("measure_id")) {
    if (!j.at("measure_id").is_string()) field_error("measure_id", "expected a string");
    c.measure_id = j.at("measure_id").get<std::string>();
  } else {
    c.measure_id = describe(j.at("measure"));
  }
  if (j.contains("rule")) c.rule_spec = j.at("rule");

  c.n = positive<int>(j, "n", c.n);
  c.n_max = positive<int>(j, "n_max", c.n_max);
  c.n_max_transformed = positive<int>(j, "n_max_transformed", c.n_max_transformed);
  c.paths = positive<std::size_t>(j, "paths", c.paths);
  c.horizon = positive<std::size_t>(j, "horizon", c.horizon);
  c.support_cap = positive<std::size_t>(j, "support_cap", c.support_cap);
  c.threads = positive<unsigned>(j, "threads", c.threads);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer() || j.at("seed").get<long long>() < 0) {
      field_error("seed", "expected a nonnegative integer");
    }
    c.seed = j.at("seed").get<std::uint64_t>();
  }

  if (j.contains("gauge")) {
    const json& g = j.at("gauge");
    const std::string kind = g.is_string() ? g.get<std::string>() : g.value("kind", std::string("word"));
    if (kind == "word") {
      c.gauge.kind = GaugeSpec::Kind::word;
    } else if (kind == "green") {
      c.gauge.kind = GaugeSpec::Kind::green;
    } else {
      field_error("gauge.kind", "expected 'word' or 'green'");
    }
    if (g.is_object()) {
      c.gauge.radius = positive<int>(g, "radius", c.gauge.radius);
      c.gauge.horizon = positive<int>(g, "horizon", c.gauge.horizon);
      c.gauge.paths = positive<std::size_t>(g, "paths", c.gauge.paths);
    }
  }

  if (j.contains("tolerance")) {
    const json& t = j.at("tolerance");
    if (t.is_number()) {
      c.rel_tolerance = t.get<double>();
    } else if (t.is_object()) {
      c.rel_tolerance = positive<double>(t, "relative", c.rel_tolerance);
      c.sigma_multiplier = positive<double>(t, "sigma", c.sigma_multiplier);
      c.unresolved_tolerance = positive<double>(t, "unresolved", c.unresolved_tolerance);
      c.censored_tolerance = positive<double>(t, "censored", c.censored_tolerance);
    } else {
      field_error("tolerance", "expected a number or an object");
    }
  }
  c.sigma_multiplier = positive<double>(j, "sigma_multiplier", c.sigma_multiplier);
  if (!(c.rel_tolerance > 0.0 && c.rel_tolerance < 1.0)) field_error("tolerance", "must lie in (0, 1)");
  if (c.rule_spec) (void)c.rule();
  return c;
}

bool comparison_passes(Comparison c, double left, double left_stderr, double right, double right_stderr,
                       double rel_tolerance, double sigma_multiplier) {
  const double combined = std::hypot(left_stderr, right_stderr);
  if (c == Comparison::upper_bound) return left <= right + sigma_multiplier * combined + bound_slack;
  return std::abs(left - right) <= std::max(rel_tolerance * std::abs(right), sigma_multiplier * combined);
}

VerificationReport run_entropy_scaling(const ExperimentConfig& config) {
  const StoppingRule rule = config.rule();
  rule.validate_for(config.measure);
  VerificationReport r = base_report(config, rule.name(), config.n_max_transformed, config.paths);
  try {
    const Estimate expected = expectation_estimate(rule, config.measure, config.paths, config.horizon,
                                                   PrngStream(config.seed, stream_expectation), config.threads);
    r.censored_mass = expected.censored_mass;
    const EntropyProfile base = entropy_difference_estimate(config.measure, config.n_max, config.support_cap);
    r.right = product(expected, base.estimate);

    EntropyProfile transformed;
    if (const auto rank = lumped_rank(config.measure, rule)) {
      // Only the SRW with a single marked letter takes this path; the
      // convolution tables of mu_tau would be far too large.
      const LumpedEntropies lumped =
          first_letter_power_entropies(*rank, config.n_max_transformed, config.unresolved_tolerance);
      double worst = 0.0;
      for (double u : lumped.unresolved) worst = std::max(worst, u);
      r.unresolved_mass = worst;
      transformed = entropy_profile(lumped.entropies);
      r.notes.push_back("mu_tau entropies by letter-count lumping, word cutoff " + std::to_string(lumped.cutoff));
    } else {
      const ExactTransformResult exact =
          transformed_measure_exact(rule, config.measure, config.horizon, config.support_cap);
      r.unresolved_mass = exact.unresolved_mass + exact.truncation.dropped_mass;
      if (r.unresolved_mass > config.unresolved_tolerance) {
        return inconclusive(r, "unresolved mass of mu_tau above tolerance");
      }
      transformed =
          entropy_difference_estimate(exact.measure.normalized(), config.n_max_transformed, config.support_cap);
    }
    r.left = transformed.estimate;
    r.left.censored_mass = r.unresolved_mass;
    r.notes.push_back("E(tau) = " + format_double(expected.value) + " +- " + format_double(expected.stderr) +
                      ", h(mu) = " + format_double(base.estimate.value) + " +- " +
                      format_double(base.estimate.stderr));
    if (expected.censored_mass > config.censored_tolerance) {
      return inconclusive(r, "censored mass of tau above tolerance");
    }
  } catch (const budget_error& e) {
    return inconclusive(r, e.what());
  }
  finish(r);
  return r;
}

VerificationReport run_escape_scaling(const ExperimentConfig& config) {
  const StoppingRule rule = config.rule();
  rule.validate_for(config.measure);
  if (config.gauge.kind != GaugeSpec::Kind::word) {
    throw usage_error("config field 'gauge': escape scaling uses the word-length gauge");
  }
  const Gauge gauge = Gauge::word_length(config.group);
  if (!gauge.subadditive()) throw usage_error("config field 'gauge': must be subadditive");
  VerificationReport r = base_report(config, rule.name(), config.n, config.paths);
  try {
    const Estimate expected = expectation_estimate(rule, config.measure, config.paths, config.horizon,
                                                   PrngStream(config.seed, stream_expectation), config.threads);
    const Estimate speed = escape_rate_estimate(config.measure, gauge, config.n, config.paths,
                                                PrngStream(config.seed, stream_base), config.threads);
    r.right = product(expected, speed);

    // |x_{tau_n}| / n along iterated stopping times.
    const PrngStream rng(config.seed, stream_left);
    const std::size_t legs = static_cast<std::size_t>(config.n);
    const std::size_t total_horizon = config.horizon * legs;
    std::vector<double> values(config.paths, 0.0);
    std::vector<char> censored(config.paths, 0);
    parallel_for(config.paths, config.threads, [&](unsigned, std::size_t i) {
      const PrngStream stream = rng.substream(i);
      const auto path = SamplePath::streaming(config.measure, stream.substream(0));
      StopOutcome last;
      iterate_visit(rule, path, stream.substream(1), legs, total_horizon,
                    [&](std::size_t, const StopOutcome& o) { last = o; });
      if (!last.stopped) {
        censored[i] = 1;
        return;
      }
      values[i] = gauge_value(gauge, config.group, last.position) / static_cast<double>(legs);
    });
    double sum = 0.0, sum_sq = 0.0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < config.paths; ++i) {
      if (censored[i]) continue;
      sum += values[i];
      sum_sq += values[i] * values[i];
      ++kept;
    }
    r.censored_mass = std::max(expected.censored_mass,
                               static_cast<double>(config.paths - kept) / static_cast<double>(config.paths));
    if (kept == 0) return inconclusive(r, "every iterated path was censored");
    const double k = static_cast<double>(kept);
    r.left.value = sum / k;
    r.left.stderr = kept > 1 ? std::sqrt(std::max(0.0, sum_sq / k - r.left.value * r.left.value) / (k - 1)) : 0.0;
    r.left.samples = kept;
    r.left.censored_mass = 1.0 - k / static_cast<double>(config.paths);
    r.left.lower_bound = kept < config.paths;
    r.notes.push_back("E(tau) = " + format_double(expected.value) + ", l(mu) = " + format_double(speed.value));
    if (r.censored_mass > config.censored_tolerance) return inconclusive(r, "censored mass above tolerance");
  } catch (const budget_error& e) {
    return inconclusive(r, e.what());
  }
  finish(r);
  return r;
}

VerificationReport run_entropy_bound(const ExperimentConfig& config) {
  const StoppingRule rule = config.rule();
  if (!rule.deterministic()) {
    throw usage_error("entropy bound: only non-randomized stopping rules are in scope (rule " + rule.name() + ")");
  }
  rule.validate_for(config.measure);
  VerificationReport r = base_report(config, rule.name(), static_cast<long>(config.horizon), 0);
  r.comparison = Comparison::upper_bound;
  try {
    const ExactTransformResult exact =
        transformed_measure_exact(rule, config.measure, config.horizon, config.support_cap);
    const double m = exact.unresolved_mass + exact.truncation.dropped_mass;
    const double h1 = entropy(config.measure);
    r.unresolved_mass = m;
    const double core = exact.measure.mass();
    if (core <= 0.0) return inconclusive(r, "nothing stopped within the horizon");
    r.left.value = entropy(exact.measure.normalized());
    r.left.censored_mass = m;
    // E(tau) of the normalized core, plus the entropy the tail could add.
    r.right.value = exact.expected_time() / core * h1 + m * static_cast<double>(config.horizon) * h1;
    r.right.censored_mass = m;
    if (m > config.unresolved_tolerance) return inconclusive(r, "unresolved mass above tolerance");
  } catch (const budget_error& e) {
    return inconclusive(r, e.what());
  }
  finish(r);
  return r;
}

VerificationReport run_green_entropy(const ExperimentConfig& config) {
  VerificationReport r = base_report(config, "", config.n, config.paths);
  try {
    // Recurrence shows up as a return probability near 1.
    const double back = return_probability(config.measure, config.gauge.horizon, config.gauge.paths,
                                           PrngStream(config.seed, stream_return), config.threads);
    if (back >= 0.9) return inconclusive(r, "walk looks recurrent: return probability " + format_double(back));
    const Gauge gauge = green_gauge(config.measure, config.gauge.radius, config.gauge.horizon, config.gauge.paths,
                                    PrngStream(config.seed, stream_green_table), config.threads);
    r.left = escape_rate_estimate(config.measure, gauge, config.n, config.paths,
                                  PrngStream(config.seed, stream_green_walk), config.threads);
    const EntropyProfile profile = entropy_difference_estimate(config.measure, config.n_max, config.support_cap);
    r.right = profile.estimate;
  } catch (const budget_error& e) {
    return inconclusive(r, e.what());
  }
  finish(r);
  return r;
}

VerificationReport run_kac_check(const ExperimentConfig& config) {
  const StoppingRule rule = config.rule();
  if (rule.kind() != StoppingRule::Kind::hitting_subgroup) {
    throw usage_error("kac check: the rule must hit a finite-index subgroup (hitting_subgroup), got " + rule.name());
  }
  rule.validate_for(config.measure);
  VerificationReport r = base_report(config, rule.name(), static_cast<long>(config.horizon), config.paths);
  r.right.value = static_cast<double>(rule.subgroup_index());
  try {
    r.left = expectation_estimate(rule, config.measure, config.paths, config.horizon,
                                  PrngStream(config.seed, stream_expectation), config.threads);
    r.censored_mass = r.left.censored_mass;
    if (r.censored_mass > config.censored_tolerance) return inconclusive(r, "censored mass above tolerance");
  } catch (const budget_error& e) {
    return inconclusive(r, e.what());
  }
  finish(r);
  return r;
}

VerificationReport run_experiment(const ExperimentConfig& config) {
  if (config.experiment == "entropy_scaling") return run_entropy_scaling(config);
  if (config.experiment == "escape_scaling") return run_escape_scaling(config);
  if (config.experiment == "entropy_bound") return run_entropy_bound(config);
  if (config.experiment == "green_entropy") return run_green_entropy(config);
  if (config.experiment == "kac") return run_kac_check(config);
  throw usage_error("config field 'experiment': unknown experiment '" + config.experiment +
                    "' (entropy_scaling, escape_scaling, entropy_bound, green_entropy, kac)");
}

std::string report_csv_header() {
  return "experiment,group,measure_id,rule,n,paths,seed,left,left_stderr,right,right_stderr,ratio,censored_mass,"
         "unresolved_mass,verdict,rel_tolerance,sigma_multiplier,comparison";
}

namespace {

// Quotes a CSV field when it contains a separator or quote.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string report_csv_row(const VerificationReport& r) {
  std::ostringstream os;
  os << csv_field(r.experiment) << ',' << csv_field(r.group) << ',' << csv_field(r.measure_id) << ','
     << csv_field(r.rule) << ',' << r.n << ',' << r.paths << ',' << r.seed << ',' << format_double(r.left.value)
     << ',' << format_double(r.left.stderr) << ',' << format_double(r.right.value) << ','
     << format_double(r.right.stderr) << ',' << format_double(r.ratio) << ',' << format_double(r.censored_mass)
     << ',' << format_double(r.unresolved_mass) << ',' << verdict_name(r.verdict) << ','
     << format_double(r.rel_tolerance) << ',' << format_double(r.sigma_multiplier) << ','
     << (r.comparison == Comparison::two_sided ? "two_sided" : "upper_bound");
  return os.str();
}

std::string report_summary(const VerificationReport& r) {
  std::ostringstream os;
  os << verdict_name(r.verdict) << ' ' << r.experiment << " left=" << format_double(r.left.value) << " right="
     << format_double(r.right.value) << " ratio=" << format_double(r.ratio);
  for (const auto& note : r.notes) os << " [" << note << ']';
  return os.str();
}

}  // namespace stopwalk
