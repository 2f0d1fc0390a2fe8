#pragma once

// End-to-end experiments comparing a left-hand and a right-hand estimate,
// with pass / fail / inconclusive verdicts and CSV output.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stopwalk/measure.hpp"
#include "stopwalk/stopping.hpp"
#include "stopwalk/walk.hpp"

namespace stopwalk {

enum class Verdict { pass, fail, inconclusive };
std::string verdict_name(Verdict v);

/// How left and right are compared.
///   two_sided:   |left - right| <= max(rel * |right|, sigma * combined stderr)
///   upper_bound: left <= right + sigma * combined stderr + 1e-9
enum class Comparison { two_sided, upper_bound };

struct GaugeSpec {
  enum class Kind { word, green } kind = Kind::word;
  int radius = 3;           // green
  int horizon = 200;        // green: steps per hitting trial
  std::size_t paths = 100000;  // green: hitting trials
};

struct ExperimentConfig {
  std::string experiment;  // entropy_scaling, escape_scaling, entropy_bound, green_entropy, kac
  Group group = Group::lattice(1);
  Measure measure = Measure::dirac(Group::lattice(1), Group::lattice(1).identity());
  std::string measure_id;
  std::optional<nlohmann::json> rule_spec;

  int n = 1000;                    // walk length / number of legs for MC estimates
  int n_max = 12;                  // exact entropies of mu
  int n_max_transformed = 6;       // exact entropies of mu_tau
  std::size_t paths = 10000;
  std::size_t horizon = 1000;
  std::size_t support_cap = std::size_t{1} << 21;
  GaugeSpec gauge;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  double rel_tolerance = 0.05;
  double sigma_multiplier = 3.0;
  /// Largest censored / unresolved mass accepted before the verdict becomes
  /// inconclusive.
  double unresolved_tolerance = 1e-8;
  double censored_tolerance = 1e-3;

  StoppingRule rule() const;
};

/// Parses a config document. Unknown experiments, missing fields and bad
/// values raise usage_error naming the field.
ExperimentConfig parse_config(const nlohmann::json& j);

/// Measure grammar: "srw" | {"srw": true} | {"atoms": [[element, w], ...] or {element: w}} |
/// {"power": k, "of": spec} | {"mix": [[weight, spec], ...]}.
Measure parse_measure_spec(const nlohmann::json& spec, const Group& group);

struct VerificationReport {
  std::string experiment;
  std::string group;
  std::string measure_id;
  std::string rule;
  long n = 0;
  std::size_t paths = 0;
  std::uint64_t seed = 0;
  Estimate left;
  Estimate right;
  double ratio = 0.0;
  double censored_mass = 0.0;
  double unresolved_mass = 0.0;
  double rel_tolerance = 0.05;
  double sigma_multiplier = 3.0;
  Comparison comparison = Comparison::two_sided;
  Verdict verdict = Verdict::inconclusive;
  /// Free-text diagnostics (not part of the CSV).
  std::vector<std::string> notes;
};

/// Applies the comparison rule; used by every experiment and recomputable
/// from the CSV columns.
bool comparison_passes(Comparison c, double left, double left_stderr, double right, double right_stderr,
                       double rel_tolerance, double sigma_multiplier);

/// h(mu_tau) against E(tau) h(mu).
VerificationReport run_entropy_scaling(const ExperimentConfig& config);
/// Rate of escape of the iterated walk against E(tau) l(mu).
VerificationReport run_escape_scaling(const ExperimentConfig& config);
/// H(mu_tau) <= E(tau) H(mu) for deterministic rules.
VerificationReport run_entropy_bound(const ExperimentConfig& config);
/// Rate of escape in the Green metric against the asymptotic entropy.
VerificationReport run_green_entropy(const ExperimentConfig& config);
/// Mean return time to a finite-index subgroup against its index.
VerificationReport run_kac_check(const ExperimentConfig& config);

/// Dispatches on config.experiment.
VerificationReport run_experiment(const ExperimentConfig& config);

std::string report_csv_header();
std::string report_csv_row(const VerificationReport& report);
/// One-line summary, e.g. "PASS entropy_scaling left=... right=... ratio=...".
std::string report_summary(const VerificationReport& report);

}  // namespace stopwalk
