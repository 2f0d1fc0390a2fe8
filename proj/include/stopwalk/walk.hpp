#pragma once

// Sample paths of a random walk and the estimators built on them:
// asymptotic entropy, rate of escape, hitting probabilities, Green gauge.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stopwalk/gauge.hpp"
#include "stopwalk/measure.hpp"
#include "stopwalk/rng.hpp"

namespace stopwalk {

struct Estimate {
  double value = 0.0;
  double stderr = 0.0;
  std::size_t samples = 0;
  double censored_mass = 0.0;
  /// Set when censoring means `value` only bounds the quantity from below.
  bool lower_bound = false;
};

/// Increments h_1, h_2, ... of a walk started at the identity, with
/// positions x_n = h_1 ... h_n computed on demand.
///
/// A path is either bounded (a fixed increment list) or streaming (increments
/// drawn from a measure the first time they are read). Shifted paths share
/// the underlying increments with the original. Not safe for concurrent use.
class SamplePath {
 public:
  SamplePath(Group group, std::vector<Element> increments);
  static SamplePath streaming(const Measure& mu, PrngStream rng);

  const Group& group() const { return store_->group; }
  /// Number of increments, or nullopt for a streaming path.
  std::optional<std::size_t> length() const;
  /// h_i for i >= 1. Throws std::out_of_range past the end of a bounded path.
  const Element& increment(std::size_t i) const;
  /// x_n; x_0 is the identity. Sequential forward reads are O(1) amortized.
  Element position(std::size_t n) const;
  /// The path of U^k: increments (h_{k+1}, h_{k+2}, ...).
  SamplePath shifted(std::size_t k) const;

 private:
  struct Store {
    Group group;
    std::vector<Element> increments;
    std::optional<Sampler> sampler;
    std::optional<PrngStream> rng;
  };

  SamplePath(std::shared_ptr<Store> store, std::size_t offset, std::optional<std::size_t> limit);

  std::shared_ptr<Store> store_;
  std::size_t offset_ = 0;
  std::optional<std::size_t> limit_;
  mutable Element cursor_;
  mutable std::size_t cursor_index_ = 0;
};

/// A bounded path of `length` i.i.d. mu increments.
SamplePath generate_path(const Measure& mu, std::size_t length, PrngStream rng);

/// (U^k x)_n = x_k^{-1} x_{k+n}.
SamplePath shift_U(const SamplePath& path, std::size_t k);

/// -(1/n) times the mean of ln mu^{*n}(x_n) over sampled paths, looked up in
/// the exact convolution table. Its expectation is exactly H(mu^{*n}) / n.
/// Throws budget_error when a sampled x_n was truncated out of the table.
Estimate shannon_estimate(const Measure& mu, int n, std::size_t paths, std::size_t support_cap,
                          PrngStream rng, unsigned threads = 1);

struct EntropyProfile {
  /// H_n = H(mu^{*n}) for n = 0..n_max.
  std::vector<double> entropies;
  /// H_{n+1} - H_n for n = 0..n_max-1.
  std::vector<double> differences;
  /// H_{n_max} - H_{n_max-1}.
  double last_difference = 0.0;
  /// Extrapolated asymptotic entropy; see extrapolate_entropy_rate.
  Estimate estimate;
};

/// Asymptotic entropy from the leading behaviour of H_n.
///
/// Fits H_k = h k + a ln k + c + b / k exactly through k = n-3..n and returns
/// h. The plain difference H_n - H_{n-1} carries an O(1/n) bias from the
/// logarithmic term (about 11% at n = 12 for the simple random walk on F_2);
/// the fit removes the log and 1/k terms. With fewer than four usable points
/// the plain difference is returned.
double extrapolate_entropy_rate(const std::vector<double>& entropies, std::size_t n);

/// Builds the profile (differences, extrapolated estimate and its error bar)
/// from an exact entropy sequence H_0..H_{n_max}.
EntropyProfile entropy_profile(std::vector<double> entropies, double censored_mass = 0.0);

/// Exact H_n for n <= n_max from convolution tables, plus the extrapolated
/// asymptotic entropy. The error bar is the change of the extrapolation
/// between n_max-1 and n_max. Throws budget_error when truncation under
/// `support_cap` drops more than 1e-9 of mass.
EntropyProfile entropy_difference_estimate(const Measure& mu, int n_max, std::size_t support_cap);

/// Mean of |x_n| / n over sampled paths.
Estimate escape_rate_estimate(const Measure& mu, const Gauge& gauge, int n, std::size_t paths, PrngStream rng,
                              unsigned threads = 1);

/// Fraction of paths visiting g at some time 1..horizon. censored_mass is the
/// fraction never hitting g, so the value is a lower bound for F(g).
Estimate estimate_hitting_probability(const Measure& mu, const Element& g, int horizon, std::size_t paths,
                                      PrngStream rng, unsigned threads = 1);

/// Green gauge |g| = -ln F^(g) for every element of word length <= radius
/// that the walk can reach, from the empirical hitting frequencies of
/// `paths` trajectories of `horizon` steps. Entries carry delta-method
/// standard errors. Other elements are evaluated by summing entries along
/// geodesic blocks of length `radius`, or +inf.
/// Throws budget_error when a reachable element was never hit.
Gauge green_gauge(const Measure& mu, int radius, int horizon, std::size_t paths, PrngStream rng,
                  unsigned threads = 1);

/// CSV header and row for estimator results.
std::string estimate_csv_header();
std::string estimate_csv_row(const std::string& estimator, const Group& group, const std::string& measure_id,
                             long n, std::size_t paths, const Estimate& estimate, std::uint64_t seed);

/// Shortest round-trip decimal for a double, as used in all CSV output.
std::string format_double(double x);

}  // namespace stopwalk
