#include "stopwalk/walk.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <absl/container/flat_hash_map.h>

#include "stopwalk/parallel.hpp"
#include "stopwalk/summation.hpp"

namespace stopwalk {

namespace {

// Mean and standard error of per-path values, reduced in index order.
std::pair<double, double> mean_and_stderr(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n == 0) return {0.0, 0.0};
  CompensatedSum sum;
  for (double v : values) sum += v;
  const double mean = sum.value() / static_cast<double>(n);
  if (n == 1) return {mean, 0.0};
  CompensatedSum sq;
  for (double v : values) sq += (v - mean) * (v - mean);
  const double variance = sq.value() / static_cast<double>(n - 1);
  return {mean, std::sqrt(variance / static_cast<double>(n))};
}

void require_probability(const Measure& mu, const char* who) {
  if (!mu.is_probability()) throw usage_error(std::string(who) + " needs a probability measure");
}

void require_paths(std::size_t paths) {
  if (paths == 0) throw usage_error("need at least one path");
}

// Solves the 4x4 system in place (partial pivoting). Returns false if singular.
bool solve4(std::array<std::array<double, 5>, 4>& m) {
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    }
    if (m[pivot][col] == 0.0) return false;
    std::swap(m[col], m[pivot]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 5; ++c) m[r][c] -= f * m[col][c];
    }
  }
  for (int r = 0; r < 4; ++r) m[r][4] /= m[r][r];
  return true;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

// ---- SamplePath ----

SamplePath::SamplePath(Group group, std::vector<Element> increments) {
  for (const auto& h : increments) require_member(group, h);
  const std::size_t n = increments.size();
  store_ = std::make_shared<Store>(Store{std::move(group), std::move(increments), std::nullopt, std::nullopt});
  limit_ = n;
  cursor_ = store_->group.identity();
}

SamplePath::SamplePath(std::shared_ptr<Store> store, std::size_t offset, std::optional<std::size_t> limit)
    : store_(std::move(store)), offset_(offset), limit_(limit), cursor_(store_->group.identity()) {}

SamplePath SamplePath::streaming(const Measure& mu, PrngStream rng) {
  require_probability(mu, "a sample path");
  auto store = std::make_shared<Store>(Store{mu.group(), {}, Sampler(mu), std::move(rng)});
  return SamplePath(std::move(store), 0, std::nullopt);
}

std::optional<std::size_t> SamplePath::length() const { return limit_; }

const Element& SamplePath::increment(std::size_t i) const {
  if (i == 0) throw std::out_of_range("increments are indexed from 1");
  if (limit_ && i > *limit_) throw std::out_of_range("sample path has only " + std::to_string(*limit_) + " increments");
  const std::size_t index = offset_ + i - 1;
  auto& store = *store_;
  while (store.increments.size() <= index) {
    store.increments.push_back((*store.sampler)(*store.rng));
  }
  return store.increments[index];
}

Element SamplePath::position(std::size_t n) const {
  if (n < cursor_index_) {
    cursor_ = store_->group.identity();
    cursor_index_ = 0;
  }
  while (cursor_index_ < n) {
    multiply_into(store_->group, cursor_, increment(cursor_index_ + 1));
    ++cursor_index_;
  }
  return cursor_;
}

SamplePath SamplePath::shifted(std::size_t k) const {
  if (limit_ && k > *limit_) throw std::out_of_range("shift beyond the end of the path");
  std::optional<std::size_t> limit;
  if (limit_) limit = *limit_ - k;
  return SamplePath(store_, offset_ + k, limit);
}

SamplePath generate_path(const Measure& mu, std::size_t length, PrngStream rng) {
  require_probability(mu, "generate_path");
  Sampler sampler(mu);
  std::vector<Element> increments;
  increments.reserve(length);
  for (std::size_t i = 0; i < length; ++i) increments.push_back(sampler(rng));
  return SamplePath(mu.group(), std::move(increments));
}

SamplePath shift_U(const SamplePath& path, std::size_t k) { return path.shifted(k); }

// ---- entropy ----

Estimate shannon_estimate(const Measure& mu, int n, std::size_t paths, std::size_t support_cap, PrngStream rng,
                          unsigned threads) {
  require_probability(mu, "shannon_estimate");
  require_paths(paths);
  if (n < 1) throw usage_error("shannon_estimate needs n >= 1");
  const Measure table = convolution_power(mu, n, support_cap).first;
  const Sampler sampler(mu);
  const Group& group = mu.group();

  std::vector<double> values(paths);
  parallel_for(paths, threads, [&](unsigned, std::size_t i) {
    PrngStream stream = rng.substream(i);
    Element x = group.identity();
    for (int s = 0; s < n; ++s) multiply_into(group, x, sampler(stream));
    const double p = table.weight(x);
    if (p == 0.0) {
      throw budget_error("shannon_estimate: sampled position " + encode(group, x) +
                         " was truncated from the convolution table; raise the support cap");
    }
    values[i] = -std::log(p);
  });
  const auto [mean, se] = mean_and_stderr(values);
  Estimate e;
  e.value = mean / n;
  e.stderr = se / n;
  e.samples = paths;
  return e;
}

double extrapolate_entropy_rate(const std::vector<double>& entropies, std::size_t n) {
  if (n >= entropies.size()) throw usage_error("entropy sequence too short");
  if (n == 0) return 0.0;
  if (n < 4) return entropies[n] - entropies[n - 1];
  std::array<std::array<double, 5>, 4> m{};
  for (int r = 0; r < 4; ++r) {
    const double k = static_cast<double>(n - 3 + static_cast<std::size_t>(r));
    m[r] = {k, std::log(k), 1.0, 1.0 / k, entropies[n - 3 + static_cast<std::size_t>(r)]};
  }
  if (!solve4(m)) return entropies[n] - entropies[n - 1];
  return m[0][4];
}

EntropyProfile entropy_profile(std::vector<double> entropies, double censored_mass) {
  if (entropies.empty()) throw usage_error("empty entropy sequence");
  EntropyProfile profile;
  profile.entropies = std::move(entropies);
  const auto& h = profile.entropies;
  const std::size_t n_max = h.size() - 1;
  for (std::size_t n = 0; n < n_max; ++n) profile.differences.push_back(h[n + 1] - h[n]);
  profile.last_difference = n_max >= 1 ? profile.differences.back() : 0.0;
  profile.estimate.value = extrapolate_entropy_rate(h, n_max);
  if (n_max >= 2) {
    profile.estimate.stderr = std::abs(profile.estimate.value - extrapolate_entropy_rate(h, n_max - 1));
  }
  profile.estimate.samples = n_max;
  profile.estimate.censored_mass = censored_mass;
  return profile;
}

EntropyProfile entropy_difference_estimate(const Measure& mu, int n_max, std::size_t support_cap) {
  require_probability(mu, "entropy_difference_estimate");
  if (n_max < 1) throw usage_error("entropy_difference_estimate needs n_max >= 1");
  if (support_cap < 1) throw usage_error("support cap must be >= 1");
  const Group& group = mu.group();
  const auto factor = canonical_atoms(mu.atoms());
  std::vector<double> h{0.0};
  Measure::Atoms current{{group.identity(), 1.0}};
  double dropped = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    Measure::Atoms next;
    next.reserve(std::min(support_cap, current.size() * mu.size()));
    for (const auto* left : canonical_atoms(current)) {
      for (const auto* atom : factor) {
        Element gh = left->first;
        multiply_into(group, gh, atom->first);
        next[std::move(gh)] += left->second * atom->second;
      }
    }
    dropped += truncate_atoms(group, next, support_cap);
    if (dropped > 1e-9) {
      throw budget_error("entropy_difference_estimate: support cap " + std::to_string(support_cap) +
                         " drops mass " + format_double(dropped) + " at n = " + std::to_string(n));
    }
    current = std::move(next);
    h.push_back(entropy(Measure(group, current)));
  }
  return entropy_profile(std::move(h), dropped);
}

// ---- escape and hitting ----

Estimate escape_rate_estimate(const Measure& mu, const Gauge& gauge, int n, std::size_t paths, PrngStream rng,
                              unsigned threads) {
  require_probability(mu, "escape_rate_estimate");
  require_paths(paths);
  if (n < 1) throw usage_error("escape_rate_estimate needs n >= 1");
  const Sampler sampler(mu);
  const Group& group = mu.group();
  std::vector<double> values(paths);
  parallel_for(paths, threads, [&](unsigned, std::size_t i) {
    PrngStream stream = rng.substream(i);
    Element x = group.identity();
    for (int s = 0; s < n; ++s) multiply_into(group, x, sampler(stream));
    const double len = gauge_value(gauge, group, x);
    if (!std::isfinite(len)) {
      throw unreachable_error("escape_rate_estimate: gauge is infinite at " + encode(group, x));
    }
    values[i] = len / n;
  });
  const auto [mean, se] = mean_and_stderr(values);
  return Estimate{mean, se, paths, 0.0, false};
}

Estimate estimate_hitting_probability(const Measure& mu, const Element& g, int horizon, std::size_t paths,
                                      PrngStream rng, unsigned threads) {
  require_probability(mu, "estimate_hitting_probability");
  require_paths(paths);
  const Group& group = mu.group();
  require_member(group, g);
  if (g == group.identity()) throw usage_error("hitting probability target must differ from the identity");
  if (horizon < 1) throw usage_error("horizon must be >= 1");
  const Sampler sampler(mu);
  std::vector<char> hit(paths, 0);
  parallel_for(paths, threads, [&](unsigned, std::size_t i) {
    PrngStream stream = rng.substream(i);
    Element x = group.identity();
    for (int s = 0; s < horizon; ++s) {
      multiply_into(group, x, sampler(stream));
      if (x == g) {
        hit[i] = 1;
        return;
      }
    }
  });
  std::size_t hits = 0;
  for (char c : hit) hits += static_cast<std::size_t>(c);
  const double p = static_cast<double>(hits) / static_cast<double>(paths);
  Estimate e;
  e.value = p;
  e.stderr = std::sqrt(p * (1.0 - p) / static_cast<double>(paths));
  e.samples = paths;
  e.censored_mass = 1.0 - p;
  e.lower_bound = true;
  return e;
}

// ---- Green gauge ----

Gauge green_gauge(const Measure& mu, int radius, int horizon, std::size_t paths, PrngStream rng,
                  unsigned threads) {
  require_probability(mu, "green_gauge");
  require_paths(paths);
  if (radius < 1) throw usage_error("green gauge radius must be >= 1");
  if (horizon < 1) throw usage_error("horizon must be >= 1");
  const Group& group = mu.group();

  // Elements of the ball the walk can reach at all. The search through the
  // semigroup generated by supp(mu) stays within a larger ball; excursions
  // further out than that are not followed.
  int step_length = 0;
  for (const auto* atom : canonical_atoms(mu.atoms())) {
    step_length = std::max(step_length, word_length(group, atom->first, std::max(WordMetric::default_bfs_radius, 4)));
  }
  const int search_radius = 2 * radius + step_length;
  const WordMetric metric(group, std::max(WordMetric::default_bfs_radius, search_radius));
  absl::flat_hash_map<Element, bool> seen{{group.identity(), true}};
  std::vector<Element> frontier{group.identity()};
  while (!frontier.empty()) {
    std::vector<Element> next;
    for (const auto& x : frontier) {
      for (const auto* atom : canonical_atoms(mu.atoms())) {
        Element y = x;
        multiply_into(group, y, atom->first);
        if (seen.contains(y) || metric.length(y) > search_radius) continue;
        seen.emplace(y, true);
        next.push_back(std::move(y));
      }
    }
    frontier = std::move(next);
  }

  std::vector<Element> targets;
  for (auto& g : metric.ball(radius)) {
    if (!(g == group.identity()) && seen.contains(g)) targets.push_back(std::move(g));
  }
  absl::flat_hash_map<Element, std::size_t> index;
  for (std::size_t i = 0; i < targets.size(); ++i) index.emplace(targets[i], i);

  const unsigned workers = resolve_threads(threads);
  std::vector<std::vector<std::uint64_t>> counts(workers, std::vector<std::uint64_t>(targets.size(), 0));
  std::vector<std::vector<std::size_t>> stamp(workers, std::vector<std::size_t>(targets.size(), 0));
  const Sampler sampler(mu);
  parallel_for(paths, workers, [&](unsigned w, std::size_t i) {
    PrngStream stream = rng.substream(i);
    Element x = group.identity();
    for (int s = 0; s < horizon; ++s) {
      multiply_into(group, x, sampler(stream));
      auto it = index.find(x);
      if (it == index.end() || stamp[w][it->second] == i + 1) continue;
      stamp[w][it->second] = i + 1;
      ++counts[w][it->second];
    }
  });

  Gauge::Table table{{group.identity(), {0.0, 0.0}}};
  const double total = static_cast<double>(paths);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    std::uint64_t c = 0;
    for (unsigned w = 0; w < workers; ++w) c += counts[w][t];
    if (c == 0) {
      throw budget_error("green_gauge: " + encode(group, targets[t]) + " was never hit within horizon " +
                         std::to_string(horizon) + "; increase horizon or paths");
    }
    const double f = static_cast<double>(c) / total;
    table.emplace(targets[t], Gauge::Entry{-std::log(f), std::sqrt(f * (1.0 - f) / total) / f});
  }
  // -ln F is subadditive: F(gh) >= F(g) F(h).
  return Gauge::table(group, std::move(table), Gauge::DefaultRule::geodesic_chunks, radius, true);
}

// ---- CSV ----

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), end);
}

std::string estimate_csv_header() { return "estimator,group,measure_id,n,paths,value,stderr,censored_mass,seed"; }

std::string estimate_csv_row(const std::string& estimator, const Group& group, const std::string& measure_id,
                             long n, std::size_t paths, const Estimate& estimate, std::uint64_t seed) {
  return csv_field(estimator) + "," + csv_field(group.name()) + "," + csv_field(measure_id) + "," +
         std::to_string(n) + "," + std::to_string(paths) + "," + format_double(estimate.value) + "," +
         format_double(estimate.stderr) + "," + format_double(estimate.censored_mass) + "," + std::to_string(seed);
}

}  // namespace stopwalk
