#include "stopwalk/lumped.hpp"

#include <algorithm>
#include <cmath>

#include "stopwalk/summation.hpp"

namespace stopwalk {

namespace {

// Power series truncated at a fixed degree.
using Series = std::vector<double>;

Series mul(const Series& a, const Series& b) {
  Series out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) continue;
    for (std::size_t j = 0; i + j < a.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

Series inv(const Series& a) {
  Series out(a.size(), 0.0);
  out[0] = 1.0 / a[0];
  for (std::size_t n = 1; n < a.size(); ++n) {
    double s = 0.0;
    for (std::size_t k = 1; k <= n; ++k) s += a[k] * out[n - k];
    out[n] = -s / a[0];
  }
  return out;
}

Series one_minus(const Series& a) {
  Series out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (i == 0 ? 1.0 : 0.0) - a[i];
  return out;
}

Series scaled(const Series& a, double c) {
  Series out(a);
  for (double& x : out) x *= c;
  return out;
}

Series add(const Series& a, const Series& b) {
  Series out(a);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  return out;
}

// z * a
Series shift(const Series& a) {
  Series out(a.size(), 0.0);
  for (std::size_t i = 1; i < a.size(); ++i) out[i] = a[i - 1];
  return out;
}

struct PassageSeries {
  Series fm, fM, fo, g0;
};

PassageSeries solve_passage(int rank, std::size_t degree) {
  const double w = 1.0 / (2.0 * rank);
  const double others = 2.0 * rank - 2;
  const std::size_t len = degree + 1;
  Series fm(len, 0.0), fM(len, 0.0), fo(len, 0.0);
  // Jacobi iteration; the map is a contraction coefficientwise.
  for (int iter = 0; iter < 100000; ++iter) {
    const Series sm = add(scaled(fm, w), scaled(fo, others * w));
    const Series sM = add(scaled(shift(fM), w), scaled(fo, others * w));
    const Series so = add(add(scaled(shift(fM), w), scaled(fm, w)), scaled(fo, std::max(0.0, others - 1) * w));
    const Series nm = scaled(shift(inv(one_minus(sm))), w);
    const Series nM = scaled(inv(one_minus(sM)), w);
    const Series no = rank > 1 ? scaled(inv(one_minus(so)), w) : Series(len, 0.0);
    double change = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      change = std::max({change, std::abs(nm[i] - fm[i]), std::abs(nM[i] - fM[i]), std::abs(no[i] - fo[i])});
    }
    fm = nm;
    fM = nM;
    fo = no;
    if (change == 0.0 || (iter > 50 && change < 1e-18)) break;
  }
  const Series back = add(add(scaled(shift(fM), w), scaled(fm, w)), scaled(fo, others * w));
  return {fm, fM, fo, inv(one_minus(back))};
}

}  // namespace

LumpedEntropies first_letter_power_entropies(int rank, int n_max, double target, int max_cutoff) {
  if (rank < 1) throw usage_error("rank must be >= 1");
  if (n_max < 1) throw usage_error("n_max must be >= 1");
  if (max_cutoff < 1) throw usage_error("cutoff must be >= 1");
  const std::size_t degree = static_cast<std::size_t>(n_max - 1);
  const std::size_t len = degree + 1;
  const PassageSeries ps = solve_passage(rank, degree);
  const double inv2k = 1.0 / (2.0 * rank);
  const double c = std::max(1.0, 2.0 * rank - 1);
  const double ln_c = std::log(c);
  const std::size_t L_max = static_cast<std::size_t>(max_cutoff);

  // Powers of the passage series, and G_0 F_m^i F_M^j (cached).
  std::vector<Series> fo_pow{Series(len, 0.0)}, fM_pow{Series(len, 0.0)}, fm_pow{Series(len, 0.0)};
  fo_pow[0][0] = fM_pow[0][0] = fm_pow[0][0] = 1.0;
  for (std::size_t i = 1; i <= degree; ++i) fm_pow.push_back(mul(fm_pow.back(), ps.fm));
  std::vector<std::vector<Series>> head(len);

  // Reduced-word counts by (m count, M count, last letter class), scaled by
  // c^{-L}. Classes: 0 none, 1 m, 2 M, 3 other.
  const std::size_t width = L_max + 2;
  auto at = [&](std::vector<double>& v, std::size_t i, std::size_t j, int last) -> double& {
    return v[(i * width + j) * 4 + static_cast<std::size_t>(last)];
  };
  std::vector<double> layer(len * width * 4, 0.0), next_layer(layer.size(), 0.0);
  at(layer, 0, 0, 0) = 1.0;

  std::vector<CompensatedSum> entropy(static_cast<std::size_t>(n_max) + 1), mass(static_cast<std::size_t>(n_max) + 1);
  LumpedEntropies result;
  for (std::size_t L = 0; L <= L_max; ++L) {
    while (fo_pow.size() <= L) fo_pow.push_back(mul(fo_pow.back(), ps.fo));
    while (fM_pow.size() <= L) fM_pow.push_back(mul(fM_pow.back(), ps.fM));
    for (std::size_t i = 0; i <= std::min(degree, L); ++i) {
      while (head[i].size() <= L - i) head[i].push_back(mul(mul(ps.g0, fm_pow[i]), fM_pow[head[i].size()]));
      for (std::size_t j = 0; i + j <= L; ++j) {
        const double n_scaled = at(layer, i, j, 0) + at(layer, i, j, 1) + at(layer, i, j, 2) + at(layer, i, j, 3);
        if (n_scaled <= 0.0) continue;
        const double ln_count = std::log(n_scaled) + static_cast<double>(L) * ln_c;
        const Series& a = head[i][j];
        const Series& b = fo_pow[L - i - j];
        for (std::size_t n = i + 1; n <= static_cast<std::size_t>(n_max); ++n) {
          double coef = 0.0;
          for (std::size_t t = 0; t <= n - 1; ++t) coef += a[t] * b[n - 1 - t];
          const double p = coef * inv2k;
          if (!(p > 0.0)) continue;
          const double lp = std::log(p);
          const double total = std::exp(ln_count + lp);
          mass[n] += total;
          entropy[n] += -total * lp;
        }
      }
    }
    double worst = 0.0;
    for (int n = 1; n <= n_max; ++n) worst = std::max(worst, 1.0 - mass[static_cast<std::size_t>(n)].value());
    if (worst <= target) {
      result.cutoff = static_cast<int>(L);
      break;
    }
    if (L == L_max) {
      throw budget_error("lumped entropy: unresolved mass " + std::to_string(worst) + " above target at cutoff " +
                         std::to_string(max_cutoff));
    }
    // Extend every word by one letter.
    std::fill(next_layer.begin(), next_layer.end(), 0.0);
    const double others = 2.0 * rank - 2;
    for (std::size_t i = 0; i <= std::min(degree, L); ++i) {
      for (std::size_t j = 0; i + j <= L; ++j) {
        const double none = at(layer, i, j, 0), m = at(layer, i, j, 1), M = at(layer, i, j, 2), o = at(layer, i, j, 3);
        if (none + m + M + o == 0.0) continue;
        if (i + 1 <= degree) at(next_layer, i + 1, j, 1) += (none + m + o) / c;
        at(next_layer, i, j + 1, 2) += (none + M + o) / c;
        at(next_layer, i, j, 3) += (others * (none + m + M) + std::max(0.0, others - 1) * o) / c;
      }
    }
    std::swap(layer, next_layer);
  }
  result.entropies.push_back(0.0);
  result.unresolved.push_back(0.0);
  for (int n = 1; n <= n_max; ++n) {
    result.entropies.push_back(entropy[static_cast<std::size_t>(n)].value());
    result.unresolved.push_back(std::max(0.0, 1.0 - mass[static_cast<std::size_t>(n)].value()));
  }
  return result;
}

double first_letter_power_probability(int rank, int n, const Element& g) {
  if (n < 1) throw usage_error("n must be >= 1");
  const Group group = Group::free(rank);
  require_member(group, g);
  const Element y = multiply(group, g, decode(group, "A"));
  std::size_t i = 0, j = 0, l = 0;
  for (std::int32_t letter : y.data()) {
    if (letter == 1) {
      ++i;
    } else if (letter == -1) {
      ++j;
    } else {
      ++l;
    }
  }
  const std::size_t degree = static_cast<std::size_t>(n - 1);
  if (i > degree) return 0.0;
  const PassageSeries ps = solve_passage(rank, degree);
  Series acc = ps.g0;
  for (std::size_t k = 0; k < i; ++k) acc = mul(acc, ps.fm);
  for (std::size_t k = 0; k < j; ++k) acc = mul(acc, ps.fM);
  for (std::size_t k = 0; k < l; ++k) acc = mul(acc, ps.fo);
  return acc[degree] / (2.0 * rank);
}

std::optional<int> lumped_rank(const Measure& mu, const StoppingRule& rule) {
  const Group& group = mu.group();
  if (group.kind() != GroupKind::free || !group.has_standard_generators()) return std::nullopt;
  if (rule.kind() != StoppingRule::Kind::first_increment_in) return std::nullopt;
  const int rank = static_cast<int>(group.parameter());
  const auto gens = group.generators();
  if (mu.size() != gens.size()) return std::nullopt;
  for (const auto& g : gens) {
    if (std::abs(mu.weight(g) - 1.0 / (2.0 * rank)) > 1e-15) return std::nullopt;
  }
  const auto set = rule.to_json().at("set");
  if (set.size() != 1) return std::nullopt;
  if (decode(group, set[0].get<std::string>()).data().size() != 1) return std::nullopt;
  return rank;
}

}  // namespace stopwalk
