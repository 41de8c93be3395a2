#pragma once

// Diagonal-covariance Gaussian mixtures, one per class, fit by EM from a
// k-means++ start. Classification is argmax of log prior + log likelihood.

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ttsound {

struct GmmConfig
{
  std::size_t components{8};
  std::size_t maxIterations{200};
  double tolerance{1e-6}; // mean per-sample log-likelihood gain
  double varianceFloor{1e-6};
  std::uint64_t seed{0};

  void validate() const
  {
    if (components == 0) throw ParameterError("gmm components must be positive");
    if (maxIterations == 0) throw ParameterError("gmm iterations must be positive");
    if (!(tolerance >= 0.0)) throw ParameterError("gmm tolerance must be non-negative");
    if (!(varianceFloor > 0.0)) throw ParameterError("gmm variance floor must be positive");
  }
};

inline double log_sum_exp(std::span<const double> v)
{
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

struct DiagGmm
{
  std::vector<double> weights;            // [K]
  std::vector<std::vector<double>> means; // [K][dim]
  std::vector<std::vector<double>> vars;  // [K][dim]

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }

  /// log w_k + log N(x | mu_k, diag var_k) for every component.
  std::vector<double> component_log_densities(std::span<const double> x) const
  {
    const std::size_t d = dim();
    std::vector<double> out(weights.size());
    for (std::size_t k = 0; k < weights.size(); ++k)
    {
      double acc = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
      for (std::size_t j = 0; j < d; ++j)
      {
        const double diff = x[j] - means[k][j];
        acc -= 0.5 * (std::log(vars[k][j]) + diff * diff / vars[k][j]);
      }
      out[k] = std::log(weights[k]) + acc;
    }
    return out;
  }

  double log_likelihood(std::span<const double> x) const
  {
    return log_sum_exp(component_log_densities(x));
  }
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b)
{
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

/// k-means++ seeding: first centre uniform, the rest by D^2 sampling.
inline std::vector<std::vector<double>> kmeanspp(std::span<const std::vector<double>> x,
                                                 std::size_t k, std::mt19937_64& rng)
{
  const std::size_t n = x.size();
  std::vector<std::vector<double>> centres;
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centres.push_back(x[first(rng)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x[i], centres[0]);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  while (centres.size() < k)
  {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0)
    {
      const double target = u(rng) * total;
      double run = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i)
      {
        run += d2[i];
        if (run > target && d2[i] > 0.0)
        {
          pick = i;
          break;
        }
      }
    }
    else
    {
      pick = first(rng); // all points coincide with a centre
    }
    centres.push_back(x[pick]);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(x[i], centres.back()));
  }
  return centres;
}

} // namespace detail

/// EM for one diagonal mixture. `history` receives the mean per-sample
/// log-likelihood evaluated before each M-step (one entry per iteration).
inline DiagGmm fit_diag_gmm(std::span<const std::vector<double>> x, const GmmConfig& cfg,
                            std::mt19937_64& rng, std::vector<double>* history = nullptr)
{
  cfg.validate();
  const std::size_t n = x.size(), K = cfg.components;
  if (n < K) throw DataError("gmm needs at least " + std::to_string(K) + " samples");
  const std::size_t d = x.front().size();
  for (const auto& v : x)
    if (v.size() != d) throw ShapeError("gmm features differ in length");

  // Hard assignment to the k-means++ centres gives the starting mixture.
  DiagGmm g;
  g.means = detail::kmeanspp(x, K, rng);
  std::vector<double> globalMean(d, 0.0), globalVar(d, 0.0);
  for (const auto& v : x)
    for (std::size_t j = 0; j < d; ++j) globalMean[j] += v[j];
  for (auto& m : globalMean) m /= static_cast<double>(n);
  for (const auto& v : x)
    for (std::size_t j = 0; j < d; ++j) globalVar[j] += (v[j] - globalMean[j]) * (v[j] - globalMean[j]);
  for (auto& s : globalVar) s = std::max(s / static_cast<double>(n), cfg.varianceFloor);

  std::vector<std::size_t> count(K, 0);
  std::vector<std::vector<double>> sq(K, std::vector<double>(d, 0.0));
  for (const auto& v : x)
  {
    std::size_t best = 0;
    double bestD = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k)
    {
      const double dist = detail::squared_distance(v, g.means[k]);
      if (dist < bestD)
      {
        bestD = dist;
        best = k;
      }
    }
    ++count[best];
    for (std::size_t j = 0; j < d; ++j) sq[best][j] += (v[j] - g.means[best][j]) * (v[j] - g.means[best][j]);
  }
  g.weights.resize(K);
  g.vars.assign(K, std::vector<double>(d));
  for (std::size_t k = 0; k < K; ++k)
  {
    g.weights[k] = static_cast<double>(std::max<std::size_t>(count[k], 1)) / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j)
      g.vars[k][j] = count[k] > 1 ? std::max(sq[k][j] / static_cast<double>(count[k]), cfg.varianceFloor)
                                  : globalVar[j];
  }
  double wsum = 0.0;
  for (double w : g.weights) wsum += w;
  for (auto& w : g.weights) w /= wsum;

  std::vector<double> resp(n * K);
  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < cfg.maxIterations; ++iter)
  {
    // E-step
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
      auto logp = g.component_log_densities(x[i]);
      const double lse = log_sum_exp(logp);
      ll += lse;
      for (std::size_t k = 0; k < K; ++k) resp[i * K + k] = std::exp(logp[k] - lse);
    }
    ll /= static_cast<double>(n);
    if (!std::isfinite(ll)) throw NumericError("gmm log-likelihood is not finite");
    if (history) history->push_back(ll);
    if (iter > 0 && ll - previous < cfg.tolerance) break;
    previous = ll;

    // M-step
    for (std::size_t k = 0; k < K; ++k)
    {
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) nk += resp[i * K + k];
      if (nk <= 0.0)
      {
        g.weights[k] = 0.0; // empty component drops out
        continue;
      }
      std::vector<double> mean(d, 0.0), var(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
      {
        const double r = resp[i * K + k];
        for (std::size_t j = 0; j < d; ++j) mean[j] += r * x[i][j];
      }
      for (auto& m : mean) m /= nk;
      for (std::size_t i = 0; i < n; ++i)
      {
        const double r = resp[i * K + k];
        for (std::size_t j = 0; j < d; ++j) var[j] += r * (x[i][j] - mean[j]) * (x[i][j] - mean[j]);
      }
      for (auto& v : var) v = std::max(v / nk, cfg.varianceFloor);
      g.weights[k] = nk / static_cast<double>(n);
      g.means[k] = std::move(mean);
      g.vars[k] = std::move(var);
    }
  }
  return g;
}

struct GmmModel
{
  std::vector<DiagGmm> classes;
  std::vector<double> priors;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t dim() const { return classes.empty() ? 0 : classes.front().dim(); }

  /// log prior + log likelihood per class.
  std::vector<double> scores(std::span<const double> x) const
  {
    if (x.size() != dim())
      throw ShapeError("gmm expects " + std::to_string(dim()) + " features, got " +
                       std::to_string(x.size()));
    std::vector<double> s(classes.size());
    for (std::size_t c = 0; c < classes.size(); ++c)
      s[c] = std::log(priors[c]) + classes[c].log_likelihood(x);
    return s;
  }

  std::size_t predict(std::span<const double> x) const
  {
    auto s = scores(x);
    return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  }
};

/// Rounds probabilities onto a 2^-24 grid that sums to exactly 1, with at
/// least one unit per entry. Grid values are exact in float32.
inline void quantize_simplex(std::vector<double>& p)
{
  constexpr std::int64_t kUnits = std::int64_t{1} << 24;
  if (p.empty()) return;
  if (static_cast<std::int64_t>(p.size()) > kUnits) throw ParameterError("too many simplex entries");
  std::vector<std::int64_t> units(p.size());
  std::int64_t total = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
  {
    units[i] = std::max<std::int64_t>(1, std::llround(p[i] * static_cast<double>(kUnits)));
    total += units[i];
  }
  // Settle the remainder on the largest entries.
  while (total != kUnits)
  {
    std::size_t big = static_cast<std::size_t>(std::max_element(units.begin(), units.end()) - units.begin());
    if (total > kUnits)
    {
      const std::int64_t take = std::min(total - kUnits, units[big] - 1);
      units[big] -= take;
      total -= take;
    }
    else
    {
      units[big] += kUnits - total;
      total = kUnits;
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i)
    p[i] = static_cast<double>(units[i]) / static_cast<double>(kUnits);
}

/// Rounds means and variances to float32 (variances never below the floor)
/// and weights/priors onto the 2^-24 grid.
inline void quantize_float32(GmmModel& m, double varianceFloor = 1e-6)
{
  const float floorF = std::nextafter(static_cast<float>(varianceFloor), std::numeric_limits<float>::infinity());
  for (auto& g : m.classes)
  {
    quantize_simplex(g.weights);
    for (auto& mean : g.means)
      for (auto& v : mean) v = static_cast<double>(static_cast<float>(v));
    for (auto& var : g.vars)
      for (auto& v : var)
      {
        float f = static_cast<float>(v);
        if (static_cast<double>(f) < varianceFloor) f = floorF;
        v = static_cast<double>(f);
      }
  }
  quantize_simplex(m.priors);
}

/// Labels are class indices in [0, nClasses); priors are empirical
/// frequencies. `histories`, if given, receives the EM trace per class.
inline GmmModel gmm_train(std::span<const std::vector<double>> x, std::span<const int> labels,
                          std::size_t nClasses, const GmmConfig& cfg = {},
                          std::span<const std::string> classNames = {},
                          std::vector<std::vector<double>>* histories = nullptr)
{
  cfg.validate();
  if (x.size() != labels.size()) throw ShapeError("features and labels differ in length");
  if (nClasses == 0) throw DataError("gmm needs at least one class");
  std::vector<std::vector<std::vector<double>>> perClass(nClasses);
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    const int l = labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= nClasses)
      throw ParameterError("label " + std::to_string(l) + " out of range");
    perClass[static_cast<std::size_t>(l)].push_back(x[i]);
  }
  GmmModel m;
  std::mt19937_64 rng(cfg.seed);
  if (histories) histories->assign(nClasses, {});
  for (std::size_t c = 0; c < nClasses; ++c)
  {
    const auto name = c < classNames.size() ? classNames[c] : "class " + std::to_string(c);
    if (perClass[c].size() < cfg.components)
      throw DataError("class '" + name + "' has " + std::to_string(perClass[c].size()) +
                      " samples, gmm needs at least " + std::to_string(cfg.components));
    m.classes.push_back(fit_diag_gmm(perClass[c], cfg, rng, histories ? &(*histories)[c] : nullptr));
    m.priors.push_back(static_cast<double>(perClass[c].size()) / static_cast<double>(x.size()));
  }
  quantize_float32(m, cfg.varianceFloor);
  return m;
}

} // namespace ttsound
