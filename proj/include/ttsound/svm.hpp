#pragma once

// One-vs-rest linear SVM trained with Pegasos (primal subgradient descent on
// the L2-regularized hinge loss). The bias rides along as a constant feature.

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ttsound {

struct SvmConfig
{
  double lambda{1e-4};
  std::size_t epochs{50};
  std::uint64_t seed{0};

  void validate() const
  {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ParameterError("svm lambda must be positive");
    if (epochs == 0) throw ParameterError("svm epochs must be positive");
  }
};

struct SvmModel
{
  std::size_t dim{0};
  std::vector<std::vector<double>> weights; // [class][dim]
  std::vector<double> bias;                 // [class]

  std::size_t num_classes() const { return weights.size(); }

  std::vector<double> scores(std::span<const double> x) const
  {
    if (x.size() != dim)
      throw ShapeError("svm expects " + std::to_string(dim) + " features, got " +
                       std::to_string(x.size()));
    std::vector<double> s(weights.size());
    for (std::size_t c = 0; c < weights.size(); ++c)
    {
      double acc = bias[c];
      for (std::size_t j = 0; j < dim; ++j) acc += weights[c][j] * x[j];
      s[c] = acc;
    }
    return s;
  }

  std::size_t predict(std::span<const double> x) const
  {
    auto s = scores(x);
    return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  }
};

/// Binary Pegasos on labels +-1. Returns [w..., b] averaged over the iterates
/// of the second half of training; the last iterate alone still takes steps
/// of order 1/(lambda t) and wanders on overlapping classes.
inline std::vector<double> pegasos_binary(std::span<const std::vector<double>> x,
                                          std::span<const int> y, const SvmConfig& cfg)
{
  const std::size_t n = x.size(), dim = x.front().size();
  std::vector<double> w(dim + 1, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  const double radius = 1.0 / std::sqrt(cfg.lambda);
  std::uint64_t t = 0;
  std::vector<double> avg(dim + 1, 0.0);
  std::uint64_t averaged = 0;
  const std::size_t firstAveraged = cfg.epochs / 2;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch)
  {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order)
    {
      ++t;
      const double eta = 1.0 / (cfg.lambda * static_cast<double>(t));
      const auto& xi = x[i];
      double margin = w[dim];
      for (std::size_t j = 0; j < dim; ++j) margin += w[j] * xi[j];
      margin *= y[i];
      const double shrink = 1.0 - eta * cfg.lambda;
      for (auto& v : w) v *= shrink;
      if (margin < 1.0)
      {
        const double step = eta * y[i];
        for (std::size_t j = 0; j < dim; ++j) w[j] += step * xi[j];
        w[dim] += step;
      }
      double norm = 0.0;
      for (double v : w) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > radius)
        for (auto& v : w) v *= radius / norm;
      if (epoch >= firstAveraged)
      {
        ++averaged;
        const double a = 1.0 / static_cast<double>(averaged);
        for (std::size_t j = 0; j <= dim; ++j) avg[j] += a * (w[j] - avg[j]);
      }
    }
  }
  return avg;
}

/// lambda/2 |w|^2 + mean hinge, with the bias inside the regularizer.
inline double svm_objective(std::span<const double> w, double bias,
                            std::span<const std::vector<double>> x, std::span<const int> y,
                            double lambda)
{
  double reg = bias * bias;
  for (double v : w) reg += v * v;
  double hinge = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    double s = bias;
    for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * x[i][j];
    hinge += std::max(0.0, 1.0 - y[i] * s);
  }
  return 0.5 * lambda * reg + hinge / static_cast<double>(x.size());
}

/// Labels are class indices in [0, nClasses). Weights come back rounded to
/// float32 so they survive serialization unchanged.
inline SvmModel svm_train(std::span<const std::vector<double>> x, std::span<const int> labels,
                          std::size_t nClasses, const SvmConfig& cfg = {})
{
  cfg.validate();
  if (x.size() != labels.size()) throw ShapeError("features and labels differ in length");
  if (x.empty()) throw DegenerateError("svm needs training samples");
  const std::size_t dim = x.front().size();
  for (const auto& v : x)
    if (v.size() != dim) throw ShapeError("svm features differ in length");
  std::vector<std::size_t> counts(nClasses, 0);
  for (int l : labels)
  {
    if (l < 0 || static_cast<std::size_t>(l) >= nClasses)
      throw ParameterError("label " + std::to_string(l) + " out of range");
    ++counts[static_cast<std::size_t>(l)];
  }
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
    throw DegenerateError("svm needs at least 2 classes present");

  SvmModel m;
  m.dim = dim;
  std::vector<int> y(labels.size());
  for (std::size_t c = 0; c < nClasses; ++c)
  {
    for (std::size_t i = 0; i < labels.size(); ++i)
      y[i] = labels[i] == static_cast<int>(c) ? 1 : -1;
    auto w = pegasos_binary(x, y, cfg);
    for (auto& v : w) v = static_cast<double>(static_cast<float>(v));
    m.bias.push_back(w[dim]);
    w.pop_back();
    m.weights.push_back(std::move(w));
  }
  return m;
}

} // namespace ttsound
