#pragma once

// Forward and backward passes for the layer types of the bounce CNN. All
// tensors are NCHW, double precision.

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace ttsound::cnn {

struct Tensor
{
  std::size_t n{0}, c{0}, h{0}, w{0};
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), v(n_ * c_ * h_ * w_, fill)
  {}

  double& at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x)
  {
    return v[((i * c + ch) * h + y) * w + x];
  }
  double at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) const
  {
    return v[((i * c + ch) * h + y) * w + x];
  }
  double* plane(std::size_t i, std::size_t ch) { return v.data() + (i * c + ch) * h * w; }
  const double* plane(std::size_t i, std::size_t ch) const
  {
    return v.data() + (i * c + ch) * h * w;
  }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

inline constexpr double kBatchNormEps = 1e-5;

// ---------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero "same" padding, lowered to a matrix
// product over im2col columns spanning the whole batch.
// weight layout: [out][in][3][3]

namespace detail {

/// Dot product with four fixed partial sums, so it vectorizes without
/// reassociation and stays deterministic.
inline double dot(const double* a, const double* b, std::size_t n)
{
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
  {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

/// cols[(ic*9 + ky*3 + kx) * N*H*W + i*H*W + y*W + x] = in(i, ic, y+ky-1, x+kx-1)
inline std::vector<double> im2col3x3(const Tensor& in)
{
  const std::size_t H = in.h, W = in.w, hw = H * W, P = in.n * hw;
  std::vector<double> cols(in.c * 9 * P, 0.0);
  for (std::size_t ic = 0; ic < in.c; ++ic)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx)
      {
        const int dy = ky - 1, dx = kx - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? H - 1 : H;
        const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? W - 1 : W;
        double* row = cols.data() + (ic * 9 + static_cast<std::size_t>(ky * 3 + kx)) * P;
        for (std::size_t i = 0; i < in.n; ++i)
        {
          const double* src = in.plane(i, ic);
          double* dst = row + i * hw;
          for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = x0; x < x1; ++x) dst[y * W + x] = src[(y + dy) * W + x + dx];
        }
      }
  return cols;
}

} // namespace detail

/// Column tile kept cache-resident across output channels.
inline constexpr std::size_t kConvTile = 128;

inline Tensor conv3x3_forward(const Tensor& in, std::span<const double> weight,
                              std::span<const double> bias, std::size_t outCh)
{
  const std::size_t hw = in.h * in.w, P = in.n * hw, K = in.c * 9;
  const auto cols = detail::im2col3x3(in);
  std::vector<double> acc(outCh * P);
  for (std::size_t t0 = 0; t0 < P; t0 += kConvTile)
  {
    const std::size_t t1 = std::min(P, t0 + kConvTile);
    for (std::size_t oc = 0; oc < outCh; ++oc)
    {
      double* a = acc.data() + oc * P;
      std::fill(a + t0, a + t1, bias[oc]);
      for (std::size_t j = 0; j < K; ++j)
      {
        const double w = weight[oc * K + j];
        const double* col = cols.data() + j * P;
        for (std::size_t p = t0; p < t1; ++p) a[p] += w * col[p];
      }
    }
  }
  Tensor out(in.n, outCh, in.h, in.w);
  for (std::size_t oc = 0; oc < outCh; ++oc)
    for (std::size_t i = 0; i < in.n; ++i)
      std::copy(acc.data() + oc * P + i * hw, acc.data() + oc * P + (i + 1) * hw, out.plane(i, oc));
  return out;
}

struct ConvGrads
{
  Tensor dIn;
  std::vector<double> dWeight;
  std::vector<double> dBias;
};

inline ConvGrads conv3x3_backward(const Tensor& in, std::span<const double> weight,
                                  const Tensor& dOut, bool needInputGrad = true)
{
  const std::size_t H = in.h, W = in.w, hw = H * W, P = in.n * hw, K = in.c * 9;
  const std::size_t outCh = dOut.c;
  const auto cols = detail::im2col3x3(in);

  // dOut gathered as [out][N*H*W]
  std::vector<double> d(outCh * P);
  for (std::size_t oc = 0; oc < outCh; ++oc)
    for (std::size_t i = 0; i < in.n; ++i)
      std::copy(dOut.plane(i, oc), dOut.plane(i, oc) + hw, d.data() + oc * P + i * hw);

  ConvGrads g;
  g.dWeight.assign(outCh * K, 0.0);
  g.dBias.assign(outCh, 0.0);
  std::vector<double> dCols(needInputGrad ? K * P : 0, 0.0);
  for (std::size_t t0 = 0; t0 < P; t0 += kConvTile)
  {
    const std::size_t t1 = std::min(P, t0 + kConvTile), len = t1 - t0;
    for (std::size_t oc = 0; oc < outCh; ++oc)
    {
      const double* drow = d.data() + oc * P + t0;
      double sum = 0.0;
      for (std::size_t p = 0; p < len; ++p) sum += drow[p];
      g.dBias[oc] += sum;
      for (std::size_t j = 0; j < K; ++j)
      {
        g.dWeight[oc * K + j] += detail::dot(drow, cols.data() + j * P + t0, len);
        if (needInputGrad)
        {
          const double w = weight[oc * K + j];
          double* dc = dCols.data() + j * P + t0;
          for (std::size_t p = 0; p < len; ++p) dc[p] += w * drow[p];
        }
      }
    }
  }
  if (!needInputGrad) return g;

  g.dIn = Tensor(in.n, in.c, H, W);
  for (std::size_t ic = 0; ic < in.c; ++ic)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx)
      {
        const int dy = ky - 1, dx = kx - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? H - 1 : H;
        const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? W - 1 : W;
        const double* row = dCols.data() + (ic * 9 + static_cast<std::size_t>(ky * 3 + kx)) * P;
        for (std::size_t i = 0; i < in.n; ++i)
        {
          double* dst = g.dIn.plane(i, ic);
          const double* src = row + i * hw;
          for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = x0; x < x1; ++x) dst[(y + dy) * W + x + dx] += src[y * W + x];
        }
      }
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization over (N, H, W) per channel.

struct BatchNormCache
{
  Tensor xhat;
  std::vector<double> mean;
  std::vector<double> var; // biased batch variance
  std::vector<double> invStd;
};

/// Training-mode forward using batch statistics.
inline Tensor batchnorm_train_forward(const Tensor& x, std::span<const double> gamma,
                                      std::span<const double> beta, BatchNormCache& cache,
                                      double eps = kBatchNormEps)
{
  const std::size_t hw = x.h * x.w;
  const double count = static_cast<double>(x.n * hw);
  cache.xhat = Tensor(x.n, x.c, x.h, x.w);
  cache.mean.assign(x.c, 0.0);
  cache.var.assign(x.c, 0.0);
  cache.invStd.assign(x.c, 0.0);
  Tensor y(x.n, x.c, x.h, x.w);
  for (std::size_t ch = 0; ch < x.c; ++ch)
  {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.n; ++i)
    {
      const double* p = x.plane(i, ch);
      for (std::size_t k = 0; k < hw; ++k) mean += p[k];
    }
    mean /= count;
    double var = 0.0;
    for (std::size_t i = 0; i < x.n; ++i)
    {
      const double* p = x.plane(i, ch);
      for (std::size_t k = 0; k < hw; ++k) var += (p[k] - mean) * (p[k] - mean);
    }
    var /= count;
    const double invStd = 1.0 / std::sqrt(var + eps);
    cache.mean[ch] = mean;
    cache.var[ch] = var;
    cache.invStd[ch] = invStd;
    for (std::size_t i = 0; i < x.n; ++i)
    {
      const double* p = x.plane(i, ch);
      double* xh = cache.xhat.plane(i, ch);
      double* out = y.plane(i, ch);
      for (std::size_t k = 0; k < hw; ++k)
      {
        xh[k] = (p[k] - mean) * invStd;
        out[k] = gamma[ch] * xh[k] + beta[ch];
      }
    }
  }
  return y;
}

struct BatchNormGrads
{
  Tensor dX;
  std::vector<double> dGamma;
  std::vector<double> dBeta;
};

inline BatchNormGrads batchnorm_train_backward(const Tensor& dY, const BatchNormCache& cache,
                                               std::span<const double> gamma)
{
  const std::size_t hw = dY.h * dY.w;
  const double count = static_cast<double>(dY.n * hw);
  BatchNormGrads g;
  g.dX = Tensor(dY.n, dY.c, dY.h, dY.w);
  g.dGamma.assign(dY.c, 0.0);
  g.dBeta.assign(dY.c, 0.0);
  for (std::size_t ch = 0; ch < dY.c; ++ch)
  {
    double sumD = 0.0, sumDX = 0.0;
    for (std::size_t i = 0; i < dY.n; ++i)
    {
      const double* d = dY.plane(i, ch);
      const double* xh = cache.xhat.plane(i, ch);
      for (std::size_t k = 0; k < hw; ++k)
      {
        sumD += d[k];
        sumDX += d[k] * xh[k];
      }
    }
    g.dBeta[ch] = sumD;
    g.dGamma[ch] = sumDX;
    const double scale = gamma[ch] * cache.invStd[ch] / count;
    for (std::size_t i = 0; i < dY.n; ++i)
    {
      const double* d = dY.plane(i, ch);
      const double* xh = cache.xhat.plane(i, ch);
      double* dx = g.dX.plane(i, ch);
      for (std::size_t k = 0; k < hw; ++k) dx[k] = scale * (count * d[k] - sumD - xh[k] * sumDX);
    }
  }
  return g;
}

inline Tensor batchnorm_infer_forward(const Tensor& x, std::span<const double> gamma,
                                      std::span<const double> beta,
                                      std::span<const double> runningMean,
                                      std::span<const double> runningVar,
                                      double eps = kBatchNormEps)
{
  const std::size_t hw = x.h * x.w;
  Tensor y(x.n, x.c, x.h, x.w);
  for (std::size_t ch = 0; ch < x.c; ++ch)
  {
    const double scale = gamma[ch] / std::sqrt(runningVar[ch] + eps);
    const double shift = beta[ch] - runningMean[ch] * scale;
    for (std::size_t i = 0; i < x.n; ++i)
    {
      const double* p = x.plane(i, ch);
      double* out = y.plane(i, ch);
      for (std::size_t k = 0; k < hw; ++k) out[k] = p[k] * scale + shift;
    }
  }
  return y;
}

// ---------------------------------------------------------------------------

inline void relu_inplace(Tensor& x)
{
  for (auto& v : x.v) v = v > 0.0 ? v : 0.0;
}

/// dX = dY where the forward output was positive.
inline Tensor relu_backward(const Tensor& dY, const Tensor& forwardOut)
{
  Tensor dX(dY.n, dY.c, dY.h, dY.w);
  for (std::size_t k = 0; k < dY.v.size(); ++k) dX.v[k] = forwardOut.v[k] > 0.0 ? dY.v[k] : 0.0;
  return dX;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2, floor (a trailing odd row/column is dropped).

struct PoolCache
{
  std::vector<std::size_t> argmax; // flat input index per output element
  std::size_t inH{0}, inW{0};
};

inline Tensor maxpool2_forward(const Tensor& x, PoolCache& cache)
{
  const std::size_t oh = x.h / 2, ow = x.w / 2;
  Tensor y(x.n, x.c, oh, ow);
  cache.argmax.assign(y.v.size(), 0);
  cache.inH = x.h;
  cache.inW = x.w;
  std::size_t o = 0;
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t ch = 0; ch < x.c; ++ch)
    {
      const std::size_t base = (i * x.c + ch) * x.h * x.w;
      for (std::size_t yy = 0; yy < oh; ++yy)
        for (std::size_t xx = 0; xx < ow; ++xx, ++o)
        {
          std::size_t best = base + (2 * yy) * x.w + 2 * xx;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
            {
              const std::size_t idx = base + (2 * yy + dy) * x.w + 2 * xx + dx;
              if (x.v[idx] > x.v[best]) best = idx;
            }
          y.v[o] = x.v[best];
          cache.argmax[o] = best;
        }
    }
  return y;
}

inline Tensor maxpool2_backward(const Tensor& dY, const PoolCache& cache)
{
  Tensor dX(dY.n, dY.c, cache.inH, cache.inW);
  for (std::size_t o = 0; o < dY.v.size(); ++o) dX.v[cache.argmax[o]] += dY.v[o];
  return dX;
}

// ---------------------------------------------------------------------------
// Global average pooling: [N, C, H, W] -> [N, C]

inline std::vector<double> gap_forward(const Tensor& x)
{
  const std::size_t hw = x.h * x.w;
  std::vector<double> out(x.n * x.c, 0.0);
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t ch = 0; ch < x.c; ++ch)
    {
      const double* p = x.plane(i, ch);
      double acc = 0.0;
      for (std::size_t k = 0; k < hw; ++k) acc += p[k];
      out[i * x.c + ch] = acc / static_cast<double>(hw);
    }
  return out;
}

inline Tensor gap_backward(std::span<const double> dOut, std::size_t n, std::size_t c,
                           std::size_t h, std::size_t w)
{
  Tensor dX(n, c, h, w);
  const double inv = 1.0 / static_cast<double>(h * w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
    {
      double* p = dX.plane(i, ch);
      std::fill(p, p + h * w, dOut[i * c + ch] * inv);
    }
  return dX;
}

// ---------------------------------------------------------------------------
// Dense: out[i][k] = sum_j W[k][j] in[i][j] + b[k]

inline std::vector<double> dense_forward(std::span<const double> in, std::size_t n,
                                         std::size_t inDim, std::span<const double> weight,
                                         std::span<const double> bias, std::size_t outDim)
{
  std::vector<double> out(n * outDim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < outDim; ++k)
    {
      double acc = bias[k];
      for (std::size_t j = 0; j < inDim; ++j) acc += weight[k * inDim + j] * in[i * inDim + j];
      out[i * outDim + k] = acc;
    }
  return out;
}

struct DenseGrads
{
  std::vector<double> dIn;
  std::vector<double> dWeight;
  std::vector<double> dBias;
};

inline DenseGrads dense_backward(std::span<const double> in, std::size_t n, std::size_t inDim,
                                 std::span<const double> weight, std::span<const double> dOut,
                                 std::size_t outDim)
{
  DenseGrads g;
  g.dIn.assign(n * inDim, 0.0);
  g.dWeight.assign(outDim * inDim, 0.0);
  g.dBias.assign(outDim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < outDim; ++k)
    {
      const double d = dOut[i * outDim + k];
      g.dBias[k] += d;
      for (std::size_t j = 0; j < inDim; ++j)
      {
        g.dWeight[k * inDim + j] += d * in[i * inDim + j];
        g.dIn[i * inDim + j] += d * weight[k * inDim + j];
      }
    }
  return g;
}

// ---------------------------------------------------------------------------

inline std::vector<double> softmax(std::span<const double> logits)
{
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
  {
    p[k] = std::exp(logits[k] - mx);
    sum += p[k];
  }
  for (auto& v : p) v /= sum;
  return p;
}

struct CrossEntropy
{
  double loss{0.0};                // mean over the batch
  std::vector<double> probs;       // [n x classes]
  std::vector<double> dLogits;     // d(mean loss)/d(logits)
};

inline CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t n,
                                          std::size_t classes, std::span<const int> labels)
{
  CrossEntropy ce;
  ce.probs.resize(n * classes);
  ce.dLogits.resize(n * classes);
  for (std::size_t i = 0; i < n; ++i)
  {
    auto row = logits.subspan(i * classes, classes);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    const double logSum = mx + std::log(sum);
    const auto label = static_cast<std::size_t>(labels[i]);
    ce.loss += logSum - row[label];
    for (std::size_t k = 0; k < classes; ++k)
    {
      const double p = std::exp(row[k] - logSum);
      ce.probs[i * classes + k] = p;
      ce.dLogits[i * classes + k] = (p - (k == label ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  ce.loss /= static_cast<double>(n);
  return ce;
}

} // namespace ttsound::cnn
