#pragma once

// Six-block CNN over 64x7 log-mel windows: conv3x3 -> batchnorm -> ReLU per
// block, 2x2 pooling after blocks 2 and 4, global average pool, dense head.

#include "cnn_layers.hpp"
#include "error.hpp"
#include "matrix.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ttsound {

struct CnnArchitecture
{
  std::size_t inputH{64};
  std::size_t inputW{7};
  std::vector<std::size_t> channels{8, 16, 32, 32, 64, 64}; // output channels per block
  std::vector<std::size_t> poolAfter{2, 4};                 // 1-based block numbers
  std::size_t nClasses{13};

  bool pools_after(std::size_t block) const
  {
    for (auto p : poolAfter)
      if (p == block + 1) return true;
    return false;
  }

  /// (h, w) entering each block, then the shape entering the head.
  std::vector<std::pair<std::size_t, std::size_t>> spatial_trace() const
  {
    std::vector<std::pair<std::size_t, std::size_t>> t{{inputH, inputW}};
    std::size_t h = inputH, w = inputW;
    for (std::size_t b = 0; b < channels.size(); ++b)
    {
      if (pools_after(b))
      {
        h /= 2;
        w /= 2;
      }
      t.emplace_back(h, w);
    }
    return t;
  }

  void validate() const
  {
    if (channels.empty()) throw ShapeError("cnn needs at least one block");
    if (inputH == 0 || inputW == 0) throw ShapeError("cnn input shape must be positive");
    if (nClasses < 2) throw ShapeError("cnn needs at least 2 classes");
    for (auto c : channels)
      if (c == 0) throw ShapeError("cnn channel count must be positive");
    for (auto p : poolAfter)
      if (p < 1 || p > channels.size()) throw ShapeError("pool position out of range");
    for (auto [h, w] : spatial_trace())
      if (h == 0 || w == 0) throw ShapeError("pooling collapses the feature map to zero size");
  }

  std::string descriptor() const
  {
    std::ostringstream os;
    os << "input=" << inputH << "x" << inputW << ";channels=";
    for (std::size_t i = 0; i < channels.size(); ++i) os << (i ? "," : "") << channels[i];
    os << ";pool=";
    for (std::size_t i = 0; i < poolAfter.size(); ++i) os << (i ? "," : "") << poolAfter[i];
    os << ";classes=" << nClasses;
    return os.str();
  }

  static CnnArchitecture parse(const std::string& text)
  {
    auto list = [](const std::string& v) {
      std::vector<std::size_t> out;
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoul(item));
      return out;
    };
    CnnArchitecture a;
    bool input = false, chans = false, pool = false, classes = false;
    try
    {
      std::stringstream ss(text);
      std::string field;
      while (std::getline(ss, field, ';'))
      {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw FormatError("bad architecture field '" + field + "'");
        const auto key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "input")
        {
          const auto x = value.find('x');
          if (x == std::string::npos) throw FormatError("bad input shape '" + value + "'");
          a.inputH = std::stoul(value.substr(0, x));
          a.inputW = std::stoul(value.substr(x + 1));
          input = true;
        }
        else if (key == "channels")
        {
          a.channels = list(value);
          chans = true;
        }
        else if (key == "pool")
        {
          a.poolAfter = list(value);
          pool = true;
        }
        else if (key == "classes")
        {
          a.nClasses = std::stoul(value);
          classes = true;
        }
      }
    }
    catch (const std::logic_error&)
    {
      throw FormatError("bad architecture descriptor '" + text + "'");
    }
    if (!(input && chans && pool && classes))
      throw FormatError("incomplete architecture descriptor '" + text + "'");
    try
    {
      a.validate();
    }
    catch (const ShapeError& e)
    {
      throw FormatError(std::string("architecture descriptor: ") + e.what());
    }
    return a;
  }

  bool operator==(const CnnArchitecture&) const = default;
};

struct ConvBlock
{
  std::size_t inCh{0}, outCh{0};
  std::vector<double> weight; // [out][in][3][3]
  std::vector<double> bias;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> runningMean;
  std::vector<double> runningVar;
};

struct CnnModel
{
  CnnArchitecture arch;
  std::vector<ConvBlock> blocks;
  std::vector<double> denseW; // [classes][last channels]
  std::vector<double> denseB;

  CnnModel() : CnnModel(CnnArchitecture{}) {}

  /// Zero weights, gamma 1, running variance 1.
  explicit CnnModel(CnnArchitecture a) : arch(std::move(a))
  {
    arch.validate();
    std::size_t in = 1;
    for (auto out : arch.channels)
    {
      ConvBlock b;
      b.inCh = in;
      b.outCh = out;
      b.weight.assign(out * in * 9, 0.0);
      b.bias.assign(out, 0.0);
      b.gamma.assign(out, 1.0);
      b.beta.assign(out, 0.0);
      b.runningMean.assign(out, 0.0);
      b.runningVar.assign(out, 1.0);
      blocks.push_back(std::move(b));
      in = out;
    }
    denseW.assign(arch.nClasses * in, 0.0);
    denseB.assign(arch.nClasses, 0.0);
  }

  std::size_t last_channels() const { return arch.channels.back(); }
  std::size_t num_classes() const { return arch.nClasses; }

  /// Trainable parameters in a fixed order.
  std::vector<std::vector<double>*> parameters()
  {
    std::vector<std::vector<double>*> p;
    for (auto& b : blocks)
      for (auto* v : {&b.weight, &b.bias, &b.gamma, &b.beta}) p.push_back(v);
    p.push_back(&denseW);
    p.push_back(&denseB);
    return p;
  }

  /// Every stored tensor (parameters and running statistics) with its name.
  std::vector<std::pair<std::string, std::vector<double>*>> named_tensors()
  {
    std::vector<std::pair<std::string, std::vector<double>*>> t;
    for (std::size_t i = 0; i < blocks.size(); ++i)
    {
      auto& b = blocks[i];
      const std::string p = "block" + std::to_string(i + 1) + ".";
      t.emplace_back(p + "conv.weight", &b.weight);
      t.emplace_back(p + "conv.bias", &b.bias);
      t.emplace_back(p + "bn.gamma", &b.gamma);
      t.emplace_back(p + "bn.beta", &b.beta);
      t.emplace_back(p + "bn.running_mean", &b.runningMean);
      t.emplace_back(p + "bn.running_var", &b.runningVar);
    }
    t.emplace_back("dense.weight", &denseW);
    t.emplace_back("dense.bias", &denseB);
    return t;
  }

  std::size_t parameter_count()
  {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->size();
    return n;
  }
};

/// He-normal conv and dense weights; biases zero.
inline void he_initialize(CnnModel& m, std::mt19937_64& rng)
{
  for (auto& b : m.blocks)
  {
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / static_cast<double>(b.inCh * 9)));
    for (auto& w : b.weight) w = g(rng);
    std::fill(b.bias.begin(), b.bias.end(), 0.0);
  }
  std::normal_distribution<double> g(0.0, std::sqrt(2.0 / static_cast<double>(m.last_channels())));
  for (auto& w : m.denseW) w = g(rng);
  std::fill(m.denseB.begin(), m.denseB.end(), 0.0);
}

/// Rounds every stored tensor to float32 precision.
inline void quantize_float32(CnnModel& m)
{
  for (auto& [name, t] : m.named_tensors())
    for (auto& v : *t) v = static_cast<double>(static_cast<float>(v));
}

enum class CnnMode { Train, Infer };

struct BlockCache
{
  cnn::Tensor input;
  cnn::BatchNormCache bn;
  cnn::Tensor activation; // after ReLU
  cnn::PoolCache pool;
};

struct CnnCache
{
  std::vector<BlockCache> blocks;
  cnn::Tensor headInput; // input to global average pooling
  std::vector<double> pooled;
};

inline cnn::Tensor to_tensor(const CnnArchitecture& arch, std::span<const Matrix> mels)
{
  cnn::Tensor t(mels.size(), 1, arch.inputH, arch.inputW);
  for (std::size_t i = 0; i < mels.size(); ++i)
  {
    const auto& m = mels[i];
    if (m.rows != arch.inputH || m.cols != arch.inputW)
      throw ShapeError("cnn input must be " + std::to_string(arch.inputH) + "x" +
                       std::to_string(arch.inputW) + ", got " + std::to_string(m.rows) + "x" +
                       std::to_string(m.cols));
    std::copy(m.data.begin(), m.data.end(), t.plane(i, 0));
  }
  return t;
}

namespace detail {

inline void check_finite(std::span<const double> v, std::size_t layer)
{
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError("non-finite activation in layer " + std::to_string(layer));
}

} // namespace detail

/// Logits [n x classes]. Train mode uses batch statistics and fills `cache`.
inline std::vector<double> cnn_logits(const CnnModel& m, cnn::Tensor x, CnnMode mode,
                                      CnnCache* cache = nullptr)
{
  if (x.c != 1 || x.h != m.arch.inputH || x.w != m.arch.inputW)
    throw ShapeError("cnn input tensor has the wrong shape");
  if (x.n == 0) return {};
  if (mode == CnnMode::Train && x.n < 2)
    throw BatchError("train-mode forward needs a batch of at least 2");
  if (cache) cache->blocks.assign(m.blocks.size(), {});

  for (std::size_t i = 0; i < m.blocks.size(); ++i)
  {
    const auto& b = m.blocks[i];
    auto conv = cnn::conv3x3_forward(x, b.weight, b.bias, b.outCh);
    cnn::Tensor y;
    if (mode == CnnMode::Train)
    {
      cnn::BatchNormCache bn;
      y = cnn::batchnorm_train_forward(conv, b.gamma, b.beta, bn);
      if (cache) cache->blocks[i].bn = std::move(bn);
    }
    else
    {
      y = cnn::batchnorm_infer_forward(conv, b.gamma, b.beta, b.runningMean, b.runningVar);
    }
    detail::check_finite(y.v, i + 1);
    cnn::relu_inplace(y);
    if (cache)
    {
      cache->blocks[i].input = std::move(x);
      cache->blocks[i].activation = y;
    }
    if (m.arch.pools_after(i))
    {
      cnn::PoolCache pc;
      x = cnn::maxpool2_forward(y, pc);
      if (cache) cache->blocks[i].pool = std::move(pc);
    }
    else
    {
      x = std::move(y);
    }
  }
  auto pooled = cnn::gap_forward(x);
  auto logits =
      cnn::dense_forward(pooled, x.n, x.c, m.denseW, m.denseB, m.arch.nClasses);
  detail::check_finite(logits, m.blocks.size() + 1);
  if (cache)
  {
    cache->headInput = std::move(x);
    cache->pooled = std::move(pooled);
  }
  return logits;
}

/// Class probabilities for a batch.
inline std::vector<std::vector<double>> cnn_forward(const CnnModel& m, std::span<const Matrix> mels,
                                                    CnnMode mode = CnnMode::Infer)
{
  if (mode == CnnMode::Train && mels.size() < 2)
    throw BatchError("train-mode forward needs a batch of at least 2");
  std::vector<std::vector<double>> out;
  out.reserve(mels.size());
  const std::size_t k = m.arch.nClasses;
  // Infer mode is per-sample, so chunking does not change results.
  const std::size_t chunk = mode == CnnMode::Infer ? 64 : mels.size();
  for (std::size_t start = 0; start < mels.size(); start += chunk)
  {
    const auto len = std::min(chunk, mels.size() - start);
    auto logits = cnn_logits(m, to_tensor(m.arch, mels.subspan(start, len)), mode);
    for (std::size_t i = 0; i < len; ++i)
      out.push_back(cnn::softmax(std::span<const double>(logits).subspan(i * k, k)));
  }
  return out;
}

inline std::vector<double> cnn_forward(const CnnModel& m, const Matrix& mel,
                                       CnnMode mode = CnnMode::Infer)
{
  if (mode == CnnMode::Train) throw BatchError("train-mode forward needs a batch of at least 2");
  return cnn_forward(m, std::span<const Matrix>(&mel, 1), mode).front();
}

struct CnnLossGrad
{
  double loss{0.0};
  CnnModel grad; // same layout as the model; running statistics unused
  CnnCache cache;
};

/// Mean cross-entropy over the batch and its gradient for every parameter.
inline CnnLossGrad cnn_loss_and_grad(const CnnModel& m, std::span<const Matrix> mels,
                                     std::span<const int> labels)
{
  if (mels.size() != labels.size()) throw ShapeError("mels and labels differ in length");
  if (mels.size() < 2) throw BatchError("loss needs a batch of at least 2");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= m.arch.nClasses)
      throw ParameterError("label " + std::to_string(l) + " out of range");

  CnnLossGrad r{0.0, CnnModel(m.arch), {}};
  const std::size_t n = mels.size(), k = m.arch.nClasses;
  auto logits = cnn_logits(m, to_tensor(m.arch, mels), CnnMode::Train, &r.cache);
  auto ce = cnn::softmax_cross_entropy(logits, n, k, labels);
  r.loss = ce.loss;

  const auto& head = r.cache.headInput;
  auto dense = cnn::dense_backward(r.cache.pooled, n, head.c, m.denseW, ce.dLogits, k);
  r.grad.denseW = std::move(dense.dWeight);
  r.grad.denseB = std::move(dense.dBias);
  auto d = cnn::gap_backward(dense.dIn, n, head.c, head.h, head.w);

  for (std::size_t i = m.blocks.size(); i-- > 0;)
  {
    const auto& b = m.blocks[i];
    auto& bc = r.cache.blocks[i];
    if (m.arch.pools_after(i)) d = cnn::maxpool2_backward(d, bc.pool);
    d = cnn::relu_backward(d, bc.activation);
    auto bn = cnn::batchnorm_train_backward(d, bc.bn, b.gamma);
    auto conv = cnn::conv3x3_backward(bc.input, b.weight, bn.dX, i > 0);
    auto& g = r.grad.blocks[i];
    g.weight = std::move(conv.dWeight);
    g.bias = std::move(conv.dBias);
    g.gamma = std::move(bn.dGamma);
    g.beta = std::move(bn.dBeta);
    d = std::move(conv.dIn);
  }
  return r;
}

struct TrainConfig
{
  std::size_t epochs{100};
  std::size_t batchSize{32};
  double learningRate{1e-3};
  std::uint64_t seed{0};
  std::size_t patience{10};
  double bnMomentum{0.9};

  void validate() const
  {
    if (epochs == 0) throw ParameterError("epochs must be positive");
    if (batchSize < 2) throw ParameterError("batch_size must be at least 2");
    if (!(learningRate > 0.0) || !std::isfinite(learningRate))
      throw ParameterError("learning_rate must be positive");
    if (patience == 0) throw ParameterError("patience must be positive");
    if (!(bnMomentum >= 0.0 && bnMomentum < 1.0))
      throw ParameterError("batchnorm momentum must be in [0, 1)");
  }
};

struct TrainLogRow
{
  std::size_t epoch{0};
  double trainLoss{0.0};
  double valLoss{0.0};
  double valAcc{0.0};
};

inline std::string train_log_csv(std::span<const TrainLogRow> log)
{
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& r : log)
    os << r.epoch << "," << r.trainLoss << "," << r.valLoss << "," << r.valAcc << "\n";
  return os.str();
}

struct CnnTrainResult
{
  CnnModel model;
  std::vector<TrainLogRow> log;
  std::size_t bestEpoch{0};
};

/// Mean loss and accuracy in infer mode.
inline std::pair<double, double> cnn_evaluate(const CnnModel& m, std::span<const Matrix> mels,
                                              std::span<const int> labels)
{
  if (mels.empty()) return {0.0, 0.0};
  auto probs = cnn_forward(m, mels);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i)
  {
    const auto& p = probs[i];
    loss -= std::log(std::max(p[static_cast<std::size_t>(labels[i])],
                              std::numeric_limits<double>::min()));
    const auto best = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    if (best == labels[i]) ++correct;
  }
  return {loss / static_cast<double>(probs.size()),
          static_cast<double>(correct) / static_cast<double>(probs.size())};
}

/// Adam on mini-batches with early stopping on validation loss (training loss
/// when the validation set is empty). Returns the best snapshot, rounded to
/// float32 so it survives serialization unchanged.
inline CnnTrainResult cnn_train(std::span<const Matrix> trainX, std::span<const int> trainY,
                                std::span<const Matrix> valX, std::span<const int> valY,
                                const TrainConfig& cfg, CnnArchitecture arch = {})
{
  cfg.validate();
  arch.validate();
  if (trainX.size() != trainY.size() || valX.size() != valY.size())
    throw ShapeError("features and labels differ in length");
  if (trainX.size() < 2) throw BatchError("training needs at least 2 samples");
  for (auto y : trainY)
    if (y < 0 || static_cast<std::size_t>(y) >= arch.nClasses)
      throw ParameterError("label " + std::to_string(y) + " out of range");
  for (auto y : valY)
    if (y < 0 || static_cast<std::size_t>(y) >= arch.nClasses)
      throw ParameterError("label " + std::to_string(y) + " out of range");

  std::mt19937_64 rng(cfg.seed);
  CnnModel model(arch);
  he_initialize(model, rng);

  auto params = model.parameters();
  std::vector<std::vector<double>> mom(params.size()), vel(params.size());
  for (std::size_t p = 0; p < params.size(); ++p)
  {
    mom[p].assign(params[p]->size(), 0.0);
    vel[p].assign(params[p]->size(), 0.0);
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t step = 0;

  CnnTrainResult result;
  result.model = model;
  double bestLoss = std::numeric_limits<double>::infinity();
  std::size_t sinceBest = 0;

  std::vector<std::size_t> order(trainX.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Matrix> batchX;
  std::vector<int> batchY;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch)
  {
    std::shuffle(order.begin(), order.end(), rng);
    // A trailing batch of one joins the previous batch.
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t s = 0; s < order.size(); s += cfg.batchSize)
      batches.emplace_back(s, std::min(order.size(), s + cfg.batchSize));
    if (batches.size() > 1 && batches.back().second - batches.back().first == 1)
    {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }

    double lossSum = 0.0;
    for (auto [s, e] : batches)
    {
      batchX.clear();
      batchY.clear();
      for (std::size_t i = s; i < e; ++i)
      {
        batchX.push_back(trainX[order[i]]);
        batchY.push_back(trainY[order[i]]);
      }
      auto lg = cnn_loss_and_grad(model, batchX, batchY);
      lossSum += lg.loss * static_cast<double>(e - s);

      // Running statistics use the unbiased batch variance.
      const double count = static_cast<double>(batchX.size());
      for (std::size_t b = 0; b < model.blocks.size(); ++b)
      {
        auto& blk = model.blocks[b];
        const auto& bn = lg.cache.blocks[b].bn;
        const double cells =
            count * static_cast<double>(lg.cache.blocks[b].activation.h *
                                        lg.cache.blocks[b].activation.w);
        for (std::size_t c = 0; c < blk.outCh; ++c)
        {
          const double unbiased = bn.var[c] * cells / std::max(cells - 1.0, 1.0);
          blk.runningMean[c] = cfg.bnMomentum * blk.runningMean[c] + (1.0 - cfg.bnMomentum) * bn.mean[c];
          blk.runningVar[c] = cfg.bnMomentum * blk.runningVar[c] + (1.0 - cfg.bnMomentum) * unbiased;
        }
      }

      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      auto grads = lg.grad.parameters();
      for (std::size_t p = 0; p < params.size(); ++p)
      {
        auto& w = *params[p];
        const auto& g = *grads[p];
        auto& mp = mom[p];
        auto& vp = vel[p];
        for (std::size_t j = 0; j < w.size(); ++j)
        {
          mp[j] = beta1 * mp[j] + (1.0 - beta1) * g[j];
          vp[j] = beta2 * vp[j] + (1.0 - beta2) * g[j] * g[j];
          w[j] -= cfg.learningRate * (mp[j] / c1) / (std::sqrt(vp[j] / c2) + eps);
        }
      }
    }

    TrainLogRow row;
    row.epoch = epoch;
    row.trainLoss = lossSum / static_cast<double>(order.size());
    if (!valX.empty())
    {
      auto [vl, va] = cnn_evaluate(model, valX, valY);
      row.valLoss = vl;
      row.valAcc = va;
    }
    else
    {
      row.valLoss = row.trainLoss;
    }
    if (!std::isfinite(row.trainLoss) || !std::isfinite(row.valLoss))
      throw NumericError("training diverged at epoch " + std::to_string(epoch));
    result.log.push_back(row);

    if (row.valLoss < bestLoss)
    {
      bestLoss = row.valLoss;
      result.model = model;
      result.bestEpoch = epoch;
      sinceBest = 0;
    }
    else if (++sinceBest >= cfg.patience)
    {
      break;
    }
  }
  quantize_float32(result.model);
  return result;
}

} // namespace ttsound
