#include <ttsound/filter.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

using namespace ttsound;

namespace {

const FilterSpec kDefault{5, 10000.0, FilterKind::HighPass, 44100};

/// Analytic magnitude (dB) of a digital Butterworth high-pass designed by the
/// pre-warped bilinear transform.
double analytic_highpass_db(double f, double fc, int order, int fs)
{
  const double w = std::tan(std::numbers::pi * f / fs);
  const double wc = std::tan(std::numbers::pi * fc / fs);
  return 10.0 * std::log10(1.0 / (1.0 + std::pow(wc / w, 2.0 * order)));
}

} // namespace

TEST(ButterworthDesign, MinusThreeDbAtCutoff)
{
  auto c = design_butterworth_highpass(kDefault);
  EXPECT_NEAR(c.magnitude_db(10000.0, 44100), -3.0103, 0.05);
  EXPECT_EQ(c.sections.size(), 3u);
}

TEST(ButterworthDesign, RejectsDc)
{
  auto c = design_butterworth_highpass(kDefault);
  EXPECT_LT(std::abs(c.response(0.0)), 1e-5); // below -100 dB
}

TEST(ButterworthDesign, FiveKilohertzMatchesPrewarpedAnalyticMagnitude)
{
  auto c = design_butterworth_highpass(kDefault);
  const double oracle = analytic_highpass_db(5000.0, 10000.0, 5, 44100);
  EXPECT_NEAR(oracle, -36.5748, 1e-4); // frozen from the analytic formula
  EXPECT_NEAR(c.magnitude_db(5000.0, 44100), oracle, 1e-6);
  for (double f : {1000.0, 3000.0, 7000.0, 9000.0, 12000.0, 16000.0, 21000.0})
    EXPECT_NEAR(c.magnitude_db(f, 44100), analytic_highpass_db(f, 10000.0, 5, 44100), 1e-6) << f;
}

TEST(ButterworthDesign, StopbandAndPassbandLimits)
{
  auto c = design_butterworth_highpass(kDefault);
  for (double f = 1.0; f <= 2500.0; f += 1.0) ASSERT_LE(c.magnitude_db(f, 44100), -60.0) << f;
  for (double f = 18000.0; f < 22050.0; f += 1.0) ASSERT_GE(c.magnitude_db(f, 44100), -0.5) << f;
}

TEST(ButterworthDesign, RandomSpecsAreStableWithCutoffAtMinusThreeDb)
{
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> order(1, 8);
  std::uniform_real_distribution<double> cutoff(0.01, 0.49);
  for (int trial = 0; trial < 500; ++trial)
  {
    FilterSpec spec{order(rng), 0.0, trial % 2 ? FilterKind::HighPass : FilterKind::LowPass, 44100};
    spec.cutoffHz = cutoff(rng) * 44100;
    auto c = design_butterworth(spec);
    ASSERT_TRUE(c.stable()) << spec.order << " " << spec.cutoffHz;
    for (const auto& s : c.sections)
    {
      // Pole magnitudes, checked directly rather than via the triangle test.
      auto disc = std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2);
      auto p1 = (-s.a1 + std::sqrt(disc)) / 2.0, p2 = (-s.a1 - std::sqrt(disc)) / 2.0;
      ASSERT_LT(std::abs(p1), 1.0);
      ASSERT_LT(std::abs(p2), 1.0);
    }
    ASSERT_NEAR(c.magnitude_db(spec.cutoffHz, 44100), -3.0103, 0.05);
  }
}

TEST(ButterworthDesign, RejectsInvalidSpecs)
{
  EXPECT_THROW(design_butterworth({5, 22050.0, FilterKind::HighPass, 44100}), ParameterError);
  EXPECT_THROW(design_butterworth({5, 30000.0, FilterKind::HighPass, 44100}), ParameterError);
  EXPECT_THROW(design_butterworth({5, 0.0, FilterKind::HighPass, 44100}), ParameterError);
  EXPECT_THROW(design_butterworth({0, 1000.0, FilterKind::HighPass, 44100}), ParameterError);
}

TEST(FilterForward, ZeroInZeroOut)
{
  auto c = design_butterworth_highpass(kDefault);
  auto y = filter_forward(c, std::vector<double>(1000, 0.0));
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(FilterForward, ScalingIsExact)
{
  auto c = design_butterworth_highpass(kDefault);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::vector<double> x(2000), x2(2000);
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    x[i] = g(rng);
    x2[i] = 2.0 * x[i];
  }
  auto y = filter_forward(c, x), y2 = filter_forward(c, x2);
  ASSERT_EQ(y.size(), x.size());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y2[i], 2.0 * y[i]);
}

TEST(FilterForward, ImpulseResponseSpectrumMatchesAnalyticResponse)
{
  auto c = design_butterworth_highpass(kDefault);
  const std::size_t n = 4096;
  std::vector<double> impulse(n, 0.0);
  impulse[0] = 1.0;
  auto h = filter_forward(c, impulse);

  double sq = 0.0;
  for (std::size_t k = 0; k < n; k += 7)
  {
    const double omega = 2.0 * std::numbers::pi * static_cast<double>(k) / n;
    std::complex<double> dft = 0.0;
    for (std::size_t i = 0; i < n; ++i) dft += h[i] * std::polar(1.0, -omega * static_cast<double>(i));
    sq += std::norm(dft - c.response(omega));
  }
  EXPECT_LT(std::sqrt(sq / static_cast<double>((n + 6) / 7)), 1e-6);
}

TEST(FilterZeroPhase, SymmetricInputGivesSymmetricOutput)
{
  auto c = design_butterworth_highpass(kDefault);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (std::size_t n : {2001u, 4000u})
  {
    // Windowed random burst, mirrored about the centre.
    std::vector<double> x(n, 0.0);
    const double centre = (static_cast<double>(n) - 1.0) / 2.0;
    for (std::size_t i = 0; i < n / 2; ++i)
    {
      const double d = (centre - static_cast<double>(i)) / 200.0;
      x[i] = x[n - 1 - i] = g(rng) * std::exp(-d * d);
    }
    auto y = filter_zero_phase(c, x);
    ASSERT_EQ(y.size(), n);
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(y[i], y[n - 1 - i], 1e-9) << i;
  }
}

TEST(FilterZeroPhase, ClickCorrelationPeaksAtLagZero)
{
  auto c = design_butterworth_highpass(kDefault);
  // Band-limited click: Gaussian-windowed 12 kHz burst.
  const std::size_t n = 4410;
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
  {
    const double t = (static_cast<double>(i) - 2000.0) / 44100.0;
    x[i] = std::exp(-std::pow(t / 2e-4, 2)) * std::cos(2.0 * std::numbers::pi * 12000.0 * t);
  }
  auto y = filter_zero_phase(c, x);
  int bestLag = 0;
  double best = -1e300;
  for (int lag = -50; lag <= 50; ++lag)
  {
    double acc = 0.0;
    for (std::size_t i = 100; i + 100 < n; ++i)
      acc += x[i] * y[static_cast<std::size_t>(static_cast<int>(i) + lag)];
    if (acc > best)
    {
      best = acc;
      bestLag = lag;
    }
  }
  EXPECT_EQ(bestLag, 0);
}

TEST(FilterZeroPhase, PassbandGainIsSquaredMagnitude)
{
  auto c = design_butterworth_highpass(kDefault);
  const std::size_t n = 44100;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = std::sin(2.0 * std::numbers::pi * 15000.0 * static_cast<double>(i) / 44100.0);
  auto y = filter_zero_phase(c, x);
  // Measure the steady-state amplitude by projection away from the edges.
  double re = 0.0, im = 0.0;
  for (std::size_t i = 5000; i < n - 5000; ++i)
  {
    const double ph = 2.0 * std::numbers::pi * 15000.0 * static_cast<double>(i) / 44100.0;
    re += y[i] * std::sin(ph);
    im += y[i] * std::cos(ph);
  }
  const double amp = 2.0 * std::hypot(re, im) / static_cast<double>(n - 10000);
  const double expectedDb = 2.0 * c.magnitude_db(15000.0, 44100);
  EXPECT_NEAR(20.0 * std::log10(amp), expectedDb, 0.1);
  EXPECT_LT(std::abs(std::atan2(im, re)), 1e-3); // no phase shift
}

TEST(FilterZeroPhase, TooShortInputThrows)
{
  auto c = design_butterworth_highpass(kDefault);
  EXPECT_THROW(filter_zero_phase(c, std::vector<double>(30, 0.0)), LengthError);
  EXPECT_NO_THROW(filter_zero_phase(c, std::vector<double>(31, 0.0)));
}
