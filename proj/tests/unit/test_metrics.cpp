#include <cmath>
#include <filesystem>
#include <random>

#include "asabf/errors.hpp"
#include "asabf/fft.hpp"
#include "asabf/metrics.hpp"
#include "asabf/rng.hpp"
#include "asabf/scene.hpp"
#include "doctest.h"

using namespace asabf;

namespace {

std::vector<double> random_signal(std::int64_t n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = gauss(rng);
  return x;
}

// Component of `x` orthogonal (in the LS sense) to all <= filter_len-sample
// shifts of ref, via the same normal equations sdr_tif uses.
std::vector<double> orthogonalize(const std::vector<double>& x,
                                  const std::vector<double>& ref,
                                  int filter_len) {
  // residual = x - best FIR fit; reuse sdr_tif indirectly by direct solve
  const int L = static_cast<int>(ref.size());
  std::vector<double> residual = x;
  // exact LS fit against the shifted copies, then subtract it
  std::size_t n = 1;
  while (n < static_cast<std::size_t>(2 * L)) n <<= 1;
  std::vector<std::complex<double>> fr(n), fx(n);
  for (int i = 0; i < L; ++i) {
    fr[i] = {ref[i], 0.0};
    fx[i] = {x[i], 0.0};
  }
  fft::transform(fr, false);
  fft::transform(fx, false);
  std::vector<std::complex<double>> acf(n), ccf(n);
  for (std::size_t i = 0; i < n; ++i) {
    acf[i] = fr[i] * std::conj(fr[i]);
    ccf[i] = fx[i] * std::conj(fr[i]);
  }
  fft::transform(acf, true);
  fft::transform(ccf, true);
  // solve by Gauss elimination on the small Toeplitz system
  const int K = filter_len;
  std::vector<double> R(K * K), rhs(K);
  for (int i = 0; i < K; ++i) {
    rhs[i] = ccf[i].real();
    for (int j = 0; j < K; ++j) R[i * K + j] = acf[std::abs(i - j)].real();
  }
  for (int i = 0; i < K; ++i) R[i * K + i] += 1e-10 * acf[0].real();
  std::vector<double> g(rhs);
  // naive Gaussian elimination
  for (int col = 0; col < K; ++col) {
    int piv = col;
    for (int r = col + 1; r < K; ++r) {
      if (std::abs(R[r * K + col]) > std::abs(R[piv * K + col])) piv = r;
    }
    for (int j = 0; j < K; ++j) std::swap(R[col * K + j], R[piv * K + j]);
    std::swap(g[col], g[piv]);
    const double d = R[col * K + col];
    for (int j = 0; j < K; ++j) R[col * K + j] /= d;
    g[col] /= d;
    for (int r = 0; r < K; ++r) {
      if (r == col) continue;
      const double f = R[r * K + col];
      if (f == 0.0) continue;
      for (int j = 0; j < K; ++j) R[r * K + j] -= f * R[col * K + j];
      g[r] -= f * g[col];
    }
  }
  for (int i = 0; i < K; ++i) {
    for (int nn = 0; nn + i < L; ++nn) residual[nn + i] -= g[i] * ref[nn];
  }
  return residual;
}

}  // namespace

TEST_CASE("si_snr reference cases") {
  auto ref = random_signal(4000, 1);

  // scaled copy hits the cap
  std::vector<double> half(ref);
  for (auto& v : half) v *= 0.5;
  CHECK(metrics::si_snr(half, ref) == doctest::Approx(60.0));

  // orthogonal additive noise at 10 dB
  auto noise = random_signal(4000, 2);
  const double xy = std::inner_product(ref.begin(), ref.end(), noise.begin(), 0.0);
  const double rr = std::inner_product(ref.begin(), ref.end(), ref.begin(), 0.0);
  for (std::size_t i = 0; i < noise.size(); ++i) {
    noise[i] -= xy / rr * ref[i];  // exact orthogonalization
  }
  const double nn = std::inner_product(noise.begin(), noise.end(), noise.begin(), 0.0);
  const double target = std::sqrt(0.1 * rr / nn);
  std::vector<double> est(ref);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += target * noise[i];
  CHECK(metrics::si_snr(est, ref) == doctest::Approx(10.0).epsilon(1e-6));

  // orthogonal estimate floors out
  CHECK(metrics::si_snr(noise, ref) == doctest::Approx(-60.0));

  CHECK_THROWS_AS(metrics::si_snr(ref, std::vector<double>(4000, 0.0)),
                  InputError);
}

TEST_CASE("sdr_tif absorbs delays and FIR distortions") {
  auto ref = random_signal(6000, 3);

  // pure delay inside the filter span
  std::vector<double> delayed(ref.size(), 0.0);
  for (std::size_t i = 100; i < ref.size(); ++i) delayed[i] = ref[i - 100];
  CHECK(metrics::sdr_tif(delayed, ref, 512) >= 59.0);

  // random 64-tap filter
  auto g0 = random_signal(64, 4);
  auto filtered_full = fft::convolve(ref, g0);
  std::vector<double> filtered(filtered_full.begin(),
                               filtered_full.begin() + ref.size());
  CHECK(metrics::sdr_tif(filtered, ref, 512) >= 59.0);

  // global scaling never changes the value
  std::vector<double> scaled(filtered);
  for (auto& v : scaled) v *= 0.125;
  CHECK(metrics::sdr_tif(scaled, ref, 512) ==
        doctest::Approx(metrics::sdr_tif(filtered, ref, 512)).epsilon(1e-9));
}

TEST_CASE("sdr_tif with orthogonal noise at 10 dB reads 10 dB") {
  auto ref = random_signal(6000, 5);
  auto raw_noise = random_signal(6000, 6);
  auto noise = orthogonalize(raw_noise, ref, 128);
  const double rr = std::inner_product(ref.begin(), ref.end(), ref.begin(), 0.0);
  const double nn = std::inner_product(noise.begin(), noise.end(), noise.begin(), 0.0);
  const double scale = std::sqrt(0.1 * rr / nn);
  std::vector<double> est(ref);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += scale * noise[i];
  CHECK(metrics::sdr_tif(est, ref, 128) == doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("a longer filter can only improve the fit") {
  auto ref = random_signal(5000, 7);
  auto est = random_signal(5000, 8);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] = 0.4 * est[i] + ref[i];
  const double one_tap = metrics::sdr_tif(est, ref, 1);
  const double full = metrics::sdr_tif(est, ref, 512);
  CHECK(full >= one_tap - 1e-6);
}

TEST_CASE("sdr_tif input validation") {
  auto ref = random_signal(600, 9);
  CHECK_THROWS_AS(metrics::sdr_tif(ref, std::vector<double>(599, 0.0), 64),
                  DimensionError);
  CHECK_THROWS_AS(
      metrics::sdr_tif(std::vector<double>(600, 0.0), std::vector<double>(600, 0.0),
                       64),
      NumericError);
}

TEST_CASE("report aggregation matches its rows") {
  metrics::MetricReport r;
  r.rows = {{"u0", "identity", 10.0, 12.0, 5.0, 0.0},
            {"u1", "identity", 14.0, 16.0, 5.0, 0.0},
            {"u0", "permuted", 9.0, 11.0, 5.0, 0.0}};
  r.finalize();
  REQUIRE(r.summaries.size() == 2);
  CHECK(r.summaries[0].condition == "identity");
  CHECK(r.summaries[0].count == 2);
  CHECK(r.summaries[0].si_snr_mean == doctest::Approx(12.0));
  CHECK(r.summaries[0].sdr_mean == doctest::Approx(14.0));
  CHECK(r.summaries[1].count == 1);
}
