#include <cmath>
#include <complex>
#include <random>

#include "asabf/beamform.hpp"
#include "asabf/errors.hpp"
#include "asabf/ops.hpp"
#include "asabf/rng.hpp"
#include "asabf/scene.hpp"
#include "doctest.h"

using namespace asabf;

namespace {

IscmSequence random_iscms(int F, int T, int C, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::int64_t numel = static_cast<std::int64_t>(F) * T * C * C;
  std::vector<double> sx(2 * numel), sn(2 * numel);
  // rank-1 outer products, like the real ISCMs
  for (int f = 0; f < F; ++f) {
    for (int t = 0; t < T; ++t) {
      std::vector<std::complex<double>> y(C);
      for (auto& v : y) v = {gauss(rng), gauss(rng)};
      const double mx = 0.2 + 0.6 * std::abs(gauss(rng));
      const double mn = 0.2 + 0.6 * std::abs(gauss(rng));
      const std::int64_t base = (static_cast<std::int64_t>(f) * T + t) * C * C;
      for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) {
          const auto o = y[i] * std::conj(y[j]);
          sx[base + i * C + j] = mx * o.real();
          sx[numel + base + i * C + j] = mx * o.imag();
          sn[base + i * C + j] = mn * o.real();
          sn[numel + base + i * C + j] = mn * o.imag();
        }
      }
    }
  }
  IscmSequence out;
  out.bins = F;
  out.frames = T;
  out.channels = C;
  out.speech =
      Tensor::from_storage({F, T, C, C}, Dtype::kComplex128, std::move(sx));
  out.noise =
      Tensor::from_storage({F, T, C, C}, Dtype::kComplex128, std::move(sn));
  return out;
}

std::vector<std::complex<double>> random_hpd(int C, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::complex<double>> b(C * C);
  for (auto& v : b) v = {gauss(rng), gauss(rng)};
  std::vector<std::complex<double>> out(C * C, {0.0, 0.0});
  for (int i = 0; i < C; ++i) {
    for (int j = 0; j < C; ++j) {
      for (int k = 0; k < C; ++k) {
        out[i * C + j] += b[i * C + k] * std::conj(b[j * C + k]);
      }
    }
    out[i * C + i] += 0.5;
  }
  return out;
}

}  // namespace

TEST_CASE("forgetting factor for the 1.6 s time constant") {
  CHECK(beamform::forgetting_factor(0.016, 1.6) ==
        doctest::Approx(0.990049834).epsilon(1e-6));
}

TEST_CASE("aggregate_scm with one-hot rows selects the instantaneous SCM") {
  IscmSequence iscms = random_iscms(2, 4, 2, 1);
  std::vector<double> eye(16, 0.0);
  for (int t = 0; t < 4; ++t) eye[t * 4 + t] = 1.0;
  AttentionWeights attn{Tensor::from_real({4, 4}, eye),
                        Tensor::from_real({4, 4}, eye)};
  ScmSequence scm = beamform::aggregate_scm(iscms, attn);
  for (std::int64_t i = 0; i < scm.speech.numel(); ++i) {
    CHECK(std::abs(scm.speech.cat(i) - iscms.speech.cat(i)) < 1e-12);
  }
}

TEST_CASE("aggregate_scm with uniform rows is the constant time-average") {
  IscmSequence iscms = random_iscms(3, 5, 2, 2);
  ScmSequence scm =
      beamform::aggregate_scm(iscms, beamform::uniform_attention(5));
  for (int f = 0; f < 3; ++f) {
    for (int k = 0; k < 4; ++k) {
      std::complex<double> mean(0.0, 0.0);
      for (int t = 0; t < 5; ++t) {
        mean += iscms.speech.cat((f * 5 + t) * 4 + k);
      }
      mean /= 5.0;
      for (int t = 0; t < 5; ++t) {
        CHECK(std::abs(scm.speech.cat((f * 5 + t) * 4 + k) - mean) < 1e-12);
      }
    }
  }
}

TEST_CASE("aggregate_scm two-frame hand case") {
  // a_0 = [0.25, 0.75], Psi_1 = [[1,0],[0,0]], Psi_2 = [[0,0],[0,2]]
  std::vector<std::complex<double>> data(8, {0.0, 0.0});
  data[0] = {1.0, 0.0};  // f0 t0: [[1,0],[0,0]]
  data[7] = {2.0, 0.0};  // f0 t1: [[0,0],[0,2]]
  IscmSequence iscms;
  iscms.bins = 1;
  iscms.frames = 2;
  iscms.channels = 2;
  iscms.speech = Tensor::from_complex({1, 2, 2, 2}, data);
  iscms.noise = iscms.speech;
  AttentionWeights attn{Tensor::from_real({2, 2}, {0.25, 0.75, 0.5, 0.5}),
                        Tensor::from_real({2, 2}, {0.25, 0.75, 0.5, 0.5})};
  ScmSequence scm = beamform::aggregate_scm(iscms, attn);
  CHECK(scm.speech.cat(0).real() == doctest::Approx(0.25));
  CHECK(scm.speech.cat(1).real() == doctest::Approx(0.0));
  CHECK(scm.speech.cat(3).real() == doctest::Approx(1.5));
}

TEST_CASE("aggregation preserves Hermitian structure and PSD") {
  IscmSequence iscms = random_iscms(2, 6, 3, 3);
  auto rng = make_rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> rows(36);
  for (int t = 0; t < 6; ++t) {
    double s = 0.0;
    for (int tau = 0; tau < 6; ++tau) {
      rows[t * 6 + tau] = unit(rng);
      s += rows[t * 6 + tau];
    }
    for (int tau = 0; tau < 6; ++tau) rows[t * 6 + tau] /= s;
  }
  Tensor a = Tensor::from_real({6, 6}, rows);
  ScmSequence scm = beamform::aggregate_scm(iscms, AttentionWeights{a, a});
  for (int f = 0; f < 2; ++f) {
    for (int t = 0; t < 6; ++t) {
      const std::int64_t base = (f * 6 + t) * 9;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          CHECK(std::abs(scm.noise.cat(base + i * 3 + j) -
                         std::conj(scm.noise.cat(base + j * 3 + i))) < 1e-12);
        }
      }
      std::complex<double> quad(0.0, 0.0);
      const std::complex<double> probe[3] = {{1.0, 0.2}, {-0.4, 1.0}, {0.3, 0.0}};
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          quad += std::conj(probe[i]) * scm.noise.cat(base + i * 3 + j) * probe[j];
        }
      }
      CHECK(quad.real() > -1e-12);
    }
  }
}

TEST_CASE("recursive smoothing equals aggregation with exponential rows") {
  const int F = 3, T = 50, C = 2;
  IscmSequence iscms = random_iscms(F, T, C, 5);
  const double lambda = 0.93;
  ScmSequence rec = beamform::recursive_scm(iscms, lambda);

  std::vector<double> rows(static_cast<std::size_t>(T) * T, 0.0);
  for (int t = 0; t < T; ++t) {
    rows[t * T + 0] = std::pow(lambda, t);
    for (int tau = 1; tau <= t; ++tau) {
      rows[t * T + tau] = (1.0 - lambda) * std::pow(lambda, t - tau);
    }
  }
  Tensor a = Tensor::from_real({T, T}, rows);
  ScmSequence agg = beamform::aggregate_scm(iscms, AttentionWeights{a, a});

  double max_err = 0.0;
  for (std::int64_t i = 0; i < rec.speech.numel(); ++i) {
    max_err = std::max(max_err,
                       std::abs(rec.speech.cat(i) - agg.speech.cat(i)));
    max_err = std::max(max_err,
                       std::abs(rec.noise.cat(i) - agg.noise.cat(i)));
  }
  CHECK(max_err < 1e-10);
}

TEST_CASE("recursive smoothing fixed point and small-lambda limit") {
  const int F = 1, T = 8, C = 2;
  IscmSequence iscms = random_iscms(F, 1, C, 6);
  // constant over time
  std::vector<std::complex<double>> rep;
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < C * C; ++k) rep.push_back(iscms.speech.cat(k));
  }
  IscmSequence constant;
  constant.bins = F;
  constant.frames = T;
  constant.channels = C;
  constant.speech = Tensor::from_complex({F, T, C, C}, rep);
  constant.noise = constant.speech;
  ScmSequence rec = beamform::recursive_scm(constant, 0.7);
  for (std::int64_t i = 0; i < rec.speech.numel(); ++i) {
    CHECK(std::abs(rec.speech.cat(i) - constant.speech.cat(i)) < 1e-12);
  }

  // lambda -> 0 tracks the instantaneous input
  IscmSequence moving = random_iscms(2, 6, 2, 7);
  ScmSequence fast = beamform::recursive_scm(moving, 1e-9);
  for (std::int64_t i = 0; i < fast.speech.numel(); ++i) {
    CHECK(std::abs(fast.speech.cat(i) - moving.speech.cat(i)) < 1e-6);
  }

  CHECK_THROWS_AS(beamform::recursive_scm(moving, 0.0), InputError);
  CHECK_THROWS_AS(beamform::recursive_scm(moving, 1.0), InputError);
}

TEST_CASE("mvdr passthrough for a single channel") {
  beamform::MvdrResult r = beamform::mvdr_weights({{4.0, 0.0}}, {{2.0, 0.0}},
                                                  1, 0);
  CHECK(r.w[0].real() == doctest::Approx(1.0));
  CHECK(r.w[0].imag() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(!r.fallback);
}

TEST_CASE("mvdr hand case: white noise, target at channel 0") {
  // Phi_n = I, Phi_x = h h^H with h = (1, 0): w = (1, 0)
  std::vector<std::complex<double>> phi_n = {
      {1, 0}, {0, 0}, {0, 0}, {1, 0}};
  std::vector<std::complex<double>> phi_x = {
      {1, 0}, {0, 0}, {0, 0}, {0, 0}};
  beamform::MvdrResult r = beamform::mvdr_weights(phi_x, phi_n, 2, 0);
  CHECK(std::abs(r.w[0] - std::complex<double>(1.0, 0.0)) < 1e-6);
  CHECK(std::abs(r.w[1]) < 1e-9);
}

TEST_CASE("mvdr distortionless identity and scaling invariance") {
  auto rng = make_rng(8);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int C = 2; C <= 6; ++C) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::complex<double>> h(C);
      for (auto& v : h) v = {gauss(rng), gauss(rng)};
      std::vector<std::complex<double>> phi_x(C * C);
      for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) phi_x[i * C + j] = h[i] * std::conj(h[j]);
      }
      auto phi_n = random_hpd(C, rng);
      const int ref = trial % C;
      beamform::MvdrOptions opts;
      opts.loading = 0.0;  // exact identity needs the unloaded equation
      opts.loading_floor = 0.0;
      beamform::MvdrResult r = beamform::mvdr_weights(phi_x, phi_n, C, ref, opts);
      std::complex<double> whh(0.0, 0.0);
      for (int i = 0; i < C; ++i) whh += std::conj(r.w[i]) * h[i];
      CHECK(std::abs(whh - h[ref]) < 1e-8);

      // scaling Phi_x leaves w unchanged
      std::vector<std::complex<double>> scaled = phi_x;
      for (auto& v : scaled) v *= 7.25;
      beamform::MvdrResult r2 =
          beamform::mvdr_weights(scaled, phi_n, C, ref, opts);
      for (int i = 0; i < C; ++i) CHECK(std::abs(r2.w[i] - r.w[i]) < 1e-10);
    }
  }
}

TEST_CASE("mvdr rejects non-Hermitian inputs and flags degenerate traces") {
  std::vector<std::complex<double>> bad = {{1, 0}, {1, 0}, {0, 0}, {1, 0}};
  std::vector<std::complex<double>> eye = {{1, 0}, {0, 0}, {0, 0}, {1, 0}};
  CHECK_THROWS_AS(beamform::mvdr_weights(bad, eye, 2, 0), ContractError);

  // zero speech SCM falls back to the selection vector
  std::vector<std::complex<double>> zero(4, {0.0, 0.0});
  beamform::MvdrResult r = beamform::mvdr_weights(zero, eye, 2, 1);
  CHECK(r.fallback);
  CHECK(r.w[1] == std::complex<double>(1.0, 0.0));
  CHECK(r.w[0] == std::complex<double>(0.0, 0.0));
}

TEST_CASE("batched mvdr matches the per-matrix route") {
  auto rng = make_rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int B = 12, C = 3;
  std::vector<std::complex<double>> px_all, pn_all;
  for (int b = 0; b < B; ++b) {
    auto pn = random_hpd(C, rng);
    std::vector<std::complex<double>> h(C);
    for (auto& v : h) v = {gauss(rng), gauss(rng)};
    for (int i = 0; i < C; ++i) {
      for (int j = 0; j < C; ++j) px_all.push_back(h[i] * std::conj(h[j]));
    }
    pn_all.insert(pn_all.end(), pn.begin(), pn.end());
  }
  Tensor px = Tensor::from_complex({B, C, C}, px_all);
  Tensor pn = Tensor::from_complex({B, C, C}, pn_all);
  std::vector<unsigned char> fallback;
  Tensor w = beamform::mvdr_weights_t(px, pn, 1, {}, &fallback);
  CHECK(w.shape() == Shape{B, C, 1});
  for (int b = 0; b < B; ++b) {
    std::vector<std::complex<double>> mx(px_all.begin() + b * C * C,
                                         px_all.begin() + (b + 1) * C * C);
    std::vector<std::complex<double>> mn(pn_all.begin() + b * C * C,
                                         pn_all.begin() + (b + 1) * C * C);
    beamform::MvdrResult r = beamform::mvdr_weights(mx, mn, C, 1);
    CHECK(static_cast<bool>(fallback[b]) == r.fallback);
    for (int c = 0; c < C; ++c) {
      CHECK(std::abs(w.cat(b * C + c) - r.w[c]) < 1e-9);
    }
  }
}

TEST_CASE("apply_beamformer with the selection vector copies the reference") {
  auto rng = make_rng(10);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Spectrogram spec;
  spec.channels = 3;
  spec.bins = 4;
  spec.frames = 5;
  spec.frame_len = 6;
  spec.hop = 2;
  spec.num_samples = 8;
  spec.data.resize(60);
  for (auto& v : spec.data) v = {gauss(rng), gauss(rng)};

  const int ref = 1;
  std::vector<std::complex<double>> w(4 * 5 * 3, {0.0, 0.0});
  for (int i = 0; i < 4 * 5; ++i) w[i * 3 + ref] = {1.0, 0.0};
  BeamformerWeights bw{Tensor::from_complex({4, 5, 3}, w)};
  Spectrogram out = beamform::apply_beamformer(spec, bw);
  for (int f = 0; f < 4; ++f) {
    for (int t = 0; t < 5; ++t) {
      CHECK(std::abs(out.at(0, f, t) - spec.at(ref, f, t)) < 1e-15);
    }
  }
}

TEST_CASE("enhance on silence is silent with full fallback") {
  AudioBuffer mixture, speech, noise;
  mixture.sample_rate = speech.sample_rate = noise.sample_rate = 8000.0;
  mixture.samples.assign(2, std::vector<double>(2000, 0.0));
  speech.samples = mixture.samples;
  noise.samples = mixture.samples;

  beamform::MaskSource masks;
  masks.speech_image = &speech;
  masks.noise_image = &noise;
  beamform::EnhanceOptions opts;
  opts.mode = beamform::ScmMode::kUniform;
  opts.frame_len = 256;
  opts.hop = 64;
  beamform::EnhanceResult r = beamform::enhance(mixture, masks, opts);
  CHECK(r.diagnostics.fallback_rate == doctest::Approx(1.0));
  for (double v : r.audio.samples[0]) CHECK(v == 0.0);
}

TEST_CASE("boxcar attention rows are normalized windows") {
  AttentionWeights a = beamform::boxcar_attention(10, 5);
  for (int t = 0; t < 10; ++t) {
    double s = 0.0;
    for (int tau = 0; tau < 10; ++tau) s += a.speech.at(t * 10 + tau);
    CHECK(s == doctest::Approx(1.0));
  }
  CHECK(a.speech.at(0) == doctest::Approx(1.0 / 3.0));  // frames 0..2
  CHECK(a.speech.at(5 * 10 + 5) == doctest::Approx(1.0 / 5.0));
}
