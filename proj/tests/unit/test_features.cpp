#include <cmath>
#include <complex>
#include <random>

#include "asabf/dsp.hpp"
#include "asabf/errors.hpp"
#include "asabf/features.hpp"
#include "asabf/rng.hpp"
#include "doctest.h"

using namespace asabf;
using features::MaskKind;

namespace {

Spectrogram random_spec(int C, int F, int T, std::uint64_t seed,
                        double scale = 1.0) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, scale);
  Spectrogram s;
  s.channels = C;
  s.bins = F;
  s.frames = T;
  s.frame_len = 2 * (F - 1);
  s.hop = std::max(1, (F - 1) / 2);
  s.num_samples = static_cast<std::int64_t>(T) * s.hop;
  s.data.resize(static_cast<std::size_t>(C) * F * T);
  for (auto& v : s.data) v = {gauss(rng), gauss(rng)};
  return s;
}

Spectrogram permute_channels(const Spectrogram& s,
                             const std::vector<int>& perm) {
  Spectrogram out = s;
  for (int c = 0; c < s.channels; ++c) {
    for (int f = 0; f < s.bins; ++f) {
      for (int t = 0; t < s.frames; ++t) {
        out.at(c, f, t) = s.at(perm[c], f, t);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("wiener masks are complementary and respect dominance") {
  Spectrogram speech = random_spec(2, 5, 4, 1);
  Spectrogram noise = random_spec(2, 5, 4, 2);
  auto masks = features::oracle_mask(speech, noise, MaskKind::kWiener);
  const auto& mx = masks.speech.storage();
  const auto& mn = masks.noise.storage();
  for (std::size_t i = 0; i < mx.size(); ++i) {
    CHECK(mx[i] >= 0.0);
    CHECK(mx[i] <= 1.0);
    CHECK(mx[i] + mn[i] == doctest::Approx(1.0).epsilon(1e-12));
  }

  // noise = 0 -> speech mask 1 (on non-silent bins)
  Spectrogram zero = noise;
  for (auto& v : zero.data) v = {0.0, 0.0};
  auto m1 = features::oracle_mask(speech, zero, MaskKind::kWiener);
  for (std::size_t i = 0; i < m1.speech.storage().size(); ++i) {
    CHECK(m1.speech.storage()[i] == doctest::Approx(1.0).epsilon(1e-10));
  }

  // equal magnitudes -> both masks 1/2
  auto m2 = features::oracle_mask(speech, speech, MaskKind::kWiener);
  for (std::size_t i = 0; i < m2.speech.storage().size(); ++i) {
    CHECK(m2.speech.storage()[i] == doctest::Approx(0.5).epsilon(1e-10));
  }
}

TEST_CASE("phase-sensitive masks stay in range") {
  Spectrogram speech = random_spec(2, 6, 5, 3);
  Spectrogram noise = random_spec(2, 6, 5, 4);
  auto masks = features::oracle_mask(speech, noise, MaskKind::kPhaseSensitive);
  for (double v : masks.speech.storage()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("average_masks means over channels and is permutation-invariant") {
  features::ChannelMasks cm;
  cm.speech = Tensor::from_real({2, 1, 1}, {0.2, 0.4});
  cm.noise = Tensor::from_real({2, 1, 1}, {0.8, 0.6});
  MaskPair pair = features::average_masks(cm, 0.0);
  CHECK(pair.speech.at(0) == doctest::Approx(0.3));
  CHECK(pair.noise.at(0) == doctest::Approx(0.7));

  features::ChannelMasks swapped;
  swapped.speech = Tensor::from_real({2, 1, 1}, {0.4, 0.2});
  swapped.noise = Tensor::from_real({2, 1, 1}, {0.6, 0.8});
  MaskPair pair2 = features::average_masks(swapped, 0.0);
  CHECK(pair2.speech.at(0) == pair.speech.at(0));

  // C = 1 is the identity (up to the floor)
  features::ChannelMasks one;
  one.speech = Tensor::from_real({1, 1, 2}, {0.25, 0.75});
  one.noise = Tensor::from_real({1, 1, 2}, {0.75, 0.25});
  MaskPair p1 = features::average_masks(one, 0.0);
  CHECK(p1.speech.at(0) == 0.25);
  CHECK(p1.speech.at(1) == 0.75);

  // the floor clips
  features::ChannelMasks tiny;
  tiny.speech = Tensor::from_real({1, 1, 1}, {1e-9});
  tiny.noise = Tensor::from_real({1, 1, 1}, {1.0});
  MaskPair pf = features::average_masks(tiny);
  CHECK(pf.speech.at(0) == 1e-4);
}

TEST_CASE("iscm of a single channel is the masked power") {
  Spectrogram s;
  s.channels = 1;
  s.bins = 1;
  s.frames = 1;
  s.frame_len = 0;
  s.hop = 0;
  s.data = {{3.0, 4.0}};
  MaskPair masks{Tensor::from_real({1, 1}, {0.5}),
                 Tensor::from_real({1, 1}, {0.5})};
  IscmSequence iscm = features::compute_iscm(s, masks);
  CHECK(iscm.speech.cat(0).real() == doctest::Approx(12.5));
  CHECK(iscm.speech.cat(0).imag() == doctest::Approx(0.0));
}

TEST_CASE("iscm outer-product structure") {
  // y = (1, i), m = 1 -> [[1, -i], [i, 1]]
  Spectrogram s;
  s.channels = 2;
  s.bins = 1;
  s.frames = 1;
  s.data = {{1.0, 0.0}, {0.0, 1.0}};
  MaskPair masks{Tensor::from_real({1, 1}, {1.0}),
                 Tensor::from_real({1, 1}, {1.0})};
  IscmSequence iscm = features::compute_iscm(s, masks);
  CHECK(std::abs(iscm.speech.cat(0) - std::complex<double>(1, 0)) < 1e-15);
  CHECK(std::abs(iscm.speech.cat(1) - std::complex<double>(0, -1)) < 1e-15);
  CHECK(std::abs(iscm.speech.cat(2) - std::complex<double>(0, 1)) < 1e-15);
  CHECK(std::abs(iscm.speech.cat(3) - std::complex<double>(1, 0)) < 1e-15);
}

TEST_CASE("iscm slices are Hermitian PSD and wiener ISCMs sum to y y^H") {
  Spectrogram mix = random_spec(3, 4, 5, 5);
  Spectrogram speech = random_spec(3, 4, 5, 6);
  Spectrogram noise = mix;  // noise := mix - speech so that mix = speech+noise
  for (std::size_t i = 0; i < mix.data.size(); ++i) {
    noise.data[i] = mix.data[i] - speech.data[i];
  }
  auto pair = features::average_masks(
      features::oracle_mask(speech, noise, MaskKind::kWiener), 0.0);
  IscmSequence iscm = features::compute_iscm(mix, pair);

  const int C = 3;
  for (int f = 0; f < 4; ++f) {
    for (int t = 0; t < 5; ++t) {
      const std::int64_t base = (static_cast<std::int64_t>(f) * 5 + t) * C * C;
      // Hermitian + complementarity
      for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) {
          const auto x_ij = iscm.speech.cat(base + i * C + j);
          const auto x_ji = iscm.speech.cat(base + j * C + i);
          CHECK(std::abs(x_ij - std::conj(x_ji)) < 1e-12);
          const auto n_ij = iscm.noise.cat(base + i * C + j);
          const auto y_i = mix.at(i, f, t);
          const auto y_j = mix.at(j, f, t);
          CHECK(std::abs(x_ij + n_ij - y_i * std::conj(y_j)) < 1e-12);
        }
      }
      // PSD via the Rayleigh quotient of a probe vector
      std::complex<double> quad(0.0, 0.0);
      for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) {
          quad += std::conj(std::complex<double>(1.0, i * 0.5)) *
                  iscm.speech.cat(base + i * C + j) *
                  std::complex<double>(1.0, j * 0.5);
        }
      }
      CHECK(quad.real() > -1e-12);
      CHECK(std::abs(quad.imag()) < 1e-12);
    }
  }
}

TEST_CASE("iscm feature dimensions and layout") {
  Spectrogram mix = random_spec(3, 4, 2, 7);
  MaskPair pair{Tensor::full({4, 2}, 0.5), Tensor::full({4, 2}, 0.5)};
  IscmSequence iscm = features::compute_iscm(mix, pair);
  Tensor feats = features::iscm_features(iscm);
  CHECK(feats.shape() == Shape{2, 144});  // 4 F C^2 = 4*4*9

  // real-valued ISCMs put zeros in the imaginary half
  Spectrogram real_mix = mix;
  for (auto& v : real_mix.data) v = {v.real(), 0.0};
  Tensor real_feats =
      features::iscm_features(features::compute_iscm(real_mix, pair));
  // layout per (component, bin): C^2 re then C^2 im
  for (int t = 0; t < 2; ++t) {
    for (int block = 0; block < 8; ++block) {  // 2 components x 4 bins
      for (int k = 0; k < 9; ++k) {
        CHECK(real_feats.at(t * 144 + block * 18 + 9 + k) == 0.0);
      }
    }
  }

  // flat ISCM features are NOT channel-permutation-equivariant
  Tensor flat_a = features::iscm_features(iscm);
  Tensor flat_b = features::iscm_features(
      features::compute_iscm(permute_channels(mix, {2, 0, 1}), pair));
  double diff = 0.0;
  for (std::int64_t i = 0; i < flat_a.numel(); ++i) {
    diff = std::max(diff, std::abs(flat_a.at(i) - flat_b.at(i)));
  }
  CHECK(diff > 1e-3);
}

TEST_CASE("mag-ipd features: single channel and invariances") {
  // C = 1: sigma == nu, so delta = 0 -> (|nu|^2, 1, 0)
  Spectrogram one = random_spec(1, 3, 2, 8);
  MaskPair masks{Tensor::full({3, 2}, 0.7), Tensor::full({3, 2}, 0.3)};
  Tensor feats = features::mag_ipd_features(one, masks);
  CHECK(feats.shape() == Shape{1, 2, 18});
  for (int t = 0; t < 2; ++t) {
    for (int v = 0; v < 2; ++v) {
      for (int f = 0; f < 3; ++f) {
        const double m = v == 0 ? 0.7 : 0.3;
        const double mag2 = std::norm(m * one.at(0, f, t));
        CHECK(feats.at(t * 18 + v * 9 + 3 * f + 0) ==
              doctest::Approx(mag2).epsilon(1e-12));
        CHECK(feats.at(t * 18 + v * 9 + 3 * f + 1) == doctest::Approx(1.0));
        CHECK(feats.at(t * 18 + v * 9 + 3 * f + 2) ==
              doctest::Approx(0.0).epsilon(1e-12));
      }
    }
  }

  // global phase invariance
  Spectrogram mix = random_spec(3, 4, 3, 9);
  MaskPair m2{Tensor::full({4, 3}, 0.6), Tensor::full({4, 3}, 0.4)};
  Tensor base = features::mag_ipd_features(mix, m2);
  Spectrogram rotated = mix;
  const std::complex<double> phase = std::polar(1.0, 1.234);
  for (auto& v : rotated.data) v *= phase;
  Tensor rot = features::mag_ipd_features(rotated, m2);
  for (std::int64_t i = 0; i < base.numel(); ++i) {
    CHECK(rot.at(i) == doctest::Approx(base.at(i)).epsilon(1e-9));
  }

  // channel permutation permutes the streams and nothing else
  std::vector<int> perm{1, 2, 0};
  Tensor permuted =
      features::mag_ipd_features(permute_channels(mix, perm), m2);
  for (int c = 0; c < 3; ++c) {
    for (std::int64_t i = 0; i < 3 * 24; ++i) {
      CHECK(permuted.at(c * 3 * 24 + i) ==
            doctest::Approx(base.at(perm[c] * 3 * 24 + i)).epsilon(1e-12));
    }
  }

  // equal channels give zero phase difference everywhere
  Spectrogram equal = random_spec(3, 4, 3, 10);
  for (int c = 1; c < 3; ++c) {
    for (int f = 0; f < 4; ++f) {
      for (int t = 0; t < 3; ++t) equal.at(c, f, t) = equal.at(0, f, t);
    }
  }
  Tensor eq = features::mag_ipd_features(equal, m2);
  for (int c = 0; c < 3; ++c) {
    for (int t = 0; t < 3; ++t) {
      for (int k = 0; k < 8; ++k) {
        CHECK(eq.at((c * 3 + t) * 24 + 3 * k + 1) == doctest::Approx(1.0));
        CHECK(eq.at((c * 3 + t) * 24 + 3 * k + 2) ==
              doctest::Approx(0.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("concat_streams flattens channel-major and round trips") {
  Spectrogram mix = random_spec(2, 3, 4, 11);
  MaskPair masks{Tensor::full({3, 4}, 0.5), Tensor::full({3, 4}, 0.5)};
  Tensor streams = features::mag_ipd_features(mix, masks);
  Tensor flat = features::concat_streams(streams);
  CHECK(flat.shape() == Shape{4, 36});  // 6 F C = 6*3*2
  for (int c = 0; c < 2; ++c) {
    for (int t = 0; t < 4; ++t) {
      for (int k = 0; k < 18; ++k) {
        CHECK(flat.at(t * 36 + c * 18 + k) ==
              streams.at((c * 4 + t) * 18 + k));
      }
    }
  }
  // C = 1: identical to the single stream
  Spectrogram one = random_spec(1, 3, 4, 12);
  Tensor s1 = features::mag_ipd_features(one, masks);
  Tensor f1 = features::concat_streams(s1);
  CHECK(f1.storage() == s1.storage());
}
