#include "asabf/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "asabf/errors.hpp"

namespace asabf {
namespace features {

namespace {

void require_matching(const Spectrogram& a, const Spectrogram& b,
                      const char* what) {
  if (a.channels != b.channels || a.bins != b.bins || a.frames != b.frames) {
    throw DimensionError(std::string(what) + ": spectrogram dims differ");
  }
}

constexpr double kEps = 1e-12;

}  // namespace

ChannelMasks oracle_mask(const Spectrogram& speech_spec,
                         const Spectrogram& noise_spec, MaskKind kind) {
  require_matching(speech_spec, noise_spec, "oracle_mask");
  const int C = speech_spec.channels;
  const int F = speech_spec.bins;
  const int T = speech_spec.frames;
  const std::int64_t n = static_cast<std::int64_t>(C) * F * T;
  std::vector<double> mx(n), mn(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::complex<double> x = speech_spec.data[i];
    const std::complex<double> nz = noise_spec.data[i];
    if (kind == MaskKind::kWiener) {
      const double px = std::norm(x);
      const double pn = std::norm(nz);
      const double den = std::max(px + pn, kEps);
      mx[i] = px / den;
      mn[i] = pn / den;
    } else {
      const std::complex<double> y = x + nz;
      const double ay = std::max(std::abs(y), kEps);
      const double phase_y = std::arg(y);
      mx[i] = std::clamp(
          std::abs(x) * std::cos(std::arg(x) - phase_y) / ay, 0.0, 1.0);
      mn[i] = std::clamp(
          std::abs(nz) * std::cos(std::arg(nz) - phase_y) / ay, 0.0, 1.0);
    }
  }
  ChannelMasks out;
  out.speech = Tensor::from_real({C, F, T}, std::move(mx));
  out.noise = Tensor::from_real({C, F, T}, std::move(mn));
  return out;
}

MaskPair average_masks(const ChannelMasks& per_channel, double floor) {
  const Tensor& s = per_channel.speech;
  if (s.rank() != 3) throw DimensionError("average_masks: [C, F, T] required");
  const std::int64_t C = s.dim(0);
  if (C < 1) throw InputError("average_masks: empty channel axis");
  if (per_channel.noise.shape() != s.shape()) {
    throw DimensionError("average_masks: speech/noise shapes differ");
  }
  const std::int64_t ft = s.dim(1) * s.dim(2);
  auto mean_clip = [&](const Tensor& m) {
    std::vector<double> out(ft, 0.0);
    const auto& v = m.storage();
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t i = 0; i < ft; ++i) out[i] += v[c * ft + i];
    }
    const double inv = 1.0 / static_cast<double>(C);
    for (auto& x : out) x = std::clamp(x * inv, floor, 1.0);
    return Tensor::from_real({s.dim(1), s.dim(2)}, std::move(out));
  };
  return MaskPair{mean_clip(per_channel.speech), mean_clip(per_channel.noise)};
}

IscmSequence compute_iscm(const Spectrogram& mixture, const MaskPair& masks) {
  const int C = mixture.channels;
  const int F = mixture.bins;
  const int T = mixture.frames;
  if (masks.speech.shape() != Shape{F, T} ||
      masks.noise.shape() != Shape{F, T}) {
    throw DimensionError("compute_iscm: masks must be [F, T]");
  }
  const std::int64_t numel = static_cast<std::int64_t>(F) * T * C * C;
  std::vector<double> sx(2 * numel), sn(2 * numel);
  const auto& ms = masks.speech.storage();
  const auto& mn = masks.noise.storage();
  std::vector<std::complex<double>> y(C);
  for (int f = 0; f < F; ++f) {
    for (int t = 0; t < T; ++t) {
      for (int c = 0; c < C; ++c) y[c] = mixture.at(c, f, t);
      const double wx = ms[static_cast<std::size_t>(f) * T + t];
      const double wn = mn[static_cast<std::size_t>(f) * T + t];
      const std::int64_t base =
          (static_cast<std::int64_t>(f) * T + t) * C * C;
      for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) {
          const std::complex<double> outer = y[i] * std::conj(y[j]);
          const std::int64_t k = base + i * C + j;
          sx[k] = wx * outer.real();
          sx[numel + k] = wx * outer.imag();
          sn[k] = wn * outer.real();
          sn[numel + k] = wn * outer.imag();
        }
      }
    }
  }
  IscmSequence out;
  out.bins = F;
  out.frames = T;
  out.channels = C;
  out.speech = Tensor::from_storage({F, T, C, C}, Dtype::kComplex128,
                                    std::move(sx));
  out.noise = Tensor::from_storage({F, T, C, C}, Dtype::kComplex128,
                                   std::move(sn));
  return out;
}

Tensor iscm_features(const IscmSequence& iscm) {
  const int F = iscm.bins, T = iscm.frames, C = iscm.channels;
  const std::int64_t block = 2LL * C * C;     // re+im of one vec
  const std::int64_t dim = 2LL * F * block;   // both components
  std::vector<double> out(static_cast<std::int64_t>(T) * dim);
  const std::int64_t numel = static_cast<std::int64_t>(F) * T * C * C;
  const Tensor* comps[2] = {&iscm.speech, &iscm.noise};
  for (int t = 0; t < T; ++t) {
    double* row = out.data() + static_cast<std::int64_t>(t) * dim;
    for (int v = 0; v < 2; ++v) {
      const double* re = comps[v]->re();
      const double* im = re + numel;
      for (int f = 0; f < F; ++f) {
        const std::int64_t base = (static_cast<std::int64_t>(f) * T + t) * C * C;
        double* dst = row + (static_cast<std::int64_t>(v) * F + f) * block;
        // column-major vec of the row-major [C, C] slice
        std::int64_t k = 0;
        for (int j = 0; j < C; ++j) {
          for (int i = 0; i < C; ++i, ++k) {
            dst[k] = re[base + i * C + j];
            dst[C * C + k] = im[base + i * C + j];
          }
        }
      }
    }
  }
  return Tensor::from_real({T, dim}, std::move(out));
}

Tensor mag_ipd_features(const Spectrogram& mixture, const MaskPair& masks) {
  const int C = mixture.channels;
  const int F = mixture.bins;
  const int T = mixture.frames;
  if (masks.speech.shape() != Shape{F, T} ||
      masks.noise.shape() != Shape{F, T}) {
    throw DimensionError("mag_ipd_features: masks must be [F, T]");
  }
  const std::int64_t dim = 6LL * F;
  std::vector<double> out(static_cast<std::int64_t>(C) * T * dim);
  const Tensor* mask_of[2] = {&masks.speech, &masks.noise};
  std::vector<std::complex<double>> nu(C);
  for (int f = 0; f < F; ++f) {
    for (int t = 0; t < T; ++t) {
      for (int v = 0; v < 2; ++v) {
        const double m = mask_of[v]->storage()[static_cast<std::size_t>(f) * T + t];
        std::complex<double> sigma(0.0, 0.0);
        for (int c = 0; c < C; ++c) {
          nu[c] = m * mixture.at(c, f, t);
          sigma += nu[c];
        }
        sigma /= static_cast<double>(C);
        const bool degenerate = std::abs(sigma) < 1e-12;
        const double phase_sigma = degenerate ? 0.0 : std::arg(sigma);
        for (int c = 0; c < C; ++c) {
          double cd = 1.0, sd = 0.0;
          if (!degenerate) {
            const double delta = std::arg(nu[c]) - phase_sigma;
            cd = std::cos(delta);
            sd = std::sin(delta);
          }
          double* row = out.data() +
                        (static_cast<std::int64_t>(c) * T + t) * dim +
                        (static_cast<std::int64_t>(v) * 3 * F + 3 * f);
          row[0] = std::norm(nu[c]);
          row[1] = cd;
          row[2] = sd;
        }
      }
    }
  }
  return Tensor::from_real({C, T, dim}, std::move(out));
}

Tensor concat_streams(const Tensor& streams) {
  if (streams.rank() != 3) {
    throw DimensionError("concat_streams: [C, T, D] required");
  }
  const std::int64_t C = streams.dim(0);
  const std::int64_t T = streams.dim(1);
  const std::int64_t D = streams.dim(2);
  std::vector<double> out(C * T * D);
  const auto& v = streams.storage();
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t t = 0; t < T; ++t) {
      const double* src = v.data() + (c * T + t) * D;
      double* dst = out.data() + t * C * D + c * D;
      std::copy(src, src + D, dst);
    }
  }
  return Tensor::from_real({T, C * D}, std::move(out));
}

}  // namespace features
}  // namespace asabf
