#include "asabf/dsp.hpp"

#include <algorithm>
#include <cmath>

#include "asabf/errors.hpp"
#include "asabf/fft.hpp"
#include "asabf/ops.hpp"

namespace asabf {

void AudioBuffer::validate() const {
  if (sample_rate <= 0.0) throw InputError("audio sample_rate must be > 0");
  for (const auto& ch : samples) {
    if (static_cast<std::int64_t>(ch.size()) != num_samples()) {
      throw InputError("audio channels have unequal lengths");
    }
  }
}

namespace dsp {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

void check_stft_params(int frame_len, int hop) {
  if (frame_len <= 0 || frame_len % 2 != 0) {
    throw InputError("stft frame_len must be positive and even");
  }
  if (hop <= 0 || frame_len % hop != 0) {
    throw InputError("stft hop must divide frame_len");
  }
}

// Reflection padding with ping-pong indexing (no edge repetition).
double padded_sample(const std::vector<double>& x, std::int64_t idx) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  if (n == 1) return x[0];
  const std::int64_t period = 2 * (n - 1);
  std::int64_t m = idx % period;
  if (m < 0) m += period;
  if (m >= n) m = period - m;
  return x[static_cast<std::size_t>(m)];
}

// Sum of squared window overlaps per sample of the padded signal.
std::vector<double> window_power_profile(const std::vector<double>& win,
                                         int hop, int num_frames,
                                         std::int64_t padded_len) {
  std::vector<double> wsum(padded_len, 0.0);
  const int n = static_cast<int>(win.size());
  for (int t = 0; t < num_frames; ++t) {
    const std::int64_t base = static_cast<std::int64_t>(t) * hop;
    for (int j = 0; j < n; ++j) {
      wsum[base + j] += win[j] * win[j];
    }
  }
  return wsum;
}

}  // namespace

std::vector<double> hann_periodic(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / static_cast<double>(n));
  }
  return w;
}

Spectrogram stft(const AudioBuffer& audio, int frame_len, int hop) {
  audio.validate();
  check_stft_params(frame_len, hop);
  if (audio.channels() < 1 || audio.num_samples() < 1) {
    throw InputError("stft needs at least one channel and one sample");
  }
  const std::int64_t len = audio.num_samples();
  const int pad = frame_len / 2;
  const int frames = static_cast<int>(len / hop) + 1;
  const int bins = frame_len / 2 + 1;

  Spectrogram out;
  out.channels = audio.channels();
  out.bins = bins;
  out.frames = frames;
  out.frame_len = frame_len;
  out.hop = hop;
  out.num_samples = len;
  out.sample_rate = audio.sample_rate;
  out.data.assign(static_cast<std::size_t>(out.channels) * bins * frames,
                  {0.0, 0.0});

  const std::vector<double> win = hann_periodic(frame_len);
  std::vector<double> frame(frame_len);
  for (int c = 0; c < out.channels; ++c) {
    const auto& x = audio.samples[c];
    for (int t = 0; t < frames; ++t) {
      const std::int64_t base = static_cast<std::int64_t>(t) * hop - pad;
      for (int j = 0; j < frame_len; ++j) {
        frame[j] = win[j] * padded_sample(x, base + j);
      }
      const auto spec = fft::rfft(frame.data(), frame_len);
      for (int f = 0; f < bins; ++f) out.at(c, f, t) = spec[f];
    }
  }
  return out;
}

AudioBuffer istft(const Spectrogram& spec) {
  if (spec.frame_len <= 0 || spec.hop <= 0 || spec.frames <= 0 ||
      spec.num_samples <= 0) {
    throw ContractError("istft: spectrogram metadata missing");
  }
  check_stft_params(spec.frame_len, spec.hop);
  if (spec.bins != spec.frame_len / 2 + 1) {
    throw DimensionError("istft: bins != frame_len/2 + 1");
  }
  const int pad = spec.frame_len / 2;
  const std::int64_t padded_len =
      static_cast<std::int64_t>(spec.frames - 1) * spec.hop + spec.frame_len;
  if (pad + spec.num_samples > padded_len) {
    throw ContractError("istft: metadata inconsistent with frame count");
  }

  const std::vector<double> win = hann_periodic(spec.frame_len);
  const std::vector<double> wsum =
      window_power_profile(win, spec.hop, spec.frames, padded_len);
  // COLA check over the region that survives trimming.
  double min_w = 1e300;
  for (std::int64_t i = pad; i < pad + spec.num_samples; ++i) {
    min_w = std::min(min_w, wsum[i]);
  }
  if (min_w < 1e-8) {
    throw ContractError(
        "istft: window/hop combination violates COLA (zero synthesis "
        "weight inside the signal)");
  }

  AudioBuffer out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(spec.channels,
                     std::vector<double>(spec.num_samples, 0.0));
  std::vector<std::complex<double>> bins(spec.bins);
  std::vector<double> acc(padded_len);
  for (int c = 0; c < spec.channels; ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int t = 0; t < spec.frames; ++t) {
      for (int f = 0; f < spec.bins; ++f) bins[f] = spec.at(c, f, t);
      const std::vector<double> frame =
          fft::irfft(bins.data(), spec.frame_len);
      const std::int64_t base = static_cast<std::int64_t>(t) * spec.hop;
      for (int j = 0; j < spec.frame_len; ++j) {
        acc[base + j] += win[j] * frame[j];
      }
    }
    for (std::int64_t i = 0; i < spec.num_samples; ++i) {
      out.samples[c][i] = acc[pad + i] / wsum[pad + i];
    }
  }
  return out;
}

Tensor istft_op(const Tensor& spec_tf, int frame_len, int hop,
                std::int64_t num_samples) {
  check_stft_params(frame_len, hop);
  if (spec_tf.rank() != 2 || !spec_tf.is_complex()) {
    throw DimensionError("istft_op: [T, F] complex tensor required");
  }
  const std::int64_t frames = spec_tf.dim(0);
  if (spec_tf.dim(1) != frame_len / 2 + 1) {
    throw DimensionError("istft_op: bins != frame_len/2 + 1");
  }
  const int pad = frame_len / 2;
  const std::int64_t padded_len = (frames - 1) * hop + frame_len;
  if (pad + num_samples > padded_len) {
    throw ContractError("istft_op: num_samples inconsistent with frames");
  }
  const std::vector<double> win = hann_periodic(frame_len);
  const std::vector<double> wsum = window_power_profile(
      win, hop, static_cast<int>(frames), padded_len);
  for (std::int64_t i = pad; i < pad + num_samples; ++i) {
    if (wsum[i] < 1e-8) {
      throw ContractError("istft_op: COLA violation");
    }
  }

  Tensor frames_t = ops::irfft_frames(spec_tf, frame_len);  // [T, N]
  Tensor win_t = ops::broadcast_to(
      Tensor::from_real({1, frame_len}, win), {frames, frame_len});
  Tensor weighted = ops::mul(frames_t, win_t);
  Tensor acc = ops::overlap_add(weighted, hop, padded_len);
  std::vector<double> inv(wsum.size());
  for (std::size_t i = 0; i < wsum.size(); ++i) {
    inv[i] = wsum[i] > 1e-12 ? 1.0 / wsum[i] : 0.0;
  }
  Tensor inv_t = Tensor::from_real({padded_len}, std::move(inv));
  return ops::slice_axis(ops::mul(acc, inv_t), 0, pad, num_samples);
}

Tensor spectrogram_tensor(const Spectrogram& spec) {
  return Tensor::from_complex(
      {spec.channels, spec.bins, spec.frames}, spec.data);
}

}  // namespace dsp
}  // namespace asabf
