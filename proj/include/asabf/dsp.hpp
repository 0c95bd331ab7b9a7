#ifndef ASABF_DSP_HPP_
#define ASABF_DSP_HPP_

#include <complex>
#include <cstdint>
#include <vector>

#include "asabf/tensor.hpp"

namespace asabf {

struct AudioBuffer {
  double sample_rate = 16000.0;
  // One vector per channel; all channels have equal length.
  std::vector<std::vector<double>> samples;

  int channels() const { return static_cast<int>(samples.size()); }
  std::int64_t num_samples() const {
    return samples.empty() ? 0 : static_cast<std::int64_t>(samples[0].size());
  }
  void validate() const;
};

// Complex STFT indexed [channel, bin, frame].
struct Spectrogram {
  int channels = 0;
  int bins = 0;    // frame_len / 2 + 1
  int frames = 0;
  int frame_len = 0;
  int hop = 0;
  std::int64_t num_samples = 0;  // original length, for exact resynthesis
  double sample_rate = 16000.0;
  std::vector<std::complex<double>> data;  // ((c * bins + f) * frames + t)

  std::complex<double>& at(int c, int f, int t) {
    return data[(static_cast<std::size_t>(c) * bins + f) * frames + t];
  }
  const std::complex<double>& at(int c, int f, int t) const {
    return data[(static_cast<std::size_t>(c) * bins + f) * frames + t];
  }
};

namespace dsp {

// Periodic Hann window of length n.
std::vector<double> hann_periodic(int n);

// One-sided STFT with reflection padding of frame_len/2 on both ends, so
// frame t is centered at sample t*hop. frame_len must be even and a
// multiple of hop.
Spectrogram stft(const AudioBuffer& audio, int frame_len = 1024,
                 int hop = 256);

// Weighted overlap-add synthesis with squared-window normalization.
// Reconstructs exactly num_samples samples.
AudioBuffer istft(const Spectrogram& spec);

// Differentiable single-channel synthesis of a [T, F] complex tensor;
// numerically identical to istft on one channel.
Tensor istft_op(const Tensor& spec_tf, int frame_len, int hop,
                std::int64_t num_samples);

// Constant [C, F, T] complex tensor view of a spectrogram.
Tensor spectrogram_tensor(const Spectrogram& spec);

}  // namespace dsp
}  // namespace asabf

#endif  // ASABF_DSP_HPP_
