#ifndef ASABF_FEATURES_HPP_
#define ASABF_FEATURES_HPP_

#include "asabf/dsp.hpp"
#include "asabf/tensor.hpp"

namespace asabf {

// Channel-averaged speech/noise masks, floored into [floor, 1].
struct MaskPair {
  Tensor speech;  // real [F, T]
  Tensor noise;   // real [F, T]
};

// Per-(f, t) rank-1 instantaneous SCMs for speech and noise.
struct IscmSequence {
  Tensor speech;  // complex [F, T, C, C]
  Tensor noise;   // complex [F, T, C, C]
  int bins = 0;
  int frames = 0;
  int channels = 0;
};

namespace features {

enum class MaskKind { kWiener, kPhaseSensitive };

// Per-channel oracle masks [C, F, T] computed from the clean components.
struct ChannelMasks {
  Tensor speech;
  Tensor noise;
};

ChannelMasks oracle_mask(const Spectrogram& speech_spec,
                         const Spectrogram& noise_spec,
                         MaskKind kind = MaskKind::kWiener);

// Arithmetic mean over the channel axis, clipped into [floor, 1].
MaskPair average_masks(const ChannelMasks& per_channel, double floor = 1e-4);

// Instantaneous SCMs m^v_{f,t} y_{f,t} y^H_{f,t}.
IscmSequence compute_iscm(const Spectrogram& mixture, const MaskPair& masks);

// Flat per-frame features [T, 4FC^2]: per component and bin, the real then
// imaginary parts of the column-major vec of the ISCM.
Tensor iscm_features(const IscmSequence& iscm);

// Channel-wise feature streams [C, T, 6F]: per component and bin, masked
// magnitude-squared plus cos/sin of the phase difference to the
// channel-averaged masked spectrum.
Tensor mag_ipd_features(const Spectrogram& mixture, const MaskPair& masks);

// Channel-major flattening of the streams: [C, T, 6F] -> [T, 6FC].
Tensor concat_streams(const Tensor& streams);

}  // namespace features
}  // namespace asabf

#endif  // ASABF_FEATURES_HPP_
