#ifndef ASABF_BEAMFORM_HPP_
#define ASABF_BEAMFORM_HPP_

#include <complex>
#include <string>
#include <vector>

#include "asabf/dsp.hpp"
#include "asabf/estimator.hpp"
#include "asabf/features.hpp"
#include "asabf/tensor.hpp"

namespace asabf {

// Aggregated time-varying SCMs.
struct ScmSequence {
  Tensor speech;  // complex [F, T, C, C]
  Tensor noise;   // complex [F, T, C, C]
};

struct BeamformerWeights {
  Tensor w;  // complex [F, T, C]
};

namespace beamform {

// lambda = exp(-hop_seconds / time_constant).
double forgetting_factor(double hop_seconds, double time_constant = 1.6);

// Phi_{f,t} = sum_tau a_{t,tau} Psi_{f,tau}; the same frequency-independent
// rows are applied to every bin. Differentiable in the attention weights.
ScmSequence aggregate_scm(const IscmSequence& iscms,
                          const AttentionWeights& attn);

// Phi_1 = Psi_1; Phi_t = lambda Phi_{t-1} + (1-lambda) Psi_t.
ScmSequence recursive_scm(const IscmSequence& iscms, double lambda);

struct MvdrOptions {
  double loading = 1e-6;           // relative diagonal loading of Phi_n
  double loading_floor = 1e-10;    // absolute floor of the loading term
  double trace_floor = 1e-10;      // fallback threshold vs ||M||_F
  double hermitian_tol = 1e-8;
  // condition-number diagnostics need an eigendecomposition per solve;
  // false skips it (enhance samples a stride of frames instead)
  bool with_condition = true;
};

struct MvdrResult {
  std::vector<std::complex<double>> w;  // length C
  bool fallback = false;
  double condition = 1.0;  // eigenvalue ratio of the loaded Phi_n
};

// Single-matrix reference route (Eq-style trace-normalized MVDR).
MvdrResult mvdr_weights(const std::vector<std::complex<double>>& phi_x,
                        const std::vector<std::complex<double>>& phi_n,
                        int channels, int ref,
                        const MvdrOptions& opts = {});

// Batched differentiable route on [B, C, C] stacks; returns [B, C, 1].
// Frames whose trace degenerates fall back to the selection vector and are
// flagged in fallback_mask (when provided).
Tensor mvdr_weights_t(const Tensor& phi_x, const Tensor& phi_n, int ref,
                      const MvdrOptions& opts = {},
                      std::vector<unsigned char>* fallback_mask = nullptr);

// x_hat[f, t] = w^H y over the channel axis of a [F, T, C] weight stack.
Spectrogram apply_beamformer(const Spectrogram& spec,
                             const BeamformerWeights& weights);

// Tensor route: w, y complex [T, F, C] -> [T, F].
Tensor apply_beamformer_t(const Tensor& w, const Tensor& y);

enum class ScmMode { kAsa, kRecursive, kUniform, kOracleAttn };

struct MaskSource {
  // Oracle masks from the clean components...
  const AudioBuffer* speech_image = nullptr;
  const AudioBuffer* noise_image = nullptr;
  features::MaskKind kind = features::MaskKind::kWiener;
  // ...or an externally supplied pair.
  const MaskPair* masks = nullptr;
};

struct EnhanceOptions {
  ScmMode mode = ScmMode::kAsa;
  int ref = 0;
  int frame_len = 1024;
  int hop = 256;
  double lambda = 0.9900498337491681;  // 1.6 s time constant at 16 ms hop
  MvdrOptions mvdr;
  const ModelWeights* model = nullptr;            // kAsa
  const AttentionWeights* oracle_attn = nullptr;  // kOracleAttn
};

struct EnhanceDiagnostics {
  int frames = 0;
  int bins = 0;
  int channels = 0;
  double fallback_rate = 0.0;
  double condition_mean = 0.0;
  double condition_max = 0.0;
  double elapsed_ms = 0.0;
  std::string scm_mode;
  std::string to_json() const;
};

struct EnhanceResult {
  AudioBuffer audio;  // mono
  EnhanceDiagnostics diagnostics;
};

// stft -> masks -> ISCMs -> SCMs -> MVDR -> synthesis.
EnhanceResult enhance(const AudioBuffer& mixture, const MaskSource& masks,
                      const EnhanceOptions& options);

// Uniform rows 1/T.
AttentionWeights uniform_attention(int frames);
// Row-normalized boxcar of width `window_frames` centered on each frame.
AttentionWeights boxcar_attention(int frames, int window_frames);

}  // namespace beamform
}  // namespace asabf

#endif  // ASABF_BEAMFORM_HPP_
