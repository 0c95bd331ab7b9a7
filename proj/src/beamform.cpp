#include "asabf/beamform.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>

#include "asabf/errors.hpp"
#include "asabf/ops.hpp"
#include "json.hpp"

namespace asabf {
namespace beamform {

namespace {

using CMat = Eigen::Matrix<std::complex<double>, Eigen::Dynamic,
                           Eigen::Dynamic, Eigen::RowMajor>;
using CVec = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, 1>;

// [F, T, C, C] -> [T, F*C*C] view used to apply the frequency-independent
// rows with one matmul per component.
Tensor frames_major(const Tensor& iscm) {
  const std::int64_t F = iscm.dim(0), T = iscm.dim(1), C = iscm.dim(2);
  return ops::reshape(ops::transpose(iscm, {1, 0, 2, 3}), {T, F * C * C});
}

Tensor frames_major_back(const Tensor& flat, std::int64_t F, std::int64_t C) {
  const std::int64_t T = flat.dim(0);
  return ops::transpose(ops::reshape(flat, {T, F, C, C}), {1, 0, 2, 3});
}

// real [T, T] x complex [T, K]: split into two real products.
Tensor real_matmul_complex(const Tensor& a, const Tensor& z) {
  Tensor re = ops::matmul(a, ops::real(z));
  Tensor im = ops::matmul(a, ops::imag(z));
  return ops::make_complex(re, im);
}

void check_attention(const Tensor& a, std::int64_t frames) {
  if (a.rank() != 2 || a.dim(0) != frames || a.dim(1) != frames) {
    throw DimensionError("attention weights must be [T, T] with T = " +
                         std::to_string(frames) + ", got " +
                         shape_str(a.shape()));
  }
}

}  // namespace

double forgetting_factor(double hop_seconds, double time_constant) {
  if (hop_seconds <= 0.0 || time_constant <= 0.0) {
    throw InputError("forgetting_factor: positive times required");
  }
  return std::exp(-hop_seconds / time_constant);
}

ScmSequence aggregate_scm(const IscmSequence& iscms,
                          const AttentionWeights& attn) {
  const std::int64_t F = iscms.bins, T = iscms.frames, C = iscms.channels;
  check_attention(attn.speech, T);
  check_attention(attn.noise, T);
  ScmSequence out;
  out.speech = frames_major_back(
      real_matmul_complex(attn.speech, frames_major(iscms.speech)), F, C);
  out.noise = frames_major_back(
      real_matmul_complex(attn.noise, frames_major(iscms.noise)), F, C);
  return out;
}

ScmSequence recursive_scm(const IscmSequence& iscms, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw InputError("recursive_scm: lambda must lie in (0, 1)");
  }
  const std::int64_t F = iscms.bins, T = iscms.frames, C = iscms.channels;
  const std::int64_t slice = C * C;
  auto smooth = [&](const Tensor& psi) {
    const std::int64_t numel = psi.numel();
    std::vector<double> out(psi.storage().size());
    const double* re = psi.re();
    const double* im = re + numel;
    for (std::int64_t f = 0; f < F; ++f) {
      const std::int64_t row = f * T * slice;
      for (std::int64_t t = 0; t < T; ++t) {
        for (std::int64_t k = 0; k < slice; ++k) {
          const std::int64_t cur = row + t * slice + k;
          if (t == 0) {
            out[cur] = re[cur];
            out[numel + cur] = im[cur];
          } else {
            const std::int64_t prev = row + (t - 1) * slice + k;
            out[cur] = lambda * out[prev] + (1.0 - lambda) * re[cur];
            out[numel + cur] =
                lambda * out[numel + prev] + (1.0 - lambda) * im[cur];
          }
        }
      }
    }
    return Tensor::from_storage({F, T, C, C}, Dtype::kComplex128,
                                std::move(out));
  };
  return ScmSequence{smooth(iscms.speech), smooth(iscms.noise)};
}

MvdrResult mvdr_weights(const std::vector<std::complex<double>>& phi_x,
                        const std::vector<std::complex<double>>& phi_n,
                        int channels, int ref, const MvdrOptions& opts) {
  const int C = channels;
  if (static_cast<int>(phi_x.size()) != C * C ||
      static_cast<int>(phi_n.size()) != C * C) {
    throw DimensionError("mvdr_weights: C x C matrices required");
  }
  if (ref < 0 || ref >= C) throw InputError("mvdr_weights: bad ref index");

  Eigen::Map<const CMat> mx(phi_x.data(), C, C);
  Eigen::Map<const CMat> mn(phi_n.data(), C, C);
  const double scale_x = std::max(1e-300, mx.cwiseAbs().maxCoeff());
  const double scale_n = std::max(1e-300, mn.cwiseAbs().maxCoeff());
  if ((mx - mx.adjoint()).cwiseAbs().maxCoeff() >
          opts.hermitian_tol * scale_x ||
      (mn - mn.adjoint()).cwiseAbs().maxCoeff() >
          opts.hermitian_tol * scale_n) {
    throw ContractError("mvdr_weights: inputs are not Hermitian");
  }

  const double load =
      std::max(opts.loading * mn.real().trace() / C, opts.loading_floor);
  CMat loaded = mn;
  loaded.diagonal().array() += load;

  MvdrResult result;
  if (opts.with_condition) {
    Eigen::SelfAdjointEigenSolver<CMat> es(loaded);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    result.condition =
        lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  }

  const CMat m = loaded.partialPivLu().solve(CMat(mx));
  const std::complex<double> tr = m.trace();
  const double fro = m.norm();
  result.w.assign(C, {0.0, 0.0});
  if (std::abs(tr) < opts.trace_floor * fro || fro == 0.0) {
    result.fallback = true;
    result.w[ref] = {1.0, 0.0};
    return result;
  }
  const CVec w = m.col(ref) / tr;
  for (int i = 0; i < C; ++i) result.w[i] = w(i);
  return result;
}

Tensor mvdr_weights_t(const Tensor& phi_x, const Tensor& phi_n, int ref,
                      const MvdrOptions& opts,
                      std::vector<unsigned char>* fallback_mask) {
  if (phi_x.rank() != 3 || phi_n.rank() != 3 ||
      phi_x.shape() != phi_n.shape() || phi_x.dim(1) != phi_x.dim(2)) {
    throw DimensionError("mvdr_weights_t: [B, C, C] stacks required");
  }
  const std::int64_t B = phi_x.dim(0);
  const std::int64_t C = phi_x.dim(1);
  if (ref < 0 || ref >= C) throw InputError("mvdr_weights_t: bad ref index");

  // diagonal loading: Phi_n + max(loading * tr/C, floor) * I
  Tensor tr_n = ops::real(ops::trace_last2(phi_n));  // [B]
  Tensor load = ops::scalar_mul(tr_n, opts.loading / static_cast<double>(C));
  {
    std::vector<double> mask(B), floor_v(B, opts.loading_floor);
    for (std::int64_t b = 0; b < B; ++b) {
      mask[b] = load.storage()[b] < opts.loading_floor ? 1.0 : 0.0;
    }
    load = ops::where(Tensor::from_real({B}, std::move(mask)),
                      Tensor::from_real({B}, std::move(floor_v)), load);
  }
  Tensor eye_b = ops::broadcast_to(
      ops::reshape(Tensor::eye(C, Dtype::kComplex128), {1, C, C}), {B, C, C});
  Tensor load_b = ops::broadcast_to(
      ops::reshape(ops::to_complex(load), {B, 1, 1}), {B, C, C});
  Tensor loaded = ops::add(phi_n, ops::mul(load_b, eye_b));

  Tensor m = ops::matmul(ops::cinv(loaded), phi_x);  // [B, C, C]
  Tensor tr = ops::trace_last2(m);                   // [B] complex

  // fallback detection from the forward values
  std::vector<double> bad(B, 0.0);
  {
    const double* mre = m.re();
    const double* mim = mre + m.numel();
    for (std::int64_t b = 0; b < B; ++b) {
      double fro = 0.0;
      for (std::int64_t k = 0; k < C * C; ++k) {
        const std::int64_t i = b * C * C + k;
        fro += mre[i] * mre[i] + mim[i] * mim[i];
      }
      fro = std::sqrt(fro);
      const std::complex<double> t = tr.cat(b);
      if (std::abs(t) < opts.trace_floor * fro || fro == 0.0) bad[b] = 1.0;
    }
  }
  if (fallback_mask) {
    fallback_mask->resize(B);
    for (std::int64_t b = 0; b < B; ++b) {
      (*fallback_mask)[b] = bad[b] != 0.0 ? 1 : 0;
    }
  }

  // u_r column and the fallback weight stack
  std::vector<std::complex<double>> ur(C, {0.0, 0.0});
  ur[ref] = {1.0, 0.0};
  Tensor ur_b = ops::broadcast_to(
      ops::reshape(Tensor::from_complex({C, 1}, ur), {1, C, 1}), {B, C, 1});

  Tensor mu = ops::matmul(m, ur_b);  // [B, C, 1]
  Tensor bad_b1 = Tensor::from_real({B}, bad);
  Tensor safe_tr = ops::where(
      bad_b1, Tensor::from_complex({B}, std::vector<std::complex<double>>(
                                            B, {1.0, 0.0})),
      tr);
  Tensor denom = ops::broadcast_to(
      ops::reshape(safe_tr, {B, 1, 1}), {B, C, 1});
  Tensor w = ops::div(mu, denom);
  Tensor bad_bc1 = ops::broadcast_to(ops::reshape(bad_b1, {B, 1, 1}),
                                     {B, C, 1});
  return ops::where(bad_bc1, ur_b, w);
}

Spectrogram apply_beamformer(const Spectrogram& spec,
                             const BeamformerWeights& weights) {
  const Tensor& w = weights.w;
  if (w.rank() != 3 || w.dim(0) != spec.bins || w.dim(1) != spec.frames ||
      w.dim(2) != spec.channels) {
    throw DimensionError("apply_beamformer: weights must be [F, T, C]");
  }
  Spectrogram out;
  out.channels = 1;
  out.bins = spec.bins;
  out.frames = spec.frames;
  out.frame_len = spec.frame_len;
  out.hop = spec.hop;
  out.num_samples = spec.num_samples;
  out.sample_rate = spec.sample_rate;
  out.data.assign(static_cast<std::size_t>(spec.bins) * spec.frames,
                  {0.0, 0.0});
  const std::int64_t numel = w.numel();
  const double* wre = w.re();
  const double* wim = wre + numel;
  for (int f = 0; f < spec.bins; ++f) {
    for (int t = 0; t < spec.frames; ++t) {
      std::complex<double> acc(0.0, 0.0);
      const std::int64_t base =
          (static_cast<std::int64_t>(f) * spec.frames + t) * spec.channels;
      for (int c = 0; c < spec.channels; ++c) {
        const std::complex<double> wc(wre[base + c], wim[base + c]);
        acc += std::conj(wc) * spec.at(c, f, t);
      }
      out.at(0, f, t) = acc;
    }
  }
  return out;
}

Tensor apply_beamformer_t(const Tensor& w, const Tensor& y) {
  if (w.shape() != y.shape() || w.rank() != 3) {
    throw DimensionError("apply_beamformer_t: matching [T, F, C] required");
  }
  return ops::sum_axis(ops::mul(ops::conj(w), y), 2);
}

AttentionWeights uniform_attention(int frames) {
  Tensor a = Tensor::full({frames, frames}, 1.0 / frames);
  return AttentionWeights{a, a};
}

AttentionWeights boxcar_attention(int frames, int window_frames) {
  if (window_frames < 1) throw InputError("boxcar_attention: empty window");
  std::vector<double> a(static_cast<std::size_t>(frames) * frames, 0.0);
  const int half = window_frames / 2;
  for (int t = 0; t < frames; ++t) {
    const int lo = std::max(0, t - half);
    const int hi = std::min(frames - 1, t + half);
    const double v = 1.0 / static_cast<double>(hi - lo + 1);
    for (int tau = lo; tau <= hi; ++tau) {
      a[static_cast<std::size_t>(t) * frames + tau] = v;
    }
  }
  Tensor t = Tensor::from_real({frames, frames}, std::move(a));
  return AttentionWeights{t, t};
}

std::string EnhanceDiagnostics::to_json() const {
  nlohmann::json j = {
      {"frames", frames},
      {"bins", bins},
      {"channels", channels},
      {"fallback_rate", fallback_rate},
      {"condition_mean", condition_mean},
      {"condition_max", condition_max},
      {"elapsed_ms", elapsed_ms},
      {"scm_mode", scm_mode},
  };
  return j.dump();
}

EnhanceResult enhance(const AudioBuffer& mixture, const MaskSource& masks,
                      const EnhanceOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  mixture.validate();
  if (mixture.channels() < 1) throw InputError("enhance: empty mixture");
  const int ref = options.ref;
  if (ref < 0 || ref >= mixture.channels()) {
    throw InputError("enhance: reference channel out of range");
  }

  Spectrogram spec;
  MaskPair mask_pair;
  try {
    spec = dsp::stft(mixture, options.frame_len, options.hop);
    if (masks.masks) {
      mask_pair = *masks.masks;
    } else if (masks.speech_image && masks.noise_image) {
      Spectrogram sx =
          dsp::stft(*masks.speech_image, options.frame_len, options.hop);
      Spectrogram sn =
          dsp::stft(*masks.noise_image, options.frame_len, options.hop);
      mask_pair = features::average_masks(
          features::oracle_mask(sx, sn, masks.kind));
    } else {
      throw ContractError("enhance: no mask source provided");
    }
  } catch (const Error& e) {
    throw ContractError(std::string("enhance[front-end]: ") + e.what());
  }

  const int F = spec.bins, T = spec.frames, C = spec.channels;
  IscmSequence iscms;
  ScmSequence scms;
  std::string mode_name;
  try {
    iscms = features::compute_iscm(spec, mask_pair);
    switch (options.mode) {
      case ScmMode::kAsa: {
        mode_name = "asa";
        if (!options.model) throw ContractError("asa mode needs a model");
        const ModelWeights& model = *options.model;
        Tensor feats;
        if (model.config.variant == Variant::kTac) {
          feats = features::mag_ipd_features(spec, mask_pair);
        } else if (model.config.feature_kind == FeatureKind::kIscm) {
          feats = features::iscm_features(iscms);
        } else {
          feats = features::concat_streams(
              features::mag_ipd_features(spec, mask_pair));
        }
        AttentionWeights attn =
            estimator::estimate_attention_weights(feats, model);
        scms = aggregate_scm(iscms, attn);
        break;
      }
      case ScmMode::kRecursive:
        mode_name = "recursive";
        scms = recursive_scm(iscms, options.lambda);
        break;
      case ScmMode::kUniform:
        mode_name = "uniform";
        scms = aggregate_scm(iscms, uniform_attention(T));
        break;
      case ScmMode::kOracleAttn:
        mode_name = "oracle_attn";
        if (!options.oracle_attn) {
          throw ContractError("oracle_attn mode needs attention weights");
        }
        scms = aggregate_scm(iscms, *options.oracle_attn);
        break;
    }
  } catch (const Error& e) {
    throw ContractError(std::string("enhance[aggregation]: ") + e.what());
  }

  EnhanceResult result;
  result.diagnostics.frames = T;
  result.diagnostics.bins = F;
  result.diagnostics.channels = C;
  result.diagnostics.scm_mode = mode_name;

  BeamformerWeights bw;
  std::int64_t fallbacks = 0, cond_count = 0;
  double cond_sum = 0.0, cond_max = 0.0;
  try {
    std::vector<double> w_storage(2LL * F * T * C, 0.0);
    const std::int64_t numel = static_cast<std::int64_t>(F) * T * C;
    std::vector<std::complex<double>> px(C * C), pn(C * C);
    const double* sx_re = scms.speech.re();
    const double* sx_im = sx_re + scms.speech.numel();
    const double* sn_re = scms.noise.re();
    const double* sn_im = sn_re + scms.noise.numel();
    for (int f = 0; f < F; ++f) {
      for (int t = 0; t < T; ++t) {
        const std::int64_t base =
            (static_cast<std::int64_t>(f) * T + t) * C * C;
        for (int k = 0; k < C * C; ++k) {
          px[k] = {sx_re[base + k], sx_im[base + k]};
          pn[k] = {sn_re[base + k], sn_im[base + k]};
        }
        beamform::MvdrOptions mvdr_opts = options.mvdr;
        mvdr_opts.with_condition = (f % 8 == 0);
        MvdrResult r;
        try {
          r = mvdr_weights(px, pn, C, ref, mvdr_opts);
        } catch (const SingularMatrixError& e) {
          throw SingularMatrixError(std::string(e.what()) + " at bin " +
                                    std::to_string(f) + ", frame " +
                                    std::to_string(t));
        }
        if (r.fallback) ++fallbacks;
        if (mvdr_opts.with_condition) {
          cond_sum += r.condition;
          ++cond_count;
          cond_max = std::max(cond_max, r.condition);
        }
        const std::int64_t wbase =
            (static_cast<std::int64_t>(f) * T + t) * C;
        for (int c = 0; c < C; ++c) {
          w_storage[wbase + c] = r.w[c].real();
          w_storage[numel + wbase + c] = r.w[c].imag();
        }
      }
    }
    bw.w = Tensor::from_storage({F, T, C}, Dtype::kComplex128,
                                std::move(w_storage));
  } catch (const ContractError&) {
    throw;
  } catch (const Error& e) {
    throw NumericError(std::string("enhance[mvdr]: ") + e.what());
  }

  result.diagnostics.fallback_rate =
      static_cast<double>(fallbacks) / (static_cast<double>(F) * T);
  result.diagnostics.condition_mean =
      cond_count > 0 ? cond_sum / static_cast<double>(cond_count) : 0.0;
  result.diagnostics.condition_max = cond_max;

  try {
    Spectrogram enhanced = apply_beamformer(spec, bw);
    result.audio = dsp::istft(enhanced);
  } catch (const Error& e) {
    throw ContractError(std::string("enhance[synthesis]: ") + e.what());
  }

  result.diagnostics.elapsed_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - t_start)
          .count();
  return result;
}

}  // namespace beamform
}  // namespace asabf
