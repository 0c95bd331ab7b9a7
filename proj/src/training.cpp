#include "asabf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "asabf/autodiff.hpp"
#include "asabf/errors.hpp"
#include "asabf/ops.hpp"
#include "asabf/rng.hpp"
#include "asabf/wav.hpp"
#include "json.hpp"

namespace asabf {

void TrainConfig::validate() const {
  estimator.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (adam_eps <= 0.0) throw ConfigError("adam eps must be > 0");
  if (max_seconds <= 0.0) throw ConfigError("max_seconds must be > 0");
  if (frame_len <= 0 || hop <= 0) throw ConfigError("bad stft params");
}

namespace training {

namespace {

AudioBuffer clip_seconds(const AudioBuffer& audio, double max_seconds) {
  const std::int64_t keep = std::min<std::int64_t>(
      audio.num_samples(),
      static_cast<std::int64_t>(max_seconds * audio.sample_rate));
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  for (const auto& ch : audio.samples) {
    out.samples.emplace_back(ch.begin(), ch.begin() + keep);
  }
  return out;
}

AudioBuffer subset_channels(const AudioBuffer& audio,
                            const std::vector<int>& indices) {
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  for (int i : indices) out.samples.push_back(audio.samples[i]);
  return out;
}

TrainScene subset_scene(const TrainScene& scene,
                        const std::vector<int>& indices) {
  TrainScene out;
  out.id = scene.id;
  out.mixture = subset_channels(scene.mixture, indices);
  out.speech_image = subset_channels(scene.speech_image, indices);
  out.noise_image = subset_channels(scene.noise_image, indices);
  // Remap the reference; if it left the subset, fall back to the first
  // channel of the permutation.
  out.ref = 0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] == scene.ref) {
      out.ref = static_cast<int>(k);
      break;
    }
  }
  return out;
}

// Leaf-variable view of the model for one forward/backward pass.
ModelWeights variable_view(const ModelWeights& model) {
  ModelWeights vars;
  vars.config = model.config;
  vars.meta = model.meta;
  for (const auto& [name, tensor] : model.tensors) {
    vars.tensors.emplace(name, tensor.variable());
  }
  return vars;
}

}  // namespace

Tensor snr_loss(const Tensor& estimate, const Tensor& target, double eps) {
  if (estimate.is_complex() || target.is_complex()) {
    throw DimensionError("snr_loss: real signals required");
  }
  if (estimate.shape() != target.shape()) {
    throw DimensionError("snr_loss: length mismatch " +
                         shape_str(estimate.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  double target_power = 0.0;
  for (double v : target.storage()) target_power += v * v;
  if (target_power <= 0.0) throw InputError("snr_loss: zero target");

  Tensor diff = ops::sub(target, estimate);
  Tensor num = ops::add_scalar(ops::sum(ops::mul(target, target)), eps);
  Tensor den = ops::add_scalar(ops::sum(ops::mul(diff, diff)), eps);
  const double scale = -10.0 / std::log(10.0);
  return ops::scalar_mul(ops::sub(ops::log(num), ops::log(den)), scale);
}

Tensor scene_loss(const TrainScene& scene, const ModelWeights& model,
                  int frame_len, int hop, features::MaskKind mask_kind,
                  const beamform::MvdrOptions& mvdr) {
  const int C = scene.mixture.channels();
  if (scene.ref < 0 || scene.ref >= C) {
    throw InputError("scene_loss: reference channel out of range");
  }

  // Everything up to the features is constant; gradients enter through the
  // estimator parameters only.
  Spectrogram spec = dsp::stft(scene.mixture, frame_len, hop);
  Spectrogram sx = dsp::stft(scene.speech_image, frame_len, hop);
  Spectrogram sn = dsp::stft(scene.noise_image, frame_len, hop);
  MaskPair masks =
      features::average_masks(features::oracle_mask(sx, sn, mask_kind));
  IscmSequence iscms = features::compute_iscm(spec, masks);

  Tensor feats;
  if (model.config.variant == Variant::kTac) {
    feats = features::mag_ipd_features(spec, masks);
  } else if (model.config.feature_kind == FeatureKind::kIscm) {
    feats = features::iscm_features(iscms);
  } else {
    feats = features::concat_streams(features::mag_ipd_features(spec, masks));
  }

  AttentionWeights attn = estimator::estimate_attention_weights(feats, model);
  ScmSequence scms = beamform::aggregate_scm(iscms, attn);

  const std::int64_t F = spec.bins, T = spec.frames;
  // [F, T, C, C] -> [T*F, C, C]
  auto stack = [&](const Tensor& phi) {
    return ops::reshape(ops::transpose(phi, {1, 0, 2, 3}), {T * F, C, C});
  };
  Tensor w = beamform::mvdr_weights_t(stack(scms.speech), stack(scms.noise),
                                      scene.ref, mvdr);
  w = ops::reshape(w, {T, F, C});

  Tensor y = ops::transpose(dsp::spectrogram_tensor(spec), {2, 1, 0});
  Tensor xhat = beamform::apply_beamformer_t(w, y);  // [T, F]
  Tensor audio = dsp::istft_op(xhat, frame_len, hop, spec.num_samples);

  Tensor target = Tensor::from_real(
      {scene.speech_image.num_samples()},
      std::vector<double>(scene.speech_image.samples[scene.ref]));
  return snr_loss(audio, target);
}

StepRecord train_step(const std::vector<TrainScene>& batch,
                      ModelWeights& model, AdamState& opt,
                      const TrainConfig& config, int step_index) {
  if (batch.empty()) throw InputError("train_step: empty batch");
  const auto t0 = std::chrono::steady_clock::now();

  auto rng = make_rng(config.seed, 0xabcd0000ull + step_index);
  std::vector<TrainScene> prepared;
  int c_prime = batch[0].mixture.channels();
  if (config.channel_mode == ChannelMode::kRandom) {
    ChannelConfig cc = scene::sample_channel_config(
        batch[0].mixture.channels(), rng);
    c_prime = static_cast<int>(cc.indices.size());
    for (const auto& s : batch) prepared.push_back(subset_scene(s, cc.indices));
  } else {
    prepared = batch;
  }

  ModelWeights vars = variable_view(model);
  Tensor total;
  for (const auto& s : prepared) {
    Tensor l = scene_loss(s, vars, config.frame_len, config.hop,
                          config.mask_kind);
    total = total.defined() ? ops::add(total, l) : l;
  }
  Tensor loss =
      ops::scalar_mul(total, 1.0 / static_cast<double>(prepared.size()));
  if (!loss.all_finite()) {
    std::string ids;
    for (const auto& s : prepared) ids += s.id + " ";
    throw NumericError("non-finite training loss on batch: " + ids);
  }
  autodiff::GradMap grads = autodiff::backward(loss);

  // gradient collection + global-norm clipping
  std::map<std::string, Tensor> g;
  double norm_sq = 0.0;
  for (const auto& [name, var] : vars.tensors) {
    Tensor gi = grads.get(var);
    for (double v : gi.storage()) norm_sq += v * v;
    g.emplace(name, std::move(gi));
  }
  const double norm = std::sqrt(norm_sq);
  const double clip_scale =
      (config.grad_clip > 0.0 && norm > config.grad_clip)
          ? config.grad_clip / norm
          : 1.0;

  // Adam
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, opt.step);
  const double bc2 = 1.0 - std::pow(config.beta2, opt.step);
  for (auto& [name, tensor] : model.tensors) {
    const auto& gv = g.at(name).storage();
    std::vector<double> m_new, v_new;
    if (auto it = opt.m.find(name); it != opt.m.end()) {
      m_new = it->second.storage();
      v_new = opt.v.at(name).storage();
    } else {
      m_new.assign(gv.size(), 0.0);
      v_new.assign(gv.size(), 0.0);
    }
    std::vector<double> w_new = tensor.storage();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      const double gc = gv[i] * clip_scale;
      m_new[i] = config.beta1 * m_new[i] + (1.0 - config.beta1) * gc;
      v_new[i] = config.beta2 * v_new[i] + (1.0 - config.beta2) * gc * gc;
      const double mhat = m_new[i] / bc1;
      const double vhat = v_new[i] / bc2;
      w_new[i] -= config.learning_rate * mhat /
                  (std::sqrt(vhat) + config.adam_eps);
    }
    const Shape shape = tensor.shape();
    tensor = Tensor::from_real(shape, std::move(w_new));
    opt.m[name] = Tensor::from_real(shape, std::move(m_new));
    opt.v[name] = Tensor::from_real(shape, std::move(v_new));
  }

  StepRecord rec;
  rec.step = step_index;
  rec.loss = loss.item();
  rec.c_prime = c_prime;
  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return rec;
}

TrainResult train_in_memory(const std::vector<TrainScene>& scenes,
                            const TrainConfig& config,
                            const ModelWeights* resume_model,
                            const AdamState* resume_opt) {
  config.validate();
  if (scenes.empty()) throw InputError("train: no scenes");

  // Bucket scenes by length so a batch always shares one frame count. The
  // batch for step s is a pure function of s, which makes resume exact.
  std::map<std::int64_t, std::vector<int>> buckets;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    buckets[scenes[i].mixture.num_samples()].push_back(static_cast<int>(i));
  }
  std::vector<std::vector<int>> groups;
  for (auto& [len, idx] : buckets) groups.push_back(idx);

  TrainResult result;
  int start_step = 0;
  if (resume_model && resume_opt) {
    result.model = *resume_model;
    result.opt = *resume_opt;
    start_step = static_cast<int>(resume_opt->step);
  } else {
    result.model = estimator::init_weights(config.estimator, config.seed);
  }
  result.model.meta["channel_config"] =
      config.channel_mode == ChannelMode::kRandom ? "random" : "fixed";

  for (int step = start_step; step < config.steps; ++step) {
    const std::size_t gi = step % groups.size();
    const auto& group = groups[gi];
    const std::int64_t rounds = step / static_cast<int>(groups.size());
    std::vector<TrainScene> batch;
    for (int b = 0; b < config.batch_size; ++b) {
      const std::int64_t pos = rounds * config.batch_size + b;
      batch.push_back(scenes[group[pos % group.size()]]);
    }
    StepRecord rec = train_step(batch, result.model, result.opt, config, step);
    result.curve.push_back(rec);
    if (config.checkpoint_every > 0 && !config.out_dir.empty() &&
        (step + 1) % config.checkpoint_every == 0) {
      save_checkpoint(result.model, result.opt,
                      config.out_dir + "/ckpt_step" + std::to_string(step + 1) +
                          ".asaw");
    }
  }
  return result;
}

TrainResult train(const TrainConfig& config) {
  config.validate();
  std::vector<TrainScene> scenes =
      load_scenes(config.manifest_path, config.max_seconds);
  TrainResult result = train_in_memory(scenes, config);
  if (!config.out_dir.empty()) {
    estimator::save_weights(result.model, config.out_dir + "/weights.asaw");
    write_loss_csv(result.curve, config.out_dir + "/loss_curve.csv");
  }
  return result;
}

std::vector<TrainScene> load_scenes(const std::string& manifest_path,
                                    double max_seconds) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  std::vector<TrainScene> scenes;
  for (const auto& utt : manifest.at("utterances")) {
    TrainScene s;
    s.id = utt.at("id").get<std::string>();
    s.mixture = clip_seconds(wav::read(utt.at("mixture").get<std::string>()),
                             max_seconds);
    s.speech_image = clip_seconds(
        wav::read(utt.at("speech_image").get<std::string>()), max_seconds);
    s.noise_image = clip_seconds(
        wav::read(utt.at("noise_image").get<std::string>()), max_seconds);
    s.ref = utt.at("reference_index").get<int>();
    scenes.push_back(std::move(s));
  }
  return scenes;
}

void save_checkpoint(const ModelWeights& model, const AdamState& opt,
                     const std::string& path) {
  ModelWeights bundle = model;
  bundle.meta["opt_step"] = std::to_string(opt.step);
  for (const auto& [name, t] : opt.m) bundle.tensors["opt.m." + name] = t;
  for (const auto& [name, t] : opt.v) bundle.tensors["opt.v." + name] = t;
  estimator::save_weights(bundle, path);
}

void load_checkpoint(const std::string& path, ModelWeights* model,
                     AdamState* opt) {
  ModelWeights bundle = estimator::load_weights(path);
  model->config = bundle.config;
  model->meta.clear();
  model->tensors.clear();
  opt->m.clear();
  opt->v.clear();
  opt->step = 0;
  for (const auto& [k, v] : bundle.meta) {
    if (k == "opt_step") {
      opt->step = std::stoll(v);
    } else {
      model->meta[k] = v;
    }
  }
  for (const auto& [name, t] : bundle.tensors) {
    if (name.rfind("opt.m.", 0) == 0) {
      opt->m[name.substr(6)] = t;
    } else if (name.rfind("opt.v.", 0) == 0) {
      opt->v[name.substr(6)] = t;
    } else {
      model->tensors[name] = t;
    }
  }
}

void write_loss_csv(const std::vector<StepRecord>& curve,
                    const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "step,loss,c_prime,wall_ms\n";
  for (const auto& r : curve) {
    out << r.step << "," << r.loss << "," << r.c_prime << "," << r.wall_ms
        << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace training
}  // namespace asabf
