#ifndef ASABF_TRAINING_HPP_
#define ASABF_TRAINING_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "asabf/beamform.hpp"
#include "asabf/estimator.hpp"
#include "asabf/scene.hpp"

namespace asabf {

enum class ChannelMode { kFixed, kRandom };

struct TrainConfig {
  std::string manifest_path;
  EstimatorConfig estimator;
  int batch_size = 2;
  int steps = 200;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;
  ChannelMode channel_mode = ChannelMode::kFixed;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: only the final weights are written
  std::string out_dir;
  int frame_len = 1024;
  int hop = 256;
  double max_seconds = 4.0;  // utterances are clipped to this length
  features::MaskKind mask_kind = features::MaskKind::kWiener;

  void validate() const;
};

// One training scene held in memory.
struct TrainScene {
  AudioBuffer mixture;
  AudioBuffer speech_image;
  AudioBuffer noise_image;
  int ref = 0;
  std::string id;
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::int64_t step = 0;
};

struct StepRecord {
  int step = 0;
  double loss = 0.0;
  int c_prime = 0;
  double wall_ms = 0.0;
};

struct TrainResult {
  ModelWeights model;
  AdamState opt;
  std::vector<StepRecord> curve;
};

namespace training {

// Scale-dependent SNR loss in dB (negated, so lower is better):
// -10 log10((||s||^2 + eps) / (||s - s_hat||^2 + eps)).
Tensor snr_loss(const Tensor& estimate, const Tensor& target,
                double eps = 1e-8);

// The differentiable pipeline of one scene: oracle masks -> features ->
// attention -> aggregation -> MVDR -> synthesis -> SNR loss. Only the
// estimator parameters carry gradients.
Tensor scene_loss(const TrainScene& scene, const ModelWeights& model,
                  int frame_len, int hop, features::MaskKind mask_kind,
                  const beamform::MvdrOptions& mvdr = {});

// One optimizer step over a batch; the same channel config applies to the
// whole minibatch when channel_mode is kRandom.
StepRecord train_step(const std::vector<TrainScene>& batch,
                      ModelWeights& model, AdamState& opt,
                      const TrainConfig& config, int step_index);

// Full loop over in-memory scenes; deterministic per (config, seed).
// Passing a checkpointed (model, opt) resumes at step opt.step and
// reproduces the uninterrupted trajectory.
TrainResult train_in_memory(const std::vector<TrainScene>& scenes,
                            const TrainConfig& config,
                            const ModelWeights* resume_model = nullptr,
                            const AdamState* resume_opt = nullptr);

// Loads the manifest's scenes and runs train_in_memory, writing the final
// weights, optional checkpoints, and the loss CSV into config.out_dir.
TrainResult train(const TrainConfig& config);

std::vector<TrainScene> load_scenes(const std::string& manifest_path,
                                    double max_seconds);

// Checkpoints embed the optimizer moments next to the model tensors.
void save_checkpoint(const ModelWeights& model, const AdamState& opt,
                     const std::string& path);
void load_checkpoint(const std::string& path, ModelWeights* model,
                     AdamState* opt);

void write_loss_csv(const std::vector<StepRecord>& curve,
                    const std::string& path);

}  // namespace training
}  // namespace asabf

#endif  // ASABF_TRAINING_HPP_
