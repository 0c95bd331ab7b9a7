#ifndef ASABF_SCENE_HPP_
#define ASABF_SCENE_HPP_

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "asabf/dsp.hpp"

namespace asabf {

using Vec3 = std::array<double, 3>;

struct ArrayGeometry {
  // Microphone coordinates in the array-local frame, meters.
  std::vector<Vec3> mic_positions;
  int reference_index = 0;
  void validate() const;
};

struct SceneSpec {
  Vec3 room_dims{4.0, 4.0, 2.5};  // width, depth, height
  double t60 = 0.2;
  Vec3 src_start{1.0, 1.0, 1.5};
  Vec3 src_end{3.0, 3.0, 1.5};
  int n_traj_points = 128;
  double snr_db = 5.0;
  double sample_rate = 16000.0;
  std::uint64_t seed = 0;
  ArrayGeometry geometry;
  Vec3 array_origin{2.0, 2.0, 1.2};

  void validate() const;
  std::vector<Vec3> mic_world_positions() const;
  // n_traj_points equally spaced positions from src_start to src_end.
  std::vector<Vec3> trajectory() const;
};

// Ordered subset of channels of a parent geometry.
struct ChannelConfig {
  std::vector<int> indices;
  void validate(int parent_channels) const;
};

struct SceneRender {
  AudioBuffer mixture;
  AudioBuffer speech_image;
  AudioBuffer noise_image;
};

namespace scene {

inline constexpr double kSpeedOfSound = 343.0;

// Shoebox image-source RIR with uniform wall reflection derived from t60
// via Sabine's formula. max_order < 0 selects the order covering an image
// distance of 1.2 * t60 * c; max_order = 0 keeps only the direct path.
std::vector<double> simulate_rir(const Vec3& room_dims, const Vec3& src,
                                 const Vec3& mic, double t60,
                                 double sample_rate, int max_order = -1);

// Renders a dry mono signal moving along the spec trajectory: the signal is
// split into n_traj_points segments with 10 ms linear crossfades, each
// convolved with the RIR of its position. Output is trimmed to the dry
// length, one channel per microphone.
AudioBuffer render_moving_source(const std::vector<double>& dry,
                                 const SceneSpec& spec);

// Static point source at `position` rendered to all microphones.
AudioBuffer render_static_source(const std::vector<double>& dry,
                                 const SceneSpec& spec, const Vec3& position);

// Scales the noise image so that the reference-channel SNR over the full
// utterance equals snr_db, and forms mixture = speech + scaled noise.
SceneRender mix_at_snr(const AudioBuffer& speech_image,
                       const AudioBuffer& noise_image, double snr_db,
                       int ref_channel);

// Draws C' ~ U{2..c_max} distinct channels in random permutation.
ChannelConfig sample_channel_config(int c_max, std::mt19937_64& rng);

// "rect5": 5 mics on a 19 cm x 10 cm tablet frame (4 corners plus the
// top-center reference). "grid16": 4x4 planar grid, 5 cm pitch, corner
// reference.
ArrayGeometry builtin_geometry(const std::string& name);

// Seeded speech-like dry source: amplitude-modulated harmonic complex with
// pitch drift and pauses.
std::vector<double> synth_speech_like(std::int64_t num_samples,
                                      double sample_rate,
                                      std::mt19937_64& rng);

// Seeded noise-like dry source: low-passed white noise with slow AM.
std::vector<double> synth_noise_like(std::int64_t num_samples,
                                     double sample_rate, std::mt19937_64& rng);

// Full scene: moving speech source plus one static noise point source at a
// seeded position (plus a -30 dB sensor-noise floor on the noise image),
// mixed at the spec SNR. mixture == speech_image + noise_image exactly.
SceneRender render_scene(const std::vector<double>& dry_speech,
                         const std::vector<double>& dry_noise,
                         const SceneSpec& spec);

struct DatasetParams {
  int n_utterances = 8;
  double duration_s = 3.0;
  std::uint64_t seed = 0;
  std::string geometry_name = "rect5";
  double sample_rate = 16000.0;
  int n_traj_points = 128;
  double snr_lo_db = 2.0;
  double snr_hi_db = 8.0;
  double t60_lo = 0.1;
  double t60_hi = 0.3;
};

// Simulates n_utterances scenes (room sizes from {3.0..5.0} m, height
// 2.5 m), writes mixture/speech/noise WAVs plus manifest.json into out_dir
// and returns the manifest path. Deterministic per (params, seed).
std::string generate_dataset(const DatasetParams& params,
                             const std::string& out_dir);

}  // namespace scene
}  // namespace asabf

#endif  // ASABF_SCENE_HPP_
