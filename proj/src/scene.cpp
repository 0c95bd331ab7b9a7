#include "asabf/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "asabf/errors.hpp"
#include "asabf/fft.hpp"
#include "asabf/rng.hpp"
#include "asabf/wav.hpp"
#include "json.hpp"

namespace asabf {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double norm3(const Vec3& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

Vec3 sub3(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

bool strictly_inside(const Vec3& p, const Vec3& room) {
  for (int d = 0; d < 3; ++d) {
    if (!(p[d] > 0.0 && p[d] < room[d])) return false;
  }
  return true;
}

double utterance_power(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return p / static_cast<double>(std::max<std::size_t>(1, x.size()));
}

}  // namespace

void ArrayGeometry::validate() const {
  if (mic_positions.empty()) throw InputError("geometry needs >= 1 microphone");
  if (reference_index < 0 ||
      reference_index >= static_cast<int>(mic_positions.size())) {
    throw InputError("geometry reference_index out of range");
  }
  for (std::size_t i = 0; i < mic_positions.size(); ++i) {
    for (std::size_t j = i + 1; j < mic_positions.size(); ++j) {
      if (norm3(sub3(mic_positions[i], mic_positions[j])) <= 0.0) {
        throw InputError("geometry has coincident microphones");
      }
    }
  }
}

void SceneSpec::validate() const {
  geometry.validate();
  if (t60 < 0.0) throw InputError("t60 must be >= 0");
  if (n_traj_points < 1) throw InputError("n_traj_points must be >= 1");
  if (sample_rate <= 0.0) throw InputError("sample_rate must be > 0");
  for (const auto& m : mic_world_positions()) {
    if (!strictly_inside(m, room_dims)) {
      throw InputError("microphone outside the room");
    }
  }
  for (const auto& p : trajectory()) {
    if (!strictly_inside(p, room_dims)) {
      throw InputError("source trajectory exits the room");
    }
  }
}

std::vector<Vec3> SceneSpec::mic_world_positions() const {
  std::vector<Vec3> out;
  out.reserve(geometry.mic_positions.size());
  for (const auto& m : geometry.mic_positions) {
    out.push_back({m[0] + array_origin[0], m[1] + array_origin[1],
                   m[2] + array_origin[2]});
  }
  return out;
}

std::vector<Vec3> SceneSpec::trajectory() const {
  std::vector<Vec3> pts(n_traj_points);
  for (int k = 0; k < n_traj_points; ++k) {
    const double a = n_traj_points == 1
                         ? 0.0
                         : static_cast<double>(k) /
                               static_cast<double>(n_traj_points - 1);
    for (int d = 0; d < 3; ++d) {
      pts[k][d] = src_start[d] + a * (src_end[d] - src_start[d]);
    }
  }
  return pts;
}

void ChannelConfig::validate(int parent_channels) const {
  if (indices.empty() ||
      static_cast<int>(indices.size()) > parent_channels) {
    throw InputError("channel config size out of range");
  }
  std::vector<bool> seen(parent_channels, false);
  for (int i : indices) {
    if (i < 0 || i >= parent_channels) {
      throw InputError("channel index out of range");
    }
    if (seen[i]) throw InputError("duplicate channel index");
    seen[i] = true;
  }
}

namespace scene {

namespace {

// One mirror image of the source: position plus total reflection count.
struct ImageSource {
  Vec3 pos;
  int reflections;
};

// Allen-Berkley image enumeration for a shoebox room, pruned to images
// within `max_dist` of `center`.
std::vector<ImageSource> enumerate_images(const Vec3& room, const Vec3& src,
                                          const Vec3& center, double max_dist,
                                          int max_order) {
  std::vector<ImageSource> images;
  std::array<int, 3> p_lim;
  for (int d = 0; d < 3; ++d) {
    p_lim[d] = static_cast<int>(std::ceil(max_dist / (2.0 * room[d]))) + 1;
  }
  for (int ux = 0; ux <= 1; ++ux) {
    for (int uy = 0; uy <= 1; ++uy) {
      for (int uz = 0; uz <= 1; ++uz) {
        for (int px = -p_lim[0]; px <= p_lim[0]; ++px) {
          for (int py = -p_lim[1]; py <= p_lim[1]; ++py) {
            for (int pz = -p_lim[2]; pz <= p_lim[2]; ++pz) {
              const int refl = std::abs(px - ux) + std::abs(px) +
                               std::abs(py - uy) + std::abs(py) +
                               std::abs(pz - uz) + std::abs(pz);
              if (max_order >= 0 && refl > max_order) continue;
              Vec3 pos{(1 - 2 * ux) * src[0] + 2 * px * room[0],
                       (1 - 2 * uy) * src[1] + 2 * py * room[1],
                       (1 - 2 * uz) * src[2] + 2 * pz * room[2]};
              if (norm3(sub3(pos, center)) > max_dist) continue;
              images.push_back({pos, refl});
            }
          }
        }
      }
    }
  }
  return images;
}

// 81-tap Hann-windowed sinc pulse of area ~amp added at fractional delay.
// sin(pi (n - tau)) alternates sign with constant magnitude over integer n,
// and the window angle advances by a fixed step, so the loop needs no
// per-tap trig.
void add_sinc_pulse(std::vector<double>& h, double delay, double amp) {
  constexpr int kHalf = 40;  // 81 taps
  const int center = static_cast<int>(std::llround(delay));
  const int lo = std::max(0, center - kHalf);
  const int hi = std::min(static_cast<int>(h.size()) - 1, center + kHalf);
  if (lo > hi) return;

  const double frac = delay - std::floor(delay);
  const double sin_pi_tau = std::sin(kPi * frac);
  // sign of sin(pi(n - delay)) at n = lo
  const std::int64_t floor_delay = static_cast<std::int64_t>(std::floor(delay));
  double sign = ((lo - floor_delay) % 2 == 0) ? -sin_pi_tau : sin_pi_tau;

  const double step = kPi / (kHalf + 1.0);
  double wc = std::cos((lo - delay) * step);
  double ws = std::sin((lo - delay) * step);
  const double cd = std::cos(step);
  const double sd = std::sin(step);

  for (int n = lo; n <= hi; ++n) {
    const double k = static_cast<double>(n) - delay;
    const double window = 0.5 * (1.0 + wc);
    if (k == 0.0) {
      h[n] += amp * window;
    } else {
      h[n] += amp * window * sign / (kPi * k);
    }
    sign = -sign;
    const double nc = wc * cd - ws * sd;
    ws = ws * cd + wc * sd;
    wc = nc;
  }
}

double sabine_beta(const Vec3& room, double t60) {
  if (t60 <= 0.0) return 0.0;
  const double volume = room[0] * room[1] * room[2];
  const double surface = 2.0 * (room[0] * room[1] + room[0] * room[2] +
                                room[1] * room[2]);
  const double alpha = 0.161 * volume / (surface * t60);
  if (alpha >= 1.0) return 0.0;
  return std::sqrt(1.0 - alpha);
}

struct RirContext {
  std::vector<ImageSource> images;
  std::vector<double> beta_pow;  // beta^k lookup
  double sample_rate;
  std::int64_t length;
};

// Shared per-source-position state; mics only differ in distances.
RirContext make_rir_context(const Vec3& room, const Vec3& src,
                            const Vec3& center, double t60,
                            double sample_rate, int max_order) {
  RirContext ctx;
  ctx.sample_rate = sample_rate;
  const double beta = sabine_beta(room, t60);
  const double tail_dist = 1.2 * t60 * kSpeedOfSound;
  const double direct_dist = std::max(1e-3, norm3(sub3(src, center)));
  const double max_dist = tail_dist + direct_dist + 1.0;
  const std::int64_t tail = static_cast<std::int64_t>(
      std::ceil(1.2 * t60 * sample_rate));
  const std::int64_t direct =
      static_cast<std::int64_t>(direct_dist / kSpeedOfSound * sample_rate);
  ctx.length = std::max<std::int64_t>(256, tail + direct + 96);

  const int eff_order = (beta == 0.0) ? 0 : max_order;
  ctx.images =
      enumerate_images(room, src, center, beta == 0.0 ? direct_dist + 1.0
                                                      : max_dist,
                       eff_order);
  int max_refl = 0;
  for (const auto& im : ctx.images) max_refl = std::max(max_refl, im.reflections);
  ctx.beta_pow.resize(max_refl + 1);
  ctx.beta_pow[0] = 1.0;
  for (int k = 1; k <= max_refl; ++k) ctx.beta_pow[k] = ctx.beta_pow[k - 1] * beta;
  return ctx;
}

std::vector<double> rir_for_mic(const RirContext& ctx, const Vec3& mic) {
  std::vector<double> h(ctx.length, 0.0);
  for (const auto& im : ctx.images) {
    const double dist = std::max(1e-3, norm3(sub3(im.pos, mic)));
    const double delay = dist / kSpeedOfSound * ctx.sample_rate;
    if (delay > static_cast<double>(ctx.length + 40)) continue;
    const double amp = ctx.beta_pow[im.reflections] / (4.0 * kPi * dist);
    add_sinc_pulse(h, delay, amp);
  }
  return h;
}

void check_rir_inputs(const Vec3& room, const Vec3& src, const Vec3& mic,
                      double t60, double sample_rate) {
  if (!strictly_inside(src, room)) throw InputError("source outside the room");
  if (!strictly_inside(mic, room)) throw InputError("mic outside the room");
  if (t60 < 0.0) throw InputError("t60 must be >= 0");
  if (sample_rate <= 0.0) throw InputError("sample_rate must be > 0");
}

// Piecewise-linear crossfade gains forming an exact partition of unity.
// Segment k is flat over its interior and ramps across `xf` samples
// centered on each internal boundary.
std::vector<double> segment_gain(std::int64_t len, int n_segments, int k,
                                 std::int64_t xf) {
  std::vector<double> g(len, 0.0);
  const double seg = static_cast<double>(len) / n_segments;
  const std::int64_t b0 = static_cast<std::int64_t>(std::llround(seg * k));
  const std::int64_t b1 = static_cast<std::int64_t>(std::llround(seg * (k + 1)));
  const std::int64_t half = xf / 2;
  for (std::int64_t i = 0; i < len; ++i) {
    double v = 0.0;
    if (i >= b0 && i < b1) v = 1.0;
    // ramp across the left boundary (except for the first segment)
    if (k > 0 && i >= b0 - half && i < b0 + half) {
      v = (static_cast<double>(i - (b0 - half)) + 0.5) / static_cast<double>(xf);
    }
    // ramp across the right boundary (except for the last segment)
    if (k < n_segments - 1 && i >= b1 - half && i < b1 + half) {
      v = 1.0 - (static_cast<double>(i - (b1 - half)) + 0.5) /
                    static_cast<double>(xf);
    }
    g[i] = v;
  }
  return g;
}

}  // namespace

std::vector<double> simulate_rir(const Vec3& room_dims, const Vec3& src,
                                 const Vec3& mic, double t60,
                                 double sample_rate, int max_order) {
  check_rir_inputs(room_dims, src, mic, t60, sample_rate);
  RirContext ctx =
      make_rir_context(room_dims, src, mic, t60, sample_rate, max_order);
  return rir_for_mic(ctx, mic);
}

AudioBuffer render_moving_source(const std::vector<double>& dry,
                                 const SceneSpec& spec) {
  spec.validate();
  const std::int64_t len = static_cast<std::int64_t>(dry.size());
  if (len < spec.n_traj_points) {
    throw InputError("dry signal shorter than the trajectory point count");
  }
  const auto mics = spec.mic_world_positions();
  const auto path = spec.trajectory();
  const int n_seg = spec.n_traj_points;
  const std::int64_t xf = std::max<std::int64_t>(
      2, static_cast<std::int64_t>(std::llround(0.010 * spec.sample_rate)));

  AudioBuffer out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(mics.size(), std::vector<double>(len, 0.0));

  Vec3 array_center = spec.array_origin;
  for (int k = 0; k < n_seg; ++k) {
    RirContext ctx = make_rir_context(spec.room_dims, path[k], array_center,
                                      spec.t60, spec.sample_rate, -1);
    const std::vector<double> gain =
        n_seg == 1 ? std::vector<double>(len, 1.0)
                   : segment_gain(len, n_seg, k, xf);
    // active span of this segment's gain
    std::int64_t lo = 0, hi = len;
    while (lo < len && gain[lo] == 0.0) ++lo;
    while (hi > lo && gain[hi - 1] == 0.0) --hi;
    if (lo >= hi) continue;
    std::vector<double> piece(hi - lo);
    for (std::int64_t i = lo; i < hi; ++i) piece[i - lo] = dry[i] * gain[i];
    for (std::size_t c = 0; c < mics.size(); ++c) {
      const std::vector<double> h = rir_for_mic(ctx, mics[c]);
      const std::vector<double> conv = fft::convolve(piece, h);
      auto& dst = out.samples[c];
      const std::int64_t n =
          std::min<std::int64_t>(static_cast<std::int64_t>(conv.size()),
                                 len - lo);
      for (std::int64_t i = 0; i < n; ++i) dst[lo + i] += conv[i];
    }
  }
  return out;
}

AudioBuffer render_static_source(const std::vector<double>& dry,
                                 const SceneSpec& spec, const Vec3& position) {
  SceneSpec fixed = spec;
  fixed.src_start = position;
  fixed.src_end = position;
  fixed.n_traj_points = 1;
  return render_moving_source(dry, fixed);
}

SceneRender mix_at_snr(const AudioBuffer& speech_image,
                       const AudioBuffer& noise_image, double snr_db,
                       int ref_channel) {
  speech_image.validate();
  noise_image.validate();
  if (speech_image.channels() != noise_image.channels() ||
      speech_image.num_samples() != noise_image.num_samples()) {
    throw InputError("mix_at_snr: speech and noise dimensions differ");
  }
  if (ref_channel < 0 || ref_channel >= speech_image.channels()) {
    throw InputError("mix_at_snr: reference channel out of range");
  }
  const double p_speech = utterance_power(speech_image.samples[ref_channel]);
  const double p_noise = utterance_power(noise_image.samples[ref_channel]);
  if (p_speech <= 0.0 || p_noise <= 0.0) {
    throw InputError("mix_at_snr: zero-power speech or noise at reference");
  }
  // 10 log10(p_speech / (scale^2 p_noise)) = snr_db
  const double scale =
      std::sqrt(p_speech / (p_noise * std::pow(10.0, snr_db / 10.0)));

  SceneRender render;
  render.speech_image = speech_image;
  render.noise_image = noise_image;
  render.mixture.sample_rate = speech_image.sample_rate;
  render.mixture.samples.assign(
      speech_image.channels(),
      std::vector<double>(speech_image.num_samples(), 0.0));
  for (int c = 0; c < speech_image.channels(); ++c) {
    auto& nz = render.noise_image.samples[c];
    for (auto& v : nz) v *= scale;
    for (std::int64_t i = 0; i < speech_image.num_samples(); ++i) {
      render.mixture.samples[c][i] = speech_image.samples[c][i] + nz[i];
    }
  }
  return render;
}

ChannelConfig sample_channel_config(int c_max, std::mt19937_64& rng) {
  if (c_max < 2) throw InputError("sample_channel_config: c_max must be >= 2");
  std::uniform_int_distribution<int> count_dist(2, c_max);
  const int c_prime = count_dist(rng);
  std::vector<int> perm(c_max);
  for (int i = 0; i < c_max; ++i) perm[i] = i;
  for (int i = c_max - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(perm[i], perm[pick(rng)]);
  }
  ChannelConfig cfg;
  cfg.indices.assign(perm.begin(), perm.begin() + c_prime);
  cfg.validate(c_max);
  return cfg;
}

ArrayGeometry builtin_geometry(const std::string& name) {
  ArrayGeometry g;
  if (name == "rect5") {
    // 19 cm x 10 cm tablet frame, top-center reference.
    g.mic_positions = {
        {-0.095, 0.05, 0.0}, {0.095, 0.05, 0.0},   {-0.095, -0.05, 0.0},
        {0.095, -0.05, 0.0}, {0.0, 0.05, 0.0},
    };
    g.reference_index = 4;
  } else if (name == "grid16") {
    for (int j = 0; j < 4; ++j) {
      for (int i = 0; i < 4; ++i) {
        g.mic_positions.push_back(
            {0.05 * i - 0.075, 0.05 * j - 0.075, 0.0});
      }
    }
    g.reference_index = 0;
  } else {
    throw InputError("unknown geometry: " + name);
  }
  g.validate();
  return g;
}

std::vector<double> synth_speech_like(std::int64_t num_samples,
                                      double sample_rate,
                                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(num_samples, 0.0);

  double f0 = 100.0 + 80.0 * unit(rng);
  double phase[12] = {0};
  const int n_harm = 10;
  // syllabic envelope: smooth random segments at ~3-8 Hz
  const double syllable_s = 0.12 + 0.13 * unit(rng);
  const std::int64_t seg_len =
      std::max<std::int64_t>(1, static_cast<std::int64_t>(syllable_s * sample_rate));
  double env_cur = 0.2 + 0.8 * unit(rng);
  double env_next = 0.2 + 0.8 * unit(rng);
  bool voiced = true;
  std::int64_t seg_pos = 0;

  std::normal_distribution<double> gauss(0.0, 1.0);
  double lp = 0.0;
  for (std::int64_t i = 0; i < num_samples; ++i) {
    if (seg_pos >= seg_len) {
      seg_pos = 0;
      env_cur = env_next;
      env_next = 0.1 + 0.9 * unit(rng);
      voiced = unit(rng) > 0.25;
      f0 *= 0.9 + 0.2 * unit(rng);
      f0 = std::min(240.0, std::max(85.0, f0));
    }
    const double a = static_cast<double>(seg_pos) / static_cast<double>(seg_len);
    const double env = (1.0 - a) * env_cur + a * env_next;
    double v = 0.0;
    if (voiced) {
      for (int h = 1; h <= n_harm; ++h) {
        const double f = f0 * h;
        if (f > 0.45 * sample_rate) break;
        phase[h] += 2.0 * kPi * f / sample_rate;
        v += std::sin(phase[h]) / h;
      }
      v *= 0.35;
    } else {
      lp = 0.85 * lp + 0.15 * gauss(rng);
      v = 1.5 * lp;
    }
    x[i] = env * v;
    ++seg_pos;
  }
  // normalize to RMS 0.05
  const double rms = std::sqrt(utterance_power(x));
  if (rms > 0.0) {
    for (auto& v : x) v *= 0.05 / rms;
  }
  return x;
}

std::vector<double> synth_noise_like(std::int64_t num_samples,
                                     double sample_rate,
                                     std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(num_samples);
  double lp = 0.0;
  const double am_rate = 0.4 + 1.2 * unit(rng);
  const double am_phase = 2.0 * kPi * unit(rng);
  for (std::int64_t i = 0; i < num_samples; ++i) {
    lp = 0.9 * lp + 0.1 * gauss(rng);
    const double am =
        1.0 + 0.3 * std::sin(2.0 * kPi * am_rate * i / sample_rate + am_phase);
    x[i] = lp * am;
  }
  const double rms = std::sqrt(utterance_power(x));
  if (rms > 0.0) {
    for (auto& v : x) v *= 0.05 / rms;
  }
  return x;
}

SceneRender render_scene(const std::vector<double>& dry_speech,
                         const std::vector<double>& dry_noise,
                         const SceneSpec& spec) {
  spec.validate();
  if (dry_speech.size() != dry_noise.size()) {
    throw InputError("render_scene: dry signals must have equal length");
  }
  AudioBuffer speech = render_moving_source(dry_speech, spec);

  // Noise source position derives from the scene seed.
  auto rng = make_rng(spec.seed, 0x6e6f6973 /* noise stream */);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec3 noise_pos;
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (int d = 0; d < 3; ++d) {
      const double margin = 0.3;
      noise_pos[d] = margin + (spec.room_dims[d] - 2.0 * margin) * unit(rng);
    }
    if (norm3(sub3(noise_pos, spec.array_origin)) > 0.5) break;
  }
  AudioBuffer noise = render_static_source(dry_noise, spec, noise_pos);

  // Sensor-noise floor 30 dB below the rendered noise keeps the noise SCMs
  // full rank.
  double p = 0.0;
  for (const auto& ch : noise.samples) p += utterance_power(ch);
  p /= std::max(1, noise.channels());
  const double floor_std = std::sqrt(p) * std::pow(10.0, -30.0 / 20.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& ch : noise.samples) {
    for (auto& v : ch) v += floor_std * gauss(rng);
  }

  return mix_at_snr(speech, noise, spec.snr_db,
                    spec.geometry.reference_index);
}

std::string generate_dataset(const DatasetParams& params,
                             const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir);

  const ArrayGeometry geometry = builtin_geometry(params.geometry_name);
  const std::vector<double> room_choices{3.0, 3.5, 4.0, 4.5, 5.0};

  nlohmann::json manifest;
  manifest["dataset"] = {
      {"n_utterances", params.n_utterances},
      {"duration_s", params.duration_s},
      {"seed", params.seed},
      {"geometry", params.geometry_name},
      {"sample_rate", params.sample_rate},
      {"n_traj_points", params.n_traj_points},
      {"snr_range_db", {params.snr_lo_db, params.snr_hi_db}},
      {"t60_range_s", {params.t60_lo, params.t60_hi}},
  };
  manifest["utterances"] = nlohmann::json::array();

  const std::int64_t num_samples = static_cast<std::int64_t>(
      params.duration_s * params.sample_rate);

  for (int u = 0; u < params.n_utterances; ++u) {
    auto rng = make_rng(params.seed, static_cast<std::uint64_t>(u));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> room_pick(
        0, room_choices.size() - 1);

    SceneSpec spec;
    spec.geometry = geometry;
    spec.room_dims = {room_choices[room_pick(rng)],
                      room_choices[room_pick(rng)], 2.5};
    spec.t60 = params.t60_lo + (params.t60_hi - params.t60_lo) * unit(rng);
    spec.snr_db =
        params.snr_lo_db + (params.snr_hi_db - params.snr_lo_db) * unit(rng);
    spec.sample_rate = params.sample_rate;
    spec.n_traj_points = params.n_traj_points;
    spec.seed = derive_stream(params.seed, 1000003ull + u);

    // random array placement, away from the walls
    for (int d = 0; d < 2; ++d) {
      spec.array_origin[d] =
          0.6 + (spec.room_dims[d] - 1.2) * unit(rng);
    }
    spec.array_origin[2] = 0.9 + 0.6 * unit(rng);
    // linear trajectory with both ends inside the room
    for (int d = 0; d < 2; ++d) {
      spec.src_start[d] = 0.4 + (spec.room_dims[d] - 0.8) * unit(rng);
      spec.src_end[d] = 0.4 + (spec.room_dims[d] - 0.8) * unit(rng);
    }
    spec.src_start[2] = 1.2 + 0.5 * unit(rng);
    spec.src_end[2] = 1.2 + 0.5 * unit(rng);

    const auto dry_speech =
        synth_speech_like(num_samples, params.sample_rate, rng);
    const auto dry_noise =
        synth_noise_like(num_samples, params.sample_rate, rng);
    SceneRender render = render_scene(dry_speech, dry_noise, spec);

    ChannelConfig config = sample_channel_config(
        static_cast<int>(geometry.mic_positions.size()), rng);

    char id[32];
    std::snprintf(id, sizeof(id), "utt%04d", u);
    const std::string base = std::string(out_dir) + "/" + id;
    wav::write(base + "_mixture.wav", render.mixture);
    wav::write(base + "_speech.wav", render.speech_image);
    wav::write(base + "_noise.wav", render.noise_image);

    nlohmann::json entry = {
        {"id", id},
        {"mixture", base + "_mixture.wav"},
        {"speech_image", base + "_speech.wav"},
        {"noise_image", base + "_noise.wav"},
        {"room_dims", spec.room_dims},
        {"t60", spec.t60},
        {"snr_db", spec.snr_db},
        {"sample_rate", spec.sample_rate},
        {"seed", spec.seed},
        {"n_traj_points", spec.n_traj_points},
        {"src_start", spec.src_start},
        {"src_end", spec.src_end},
        {"array_origin", spec.array_origin},
        {"reference_index", geometry.reference_index},
        {"channel_config", config.indices},
    };
    manifest["utterances"].push_back(entry);
  }

  const std::string manifest_path = std::string(out_dir) + "/manifest.json";
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest_path);
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + manifest_path);
  return manifest_path;
}

}  // namespace scene
}  // namespace asabf
