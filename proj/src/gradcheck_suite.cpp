#include "asabf/gradcheck_suite.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "asabf/autodiff.hpp"
#include "asabf/beamform.hpp"
#include "asabf/dsp.hpp"
#include "asabf/errors.hpp"
#include "asabf/estimator.hpp"
#include "asabf/features.hpp"
#include "asabf/ops.hpp"
#include "asabf/rng.hpp"
#include "asabf/scene.hpp"
#include "asabf/training.hpp"

namespace asabf {
namespace gradcheck {

namespace {

Tensor random_real(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                   double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from_real(std::move(shape), std::move(v));
}

Tensor random_complex(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  const std::int64_t n = shape_numel(shape);
  std::vector<std::complex<double>> v(n);
  for (auto& x : v) x = {dist(rng), dist(rng)};
  return Tensor::from_complex(std::move(shape), v);
}

Tensor random_hpd(std::int64_t c, std::mt19937_64& rng) {
  Tensor b = random_complex({c, c}, rng);
  Tensor h = ops::matmul(b, ops::hermitian(b));
  return ops::add(h, ops::scalar_mul(Tensor::eye(c, Dtype::kComplex128), 1.0));
}

Tensor scalarize(const Tensor& t, std::uint64_t seed) {
  auto rng = make_rng(seed);
  if (t.is_complex()) {
    Tensor w = random_complex(t.shape(), rng);
    Tensor p = ops::mul(t, w);
    return ops::add(ops::sum(ops::real(p)), ops::sum(ops::imag(p)));
  }
  Tensor w = random_real(t.shape(), rng);
  return ops::sum(ops::mul(t, w));
}

// One tiny synthetic scene sized to F = 5, T = 6 at frame_len 8, hop 2.
TrainScene tiny_scene(std::uint64_t seed, int channels,
                                std::int64_t num_samples) {
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  TrainScene scene;
  scene.id = "tiny";
  scene.ref = 0;
  scene.mixture.sample_rate = 160.0;
  scene.speech_image.sample_rate = 160.0;
  scene.noise_image.sample_rate = 160.0;
  for (int c = 0; c < channels; ++c) {
    std::vector<double> sp(num_samples), nz(num_samples), mix(num_samples);
    for (std::int64_t i = 0; i < num_samples; ++i) {
      sp[i] = dist(rng);
      nz[i] = 0.5 * dist(rng);
      mix[i] = sp[i] + nz[i];
    }
    scene.speech_image.samples.push_back(std::move(sp));
    scene.noise_image.samples.push_back(std::move(nz));
    scene.mixture.samples.push_back(std::move(mix));
  }
  return scene;
}

double pipeline_error(const EstimatorConfig& cfg, int frame_len, int hop,
                      std::int64_t num_samples, int channels,
                      std::uint64_t seed) {
  const TrainScene scene = tiny_scene(seed, channels, num_samples);
  const ModelWeights init = estimator::init_weights(cfg, seed + 1);
  const std::vector<std::string> names = estimator::parameter_names(cfg);

  std::vector<Tensor> inputs;
  inputs.reserve(names.size());
  for (const auto& n : names) inputs.push_back(init.at(n));

  auto f = [&](const std::vector<Tensor>& vars) {
    ModelWeights w;
    w.config = cfg;
    for (std::size_t i = 0; i < names.size(); ++i) {
      w.tensors.emplace(names[i], vars[i]);
    }
    return training::scene_loss(scene, w, frame_len, hop,
                                features::MaskKind::kWiener);
  };
  return grad_check(f, inputs, 1e-5);
}

CheckRow check(const std::string& name, double threshold,
               const std::function<double()>& run) {
  CheckRow row;
  row.name = name;
  row.threshold = threshold;
  row.max_rel_err = run();
  row.pass = std::isfinite(row.max_rel_err) && row.max_rel_err < threshold;
  return row;
}

}  // namespace

double end_to_end_error(bool tac_variant) {
  EstimatorConfig cfg;
  cfg.variant = tac_variant ? Variant::kTac : Variant::kConcat;
  cfg.feature_kind =
      tac_variant ? FeatureKind::kMagIpd : FeatureKind::kIscm;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_blocks = 1;
  cfg.ff_dim = 12;
  cfg.bins = 5;  // frame_len 8
  cfg.channels = tac_variant ? 0 : 2;
  // num_samples 10 at hop 2 gives T = 6 frames
  return pipeline_error(cfg, 8, 2, 10, 2, tac_variant ? 21u : 22u);
}

std::vector<CheckRow> run_suite(bool small) {
  std::vector<CheckRow> rows;
  auto rng = make_rng(0x47434845ull);

  rows.push_back(check("matmul (real)", 1e-7, [&]() {
    Tensor a = random_real({3, 4}, rng);
    Tensor b = random_real({4, 2}, rng);
    return grad_check(
        [](const std::vector<Tensor>& in) {
          return scalarize(ops::matmul(in[0], in[1]), 301);
        },
        {a, b});
  }));
  rows.push_back(check("matmul (complex)", 1e-6, [&]() {
    Tensor a = random_complex({2, 3}, rng);
    Tensor b = random_complex({3, 2}, rng);
    return grad_check(
        [](const std::vector<Tensor>& in) {
          return scalarize(ops::matmul(in[0], in[1]), 302);
        },
        {a, b});
  }));
  rows.push_back(check("cinv (hermitian 3x3)", 1e-6, [&]() {
    Tensor a = random_hpd(3, rng);
    return grad_check(
        [](const std::vector<Tensor>& in) {
          return scalarize(ops::cinv(in[0]), 303);
        },
        {a});
  }));
  rows.push_back(check("layer_norm", 1e-6, [&]() {
    Tensor x = random_real({3, 6}, rng);
    return grad_check(
        [](const std::vector<Tensor>& in) {
          return scalarize(ops::layer_norm(in[0]), 304);
        },
        {x});
  }));
  rows.push_back(check("softmax_rows", 1e-6, [&]() {
    Tensor x = random_real({4, 5}, rng, -2.0, 2.0);
    return grad_check(
        [](const std::vector<Tensor>& in) {
          return scalarize(ops::softmax_rows(in[0]), 305);
        },
        {x});
  }));
  rows.push_back(check("relu", 1e-6, [&]() {
    Tensor x = random_real({12}, rng, 0.2, 1.0);
    Tensor s = random_real({12}, rng, -1.0, -0.2);
    Tensor prod = ops::mul(x, s);
    return grad_check(
        [](const std::vector<Tensor>& in) {
          return scalarize(ops::relu(in[0]), 306);
        },
        {prod});
  }));
  rows.push_back(check("mul/div (complex)", 1e-6, [&]() {
    Tensor a = random_complex({6}, rng);
    Tensor b = ops::add(random_complex({6}, rng, 0.3),
                        Tensor::from_complex({6}, std::vector<std::complex<double>>(
                                                      6, {1.5, 0.7})));
    return grad_check(
        [](const std::vector<Tensor>& in) {
          return ops::add(scalarize(ops::mul(in[0], in[1]), 307),
                          scalarize(ops::div(in[0], in[1]), 313));
        },
        {a, b});
  }));
  rows.push_back(check("abs2/angle", 1e-6, [&]() {
    Tensor z = ops::add(random_complex({6}, rng, 0.3),
                        Tensor::from_complex({6}, std::vector<std::complex<double>>(
                                                      6, {2.0, 1.0})));
    return grad_check(
        [](const std::vector<Tensor>& in) {
          return ops::add(scalarize(ops::abs2(in[0]), 308),
                          scalarize(ops::angle(in[0]), 309));
        },
        {z});
  }));
  rows.push_back(check("cos/sin/log", 1e-6, [&]() {
    Tensor x = random_real({8}, rng, 0.5, 2.0);
    return grad_check(
        [](const std::vector<Tensor>& in) {
          Tensor t = ops::add(ops::cos(in[0]), ops::sin(in[0]));
          return scalarize(ops::add(t, ops::log(in[0])), 310);
        },
        {x});
  }));
  rows.push_back(check("irfft/overlap_add (synthesis path)", 1e-6, [&]() {
    Tensor spec = random_complex({4, 5}, rng);
    return grad_check(
        [](const std::vector<Tensor>& in) {
          return scalarize(dsp::istft_op(in[0], 8, 2, 8), 311);
        },
        {spec});
  }));
  rows.push_back(check("trace/broadcast/where", 1e-6, [&]() {
    Tensor a = random_hpd(2, rng);
    Tensor mask = Tensor::from_real({2, 1, 1}, {1.0, 0.0});
    return grad_check(
        [mask](const std::vector<Tensor>& in) {
          Tensor batch = ops::broadcast_to(
              ops::reshape(in[0], {1, 2, 2}), {2, 2, 2});
          Tensor tr = ops::reshape(ops::trace_last2(batch), {2, 1, 1});
          Tensor sel = ops::where(
              mask, tr, ops::scalar_mul(tr, {0.5, 0.25}));
          return ops::add(ops::sum(ops::real(sel)),
                          ops::sum(ops::imag(sel)));
        },
        {a});
  }));
  rows.push_back(check("tac_block", 1e-6, [&]() {
    Tensor streams = random_real({3, 2, 6}, rng);
    Tensor l1 = random_real({3, 6}, rng);
    Tensor l2 = random_real({3, 6}, rng);
    return grad_check(
        [](const std::vector<Tensor>& in) {
          return scalarize(estimator::tac_block(in[0], in[1], in[2]), 312);
        },
        {streams, l1, l2});
  }));
  rows.push_back(check("snr_loss", 1e-7, [&]() {
    Tensor est = random_real({24}, rng);
    Tensor target = random_real({24}, rng);
    return grad_check(
        [target](const std::vector<Tensor>& in) {
          return training::snr_loss(in[0], target);
        },
        {est});
  }));

  rows.push_back(check("end-to-end pipeline (tac, C=2 F=5 T=6)", 1e-4,
                       []() { return end_to_end_error(true); }));
  rows.push_back(check("end-to-end pipeline (concat, C=2 F=5 T=6)", 1e-4,
                       []() { return end_to_end_error(false); }));
  if (small) {
    rows.push_back(check("end-to-end pipeline (tac, C=3 F=9 T=8)", 1e-4, []() {
      EstimatorConfig cfg;
      cfg.variant = Variant::kTac;
      cfg.feature_kind = FeatureKind::kMagIpd;
      cfg.d_model = 8;
      cfg.n_heads = 2;
      cfg.n_blocks = 1;
      cfg.ff_dim = 12;
      cfg.bins = 9;  // frame_len 16
      cfg.channels = 0;
      return pipeline_error(cfg, 16, 4, 28, 3, 23u);
    }));
  }

  // Broken-rule self-test: the harness must flag a corrupted backward rule.
  {
    CheckRow row;
    row.name = "broken-rule self-test";
    row.threshold = 1e-2;
    row.expect_failure = true;
    auto rng2 = make_rng(99);
    Tensor x = random_real({4}, rng2);
    row.max_rel_err = grad_check(
        [](const std::vector<Tensor>& in) {
          std::vector<double> out = in[0].storage();
          for (auto& v : out) v *= 2.0;
          Tensor fwd =
              Tensor::from_storage(in[0].shape(), Dtype::kReal64, out);
          Tensor y = autodiff::custom_op(
              "broken_double", {in[0]}, fwd,
              [](const Tensor& g, const std::vector<Tensor>&) {
                return std::vector<Tensor>{g};
              });
          return ops::sum(y);
        },
        {x});
    row.pass = row.max_rel_err > row.threshold;
    rows.push_back(row);
  }
  return rows;
}

bool all_passed(const std::vector<CheckRow>& rows) {
  for (const auto& r : rows) {
    if (!r.pass) return false;
  }
  return true;
}

std::string format_table(const std::vector<CheckRow>& rows) {
  std::ostringstream os;
  os << "check                                        max_rel_err  threshold  "
        "status\n";
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-44s %11.3e  %9.0e  %s\n",
                  r.name.c_str(), r.max_rel_err, r.threshold,
                  r.pass ? "pass" : "FAIL");
    os << line;
  }
  return os.str();
}

}  // namespace gradcheck
}  // namespace asabf
