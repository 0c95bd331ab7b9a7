#include "asabf/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "asabf/errors.hpp"
#include "asabf/estimator.hpp"
#include "asabf/gradcheck_suite.hpp"
#include "asabf/wav.hpp"
#include "json.hpp"

namespace asabf {
namespace cli {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("unknown config key: " + path + "." + key);
    }
  }
}

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key,
                T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value type at " + path + "." + key);
  }
}

Variant parse_variant(const std::string& s, const std::string& path) {
  if (s == "concat") return Variant::kConcat;
  if (s == "tac") return Variant::kTac;
  throw ConfigError("bad estimator variant at " + path + ": " + s);
}

FeatureKind parse_features(const std::string& s, const std::string& path) {
  if (s == "iscm") return FeatureKind::kIscm;
  if (s == "magipd") return FeatureKind::kMagIpd;
  throw ConfigError("bad feature kind at " + path + ": " + s);
}

features::MaskKind parse_mask_kind(const std::string& s,
                                   const std::string& path) {
  if (s == "wiener") return features::MaskKind::kWiener;
  if (s == "phase_sensitive") return features::MaskKind::kPhaseSensitive;
  throw ConfigError("bad mask kind at " + path + ": " + s);
}

beamform::ScmMode parse_mode(const std::string& s) {
  if (s == "asa") return beamform::ScmMode::kAsa;
  if (s == "recursive") return beamform::ScmMode::kRecursive;
  if (s == "uniform") return beamform::ScmMode::kUniform;
  throw ConfigError("bad scm mode: " + s);
}

metrics::EvalCondition parse_condition(const json& obj, const std::string& path) {
  check_keys(obj, path, {"name", "type", "k", "seed"});
  metrics::EvalCondition cond;
  std::string type;
  read_field(obj, path, "type", type);
  if (type == "identity") {
    cond.type = metrics::EvalCondition::Type::kIdentity;
  } else if (type == "permute") {
    cond.type = metrics::EvalCondition::Type::kPermute;
  } else if (type == "first_k") {
    cond.type = metrics::EvalCondition::Type::kFirstK;
  } else if (type == "random_k") {
    cond.type = metrics::EvalCondition::Type::kRandomK;
  } else {
    throw ConfigError("bad condition type at " + path + ": " + type);
  }
  cond.name = type;
  read_field(obj, path, "name", cond.name);
  read_field(obj, path, "k", cond.k);
  read_field(obj, path, "seed", cond.seed);
  return cond;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "$",
             {"seed", "simulate", "estimator", "stft", "training", "evaluate",
              "enhance"});
  RunConfig cfg;
  read_field(root, "$", "seed", cfg.seed);

  if (root.contains("simulate")) {
    const json& s = root.at("simulate");
    check_keys(s, "$.simulate",
               {"n_utterances", "duration_s", "geometry", "sample_rate",
                "n_traj_points", "snr_range_db", "t60_range_s"});
    read_field(s, "$.simulate", "n_utterances", cfg.simulate.n_utterances);
    read_field(s, "$.simulate", "duration_s", cfg.simulate.duration_s);
    read_field(s, "$.simulate", "geometry", cfg.simulate.geometry_name);
    read_field(s, "$.simulate", "sample_rate", cfg.simulate.sample_rate);
    read_field(s, "$.simulate", "n_traj_points", cfg.simulate.n_traj_points);
    if (s.contains("snr_range_db")) {
      const auto v = s.at("snr_range_db").get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError("$.simulate.snr_range_db needs 2 values");
      cfg.simulate.snr_lo_db = v[0];
      cfg.simulate.snr_hi_db = v[1];
    }
    if (s.contains("t60_range_s")) {
      const auto v = s.at("t60_range_s").get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError("$.simulate.t60_range_s needs 2 values");
      cfg.simulate.t60_lo = v[0];
      cfg.simulate.t60_hi = v[1];
    }
  }

  if (root.contains("stft")) {
    const json& s = root.at("stft");
    check_keys(s, "$.stft", {"frame_len", "hop"});
    read_field(s, "$.stft", "frame_len", cfg.frame_len);
    read_field(s, "$.stft", "hop", cfg.hop);
  }

  if (root.contains("estimator")) {
    const json& e = root.at("estimator");
    check_keys(e, "$.estimator",
               {"variant", "features", "d_model", "n_heads", "n_blocks",
                "ff_dim", "channels"});
    std::string variant = "tac", feats = "magipd";
    read_field(e, "$.estimator", "variant", variant);
    read_field(e, "$.estimator", "features", feats);
    cfg.estimator.variant = parse_variant(variant, "$.estimator.variant");
    cfg.estimator.feature_kind =
        parse_features(feats, "$.estimator.features");
    read_field(e, "$.estimator", "d_model", cfg.estimator.d_model);
    read_field(e, "$.estimator", "n_heads", cfg.estimator.n_heads);
    read_field(e, "$.estimator", "n_blocks", cfg.estimator.n_blocks);
    read_field(e, "$.estimator", "ff_dim", cfg.estimator.ff_dim);
    read_field(e, "$.estimator", "channels", cfg.estimator.channels);
  }
  cfg.estimator.bins = cfg.frame_len / 2 + 1;

  if (root.contains("training")) {
    const json& t = root.at("training");
    check_keys(t, "$.training",
               {"batch_size", "steps", "learning_rate", "beta1", "beta2",
                "eps", "grad_clip", "channel_config", "max_seconds",
                "checkpoint_every", "mask_kind"});
    read_field(t, "$.training", "batch_size", cfg.training.batch_size);
    read_field(t, "$.training", "steps", cfg.training.steps);
    read_field(t, "$.training", "learning_rate", cfg.training.learning_rate);
    read_field(t, "$.training", "beta1", cfg.training.beta1);
    read_field(t, "$.training", "beta2", cfg.training.beta2);
    read_field(t, "$.training", "eps", cfg.training.adam_eps);
    read_field(t, "$.training", "grad_clip", cfg.training.grad_clip);
    read_field(t, "$.training", "max_seconds", cfg.training.max_seconds);
    read_field(t, "$.training", "checkpoint_every",
               cfg.training.checkpoint_every);
    if (t.contains("channel_config")) {
      const std::string mode = t.at("channel_config").get<std::string>();
      if (mode == "fixed") {
        cfg.training.channel_mode = ChannelMode::kFixed;
      } else if (mode == "random") {
        cfg.training.channel_mode = ChannelMode::kRandom;
      } else {
        throw ConfigError("bad value at $.training.channel_config: " + mode);
      }
    }
    if (t.contains("mask_kind")) {
      cfg.training.mask_kind = parse_mask_kind(
          t.at("mask_kind").get<std::string>(), "$.training.mask_kind");
    }
  }

  if (root.contains("evaluate")) {
    const json& e = root.at("evaluate");
    check_keys(e, "$.evaluate", {"filter_len", "conditions"});
    read_field(e, "$.evaluate", "filter_len", cfg.filter_len);
    if (e.contains("conditions")) {
      int i = 0;
      for (const auto& c : e.at("conditions")) {
        cfg.conditions.push_back(parse_condition(
            c, "$.evaluate.conditions[" + std::to_string(i) + "]"));
        ++i;
      }
    }
  }

  if (root.contains("enhance")) {
    const json& e = root.at("enhance");
    check_keys(e, "$.enhance", {"mode", "lambda", "loading"});
    if (e.contains("mode")) {
      cfg.enhance_mode = parse_mode(e.at("mode").get<std::string>());
    }
    read_field(e, "$.enhance", "lambda", cfg.lambda);
    read_field(e, "$.enhance", "loading", cfg.loading);
  }

  cfg.simulate.seed = cfg.seed;
  cfg.training.seed = cfg.seed;
  cfg.training.frame_len = cfg.frame_len;
  cfg.training.hop = cfg.hop;
  cfg.training.estimator = cfg.estimator;
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error)) return kExitConfig;
  if (dynamic_cast<const IoError*>(&error)) return kExitIo;
  if (dynamic_cast<const NumericError*>(&error)) return kExitNumeric;
  if (dynamic_cast<const DimensionError*>(&error)) return kExitMismatch;
  if (dynamic_cast<const ContractError*>(&error)) return kExitMismatch;
  if (dynamic_cast<const FormatError*>(&error)) return kExitMismatch;
  if (dynamic_cast<const InputError*>(&error)) return kExitMismatch;
  return 1;
}

namespace {

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 int n_override, std::int64_t seed_override) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  if (n_override >= 0) cfg.simulate.n_utterances = n_override;
  if (seed_override >= 0) {
    cfg.simulate.seed = static_cast<std::uint64_t>(seed_override);
  }
  const std::string manifest = scene::generate_dataset(cfg.simulate, out_dir);
  std::cout << manifest << "\n";
  std::cout << "utterances: " << cfg.simulate.n_utterances
            << ", geometry: " << cfg.simulate.geometry_name
            << ", seed: " << cfg.simulate.seed << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& manifest,
              const std::string& out_dir, std::int64_t seed_override,
              const std::string& resume, const std::string& channel_config) {
  RunConfig cfg = load_run_config(config_path);
  cfg.training.manifest_path = manifest;
  cfg.training.out_dir = out_dir;
  if (seed_override >= 0) {
    cfg.training.seed = static_cast<std::uint64_t>(seed_override);
  }
  if (!channel_config.empty()) {
    if (channel_config == "fixed") {
      cfg.training.channel_mode = ChannelMode::kFixed;
    } else if (channel_config == "random") {
      cfg.training.channel_mode = ChannelMode::kRandom;
    } else {
      throw ConfigError("bad --channel-config value: " + channel_config);
    }
  }
  std::filesystem::create_directories(out_dir);

  auto scenes = training::load_scenes(cfg.training.manifest_path,
                                      cfg.training.max_seconds);
  if (scenes.empty()) throw InputError("manifest has no utterances");
  // the concat variant binds to the manifest's channel count
  if (cfg.training.estimator.variant == Variant::kConcat &&
      cfg.training.estimator.channels == 0) {
    cfg.training.estimator.channels = scenes[0].mixture.channels();
  }

  TrainResult result;
  if (!resume.empty()) {
    ModelWeights model;
    AdamState opt;
    training::load_checkpoint(resume, &model, &opt);
    result = training::train_in_memory(scenes, cfg.training, &model, &opt);
  } else {
    result = training::train_in_memory(scenes, cfg.training);
  }
  const std::string weights_path = out_dir + "/weights.asaw";
  estimator::save_weights(result.model, weights_path);
  training::write_loss_csv(result.curve, out_dir + "/loss_curve.csv");
  std::cout << weights_path << "\n";
  if (!result.curve.empty()) {
    std::cout << "final loss: " << result.curve.back().loss << " dB over "
              << result.curve.size() << " steps\n";
  }
  return kExitOk;
}

int cmd_enhance(const std::string& in_wav, const std::string& weights_path,
                const std::string& speech_wav, const std::string& noise_wav,
                const std::string& out_wav, const std::string& diag_path,
                const std::string& mode_str, int ref, double lambda,
                int frame_len, int hop) {
  AudioBuffer mixture = wav::read(in_wav);
  if (mixture.channels() < 2) {
    throw InputError("beamforming needs at least 2 channels, got " +
                     std::to_string(mixture.channels()));
  }
  beamform::EnhanceOptions opts;
  opts.mode = parse_mode(mode_str);
  opts.ref = ref;
  opts.lambda = lambda;
  opts.frame_len = frame_len;
  opts.hop = hop;

  ModelWeights model;
  if (opts.mode == beamform::ScmMode::kAsa) {
    if (weights_path.empty()) {
      throw ConfigError("--weights is required for --mode asa");
    }
    model = estimator::load_weights(weights_path);
    opts.model = &model;
  }

  if (speech_wav.empty() || noise_wav.empty()) {
    throw ConfigError(
        "oracle masks need --speech and --noise (the clean component "
        "images); a learned mask estimator is not part of this toolkit");
  }
  AudioBuffer speech = wav::read(speech_wav);
  AudioBuffer noise = wav::read(noise_wav);
  beamform::MaskSource masks;
  masks.speech_image = &speech;
  masks.noise_image = &noise;

  beamform::EnhanceResult result = beamform::enhance(mixture, masks, opts);
  wav::write(out_wav, result.audio);
  const std::string diag = result.diagnostics.to_json();
  if (!diag_path.empty()) {
    std::ofstream out(diag_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + diag_path);
    out << diag << "\n";
  }
  std::cout << diag << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& config_path, const std::string& manifest,
                 const std::vector<std::string>& weight_files,
                 const std::string& out_dir, int workers) {
  RunConfig cfg = load_run_config(config_path);
  if (cfg.conditions.empty()) {
    cfg.conditions.push_back(metrics::EvalCondition{});
  }
  std::filesystem::create_directories(out_dir);

  std::vector<std::string> outputs;
  auto run_one = [&](const std::string& tag, const ModelWeights* model) {
    beamform::EnhanceOptions opts;
    opts.mode = model ? beamform::ScmMode::kAsa : cfg.enhance_mode;
    if (!model && opts.mode == beamform::ScmMode::kAsa) {
      opts.mode = beamform::ScmMode::kRecursive;
    }
    opts.model = model;
    opts.frame_len = cfg.frame_len;
    opts.hop = cfg.hop;
    opts.lambda = cfg.lambda;
    opts.mvdr.loading = cfg.loading;
    metrics::MetricReport report = metrics::evaluate_dataset(
        manifest, cfg.conditions, opts, cfg.filter_len, workers);
    const std::string csv = out_dir + "/report_" + tag + ".csv";
    const std::string summary = out_dir + "/summary_" + tag + ".json";
    report.write_csv(csv);
    std::ofstream out(summary, std::ios::trunc);
    if (!out) throw IoError("cannot write " + summary);
    out << report.summary_json() << "\n";
    outputs.push_back(csv);
    outputs.push_back(summary);
  };

  if (weight_files.empty()) {
    run_one("baseline", nullptr);
  } else {
    int i = 0;
    for (const auto& wf : weight_files) {
      ModelWeights model = estimator::load_weights(wf);
      model.meta["model_id"] = std::filesystem::path(wf).stem().string();
      run_one("model" + std::to_string(i++), &model);
    }
  }
  for (const auto& p : outputs) std::cout << p << "\n";
  return kExitOk;
}

int cmd_gradcheck(const std::string& scale) {
  if (scale != "tiny" && scale != "small") {
    throw ConfigError("--scale must be tiny or small");
  }
  const auto rows = gradcheck::run_suite(scale == "small");
  std::cout << gradcheck::format_table(rows);
  if (!gradcheck::all_passed(rows)) {
    std::cout << "gradcheck: FAILED\n";
    return kExitNumeric;
  }
  std::cout << "gradcheck: all checks passed\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{
      "Mask-based MVDR beamformer with attention-driven spatial covariance "
      "aggregation"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", manifest, resume, channel_config;
  int n_override = -1;
  std::int64_t seed_override = -1;
  int workers = 1;

  auto* simulate = app.add_subcommand("simulate", "Generate a scene dataset");
  simulate->add_option("--config", config_path, "JSON run configuration");
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_option("--n", n_override, "number of utterances (override)");
  simulate->add_option("--seed", seed_override, "dataset seed (override)");

  auto* train = app.add_subcommand("train", "Train the attention estimator");
  train->add_option("--config", config_path, "JSON run configuration")
      ->required();
  train->add_option("--manifest", manifest, "dataset manifest")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--seed", seed_override, "training seed (override)");
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_option("--channel-config", channel_config,
                    "fixed|random channel sampling (override)");

  std::string in_wav, weights_path, speech_wav, noise_wav, out_wav, diag_path;
  std::string mode_str = "asa";
  int ref = 0, frame_len = 1024, hop = 256;
  double lambda = 0.9900498337491681;
  auto* enhance = app.add_subcommand("enhance", "Beamform one mixture");
  enhance->add_option("--in", in_wav, "multichannel mixture WAV")->required();
  enhance->add_option("--weights", weights_path, "estimator weights (asa)");
  enhance->add_option("--speech", speech_wav,
                      "clean speech image WAV for oracle masks");
  enhance->add_option("--noise", noise_wav,
                      "noise image WAV for oracle masks");
  enhance->add_option("--out", out_wav, "mono output WAV")->required();
  enhance->add_option("--diag", diag_path, "diagnostics JSON path");
  enhance->add_option("--mode", mode_str, "asa|recursive|uniform");
  enhance->add_option("--ref", ref, "reference channel");
  enhance->add_option("--lambda", lambda, "recursive forgetting factor");
  enhance->add_option("--frame-len", frame_len, "STFT frame length");
  enhance->add_option("--hop", hop, "STFT hop");

  std::vector<std::string> weight_files;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate on a manifest");
  evaluate->add_option("--config", config_path, "JSON run configuration")
      ->required();
  evaluate->add_option("--manifest", manifest, "dataset manifest")->required();
  evaluate->add_option("--weights", weight_files,
                       "estimator weights (repeatable; empty = recursive "
                       "baseline)");
  evaluate->add_option("--out", out_dir, "output directory")->required();
  evaluate->add_option("--workers", workers, "parallel workers");

  std::string scale = "tiny";
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck_cmd->add_option("--scale", scale, "tiny|small");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (simulate->parsed()) {
      return cmd_simulate(config_path, out_dir, n_override, seed_override);
    }
    if (train->parsed()) {
      return cmd_train(config_path, manifest, out_dir, seed_override, resume,
                       channel_config);
    }
    if (enhance->parsed()) {
      return cmd_enhance(in_wav, weights_path, speech_wav, noise_wav, out_wav,
                         diag_path, mode_str, ref, lambda, frame_len, hop);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(config_path, manifest, weight_files, out_dir,
                          workers);
    }
    if (gradcheck_cmd->parsed()) {
      return cmd_gradcheck(scale);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitConfig;
}

}  // namespace cli
}  // namespace asabf
