#include "asabf/estimator.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "asabf/errors.hpp"
#include "asabf/ops.hpp"
#include "asabf/rng.hpp"
#include "json.hpp"

namespace asabf {

void EstimatorConfig::validate() const {
  if (d_model <= 0 || d_model % 2 != 0) {
    throw ConfigError("d_model must be positive and even");
  }
  if (n_heads <= 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model must be divisible by n_heads");
  }
  if (n_blocks < 1) throw ConfigError("n_blocks must be >= 1");
  if (ff_dim < 1) throw ConfigError("ff_dim must be >= 1");
  if (bins < 1) throw ConfigError("bins must be >= 1");
  if (variant == Variant::kConcat && channels < 1) {
    throw ConfigError("concat variant needs a fixed channel count");
  }
  if (variant == Variant::kTac && feature_kind == FeatureKind::kIscm) {
    throw ConfigError(
        "tac variant needs channel-wise feature streams (mag-IPD); flat "
        "ISCM features are incompatible");
  }
}

std::int64_t EstimatorConfig::input_dim() const {
  if (variant == Variant::kTac) return 6LL * bins;
  if (feature_kind == FeatureKind::kIscm) {
    return 4LL * bins * channels * channels;
  }
  return 6LL * bins * channels;
}

const Tensor& ModelWeights::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) {
    throw ConfigError("missing model tensor: " + name);
  }
  return it->second;
}

namespace estimator {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

struct NamedShape {
  std::string name;
  Shape shape;
  bool is_linear;  // Glorot init when true, zeros/ones otherwise
};

std::vector<NamedShape> parameter_table(const EstimatorConfig& cfg) {
  const std::int64_t d = cfg.d_model;
  const std::int64_t ff = cfg.ff_dim;
  std::vector<NamedShape> table;
  table.push_back({"embed.w", {cfg.input_dim(), d}, true});
  table.push_back({"embed.b", {d}, false});
  for (int i = 0; i < cfg.n_blocks; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    if (cfg.variant == Variant::kTac) {
      table.push_back({p + "tac.l1", {d / 2, d}, true});
      table.push_back({p + "tac.l2", {d / 2, d}, true});
    }
    table.push_back({p + "ln1.scale", {d}, false});
    table.push_back({p + "ln1.bias", {d}, false});
    table.push_back({p + "attn.wq", {d, d}, true});
    table.push_back({p + "attn.bq", {d}, false});
    table.push_back({p + "attn.wk", {d, d}, true});
    table.push_back({p + "attn.wv", {d, d}, true});
    table.push_back({p + "attn.bv", {d}, false});
    table.push_back({p + "attn.wo", {d, d}, true});
    table.push_back({p + "attn.bo", {d}, false});
    table.push_back({p + "ln2.scale", {d}, false});
    table.push_back({p + "ln2.bias", {d}, false});
    table.push_back({p + "ffn.w1", {d, ff}, true});
    table.push_back({p + "ffn.b1", {ff}, false});
    table.push_back({p + "ffn.w2", {ff, d}, true});
    table.push_back({p + "ffn.b2", {d}, false});
  }
  for (const char* head : {"x", "n"}) {
    const std::string p = std::string("sha.") + head + ".";
    table.push_back({p + "wq", {d, d}, true});
    table.push_back({p + "bq", {d}, false});
    table.push_back({p + "wk", {d, d}, true});
  }
  return table;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// seq [T, D] x w [D, K] + b [K]
Tensor linear(const Tensor& seq, const Tensor& w, const Tensor& b) {
  Tensor out = ops::matmul(seq, w);
  Tensor bias = ops::broadcast_to(ops::reshape(b, {1, b.dim(0)}), out.shape());
  return ops::add(out, bias);
}

// layer norm with learned per-feature affine
Tensor ln_affine(const Tensor& seq, const Tensor& scale, const Tensor& bias) {
  Tensor normed = ops::layer_norm(seq);
  Tensor s = ops::broadcast_to(ops::reshape(scale, {1, scale.dim(0)}),
                               normed.shape());
  Tensor b = ops::broadcast_to(ops::reshape(bias, {1, bias.dim(0)}),
                               normed.shape());
  return ops::add(ops::mul(normed, s), b);
}

std::string variant_str(Variant v) {
  return v == Variant::kConcat ? "concat" : "tac";
}

std::string feature_str(FeatureKind k) {
  return k == FeatureKind::kIscm ? "iscm" : "magipd";
}

Variant variant_from(const std::string& s) {
  if (s == "concat") return Variant::kConcat;
  if (s == "tac") return Variant::kTac;
  throw FormatError("unknown estimator variant: " + s);
}

FeatureKind feature_from(const std::string& s) {
  if (s == "iscm") return FeatureKind::kIscm;
  if (s == "magipd") return FeatureKind::kMagIpd;
  throw FormatError("unknown feature kind: " + s);
}

}  // namespace

std::vector<std::string> parameter_names(const EstimatorConfig& config) {
  std::vector<std::string> names;
  for (const auto& row : parameter_table(config)) names.push_back(row.name);
  return names;
}

ModelWeights init_weights(const EstimatorConfig& config, std::uint64_t seed) {
  config.validate();
  ModelWeights w;
  w.config = config;
  auto rng = make_rng(seed, 0x57454947ull);
  for (const auto& row : parameter_table(config)) {
    const std::int64_t n = shape_numel(row.shape);
    std::vector<double> data(n, 0.0);
    if (row.is_linear) {
      const double fan_in = static_cast<double>(row.shape[0]);
      const double fan_out = static_cast<double>(row.shape[1]);
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : data) v = dist(rng);
    } else if (ends_with(row.name, ".scale")) {
      std::fill(data.begin(), data.end(), 1.0);
    }
    w.tensors.emplace(row.name,
                      Tensor::from_real(row.shape, std::move(data)));
  }
  return w;
}

Tensor positional_encoding(std::int64_t frames, int d_model) {
  std::vector<double> pe(frames * d_model);
  for (std::int64_t t = 0; t < frames; ++t) {
    for (int i = 0; i < d_model / 2; ++i) {
      const double rate =
          std::pow(10000.0, -2.0 * i / static_cast<double>(d_model));
      pe[t * d_model + 2 * i] = std::sin(t * rate);
      pe[t * d_model + 2 * i + 1] = std::cos(t * rate);
    }
  }
  return Tensor::from_real({frames, d_model}, std::move(pe));
}

Tensor tac_block(const Tensor& streams, const Tensor& l1, const Tensor& l2) {
  if (streams.rank() != 3) {
    throw DimensionError("tac_block: [C', T, D] streams required");
  }
  const std::int64_t C = streams.dim(0);
  const std::int64_t T = streams.dim(1);
  const std::int64_t D = streams.dim(2);
  if (D % 2 != 0) throw ConfigError("tac_block: stream dim must be even");
  if (l1.shape() != Shape{D / 2, D} || l2.shape() != Shape{D / 2, D}) {
    throw DimensionError("tac_block: transforms must be [D/2, D]");
  }
  Tensor flat = ops::reshape(streams, {C * T, D});
  Tensor own = ops::relu(ops::matmul(flat, ops::transpose2d(l1)));
  Tensor shared = ops::relu(ops::matmul(flat, ops::transpose2d(l2)));
  Tensor pooled = ops::mean_axis(ops::reshape(shared, {C, T, D / 2}), 0);
  Tensor pooled_b =
      ops::broadcast_to(ops::reshape(pooled, {1, T, D / 2}), {C, T, D / 2});
  return ops::concat({ops::reshape(own, {C, T, D / 2}), pooled_b}, 2);
}

Tensor mha_encoder_block(const Tensor& seq, const ModelWeights& weights,
                         int block_index) {
  const EstimatorConfig& cfg = weights.config;
  if (seq.rank() != 2 || seq.dim(1) != cfg.d_model) {
    throw DimensionError("mha_encoder_block: [T, d_model] required");
  }
  const std::int64_t T = seq.dim(0);
  const std::int64_t D = cfg.d_model;
  const std::int64_t H = cfg.n_heads;
  const std::int64_t dh = D / H;
  const std::string p = "block" + std::to_string(block_index) + ".";

  // attention sublayer (pre-LN)
  Tensor x1 = ln_affine(seq, weights.at(p + "ln1.scale"),
                        weights.at(p + "ln1.bias"));
  auto heads = [&](const Tensor& proj) {
    // [T, D] -> [H, T, dh]
    return ops::transpose(ops::reshape(proj, {T, H, dh}), {1, 0, 2});
  };
  Tensor q = heads(linear(x1, weights.at(p + "attn.wq"),
                          weights.at(p + "attn.bq")));
  // keys carry no bias: softmax rows are invariant to a constant key
  // offset, which would leave that bias without a defined gradient
  Tensor k = heads(ops::matmul(x1, weights.at(p + "attn.wk")));
  Tensor v = heads(linear(x1, weights.at(p + "attn.wv"),
                          weights.at(p + "attn.bv")));
  Tensor scores =
      ops::scalar_mul(ops::matmul(q, ops::transpose2d(k)),
                      1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor attn = ops::softmax_rows(scores);        // [H, T, T]
  Tensor ctx = ops::matmul(attn, v);              // [H, T, dh]
  Tensor merged =
      ops::reshape(ops::transpose(ctx, {1, 0, 2}), {T, D});
  Tensor after_attn =
      ops::add(seq, linear(merged, weights.at(p + "attn.wo"),
                           weights.at(p + "attn.bo")));

  // feedforward sublayer (pre-LN)
  Tensor x2 = ln_affine(after_attn, weights.at(p + "ln2.scale"),
                        weights.at(p + "ln2.bias"));
  Tensor hidden = ops::relu(
      linear(x2, weights.at(p + "ffn.w1"), weights.at(p + "ffn.b1")));
  Tensor ff = linear(hidden, weights.at(p + "ffn.w2"),
                     weights.at(p + "ffn.b2"));
  return ops::add(after_attn, ff);
}

Tensor sha_head(const Tensor& seq, const ModelWeights& weights,
                const std::string& head) {
  const EstimatorConfig& cfg = weights.config;
  if (seq.rank() != 2 || seq.dim(1) != cfg.d_model) {
    throw DimensionError("sha_head: [T, d_model] required");
  }
  const std::string p = "sha." + head + ".";
  Tensor q = linear(seq, weights.at(p + "wq"), weights.at(p + "bq"));
  Tensor k = ops::matmul(seq, weights.at(p + "wk"));
  Tensor scores =
      ops::scalar_mul(ops::matmul(q, ops::transpose2d(k)),
                      1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
  return ops::softmax_rows(scores);
}

AttentionWeights estimate_attention_weights(const Tensor& features,
                                            const ModelWeights& weights) {
  const EstimatorConfig& cfg = weights.config;
  cfg.validate();

  Tensor trunk;  // [T, d_model]
  if (cfg.variant == Variant::kConcat) {
    if (features.rank() != 2) {
      throw ContractError(
          "concat variant expects flat [T, dim] features, got rank " +
          std::to_string(features.rank()));
    }
    if (features.dim(1) != cfg.input_dim()) {
      throw DimensionError(
          "concat variant feature width " + std::to_string(features.dim(1)) +
          " does not match the trained input layer (" +
          std::to_string(cfg.input_dim()) +
          "); this estimator is bound to its training channel count");
    }
    const std::int64_t T = features.dim(0);
    Tensor x = linear(features, weights.at("embed.w"), weights.at("embed.b"));
    x = ops::add(x, positional_encoding(T, cfg.d_model));
    for (int i = 0; i < cfg.n_blocks; ++i) {
      x = mha_encoder_block(x, weights, i);
    }
    trunk = x;
  } else {
    if (features.rank() != 3) {
      throw ContractError(
          "tac variant expects [C', T, dim] feature streams, got rank " +
          std::to_string(features.rank()));
    }
    if (features.dim(2) != cfg.input_dim()) {
      throw DimensionError("tac variant feature width " +
                           std::to_string(features.dim(2)) +
                           " does not match 6F = " +
                           std::to_string(cfg.input_dim()));
    }
    const std::int64_t C = features.dim(0);
    const std::int64_t T = features.dim(1);
    const std::int64_t D = cfg.d_model;
    // shared embedding per channel
    Tensor flat = ops::reshape(features, {C * T, features.dim(2)});
    Tensor x = linear(flat, weights.at("embed.w"), weights.at("embed.b"));
    Tensor streams = ops::reshape(x, {C, T, D});
    Tensor pe = ops::broadcast_to(
        ops::reshape(positional_encoding(T, D), {1, T, D}), {C, T, D});
    streams = ops::add(streams, pe);
    for (int i = 0; i < cfg.n_blocks; ++i) {
      const std::string p = "block" + std::to_string(i) + ".";
      streams = tac_block(streams, weights.at(p + "tac.l1"),
                          weights.at(p + "tac.l2"));
      // C' parallel encoder blocks sharing this block's parameters
      std::vector<Tensor> channels;
      channels.reserve(C);
      for (std::int64_t c = 0; c < C; ++c) {
        Tensor one = ops::reshape(ops::slice_axis(streams, 0, c, 1), {T, D});
        channels.push_back(
            ops::reshape(mha_encoder_block(one, weights, i), {1, T, D}));
      }
      streams = ops::concat(channels, 0);
    }
    trunk = ops::mean_axis(streams, 0);
  }

  AttentionWeights out;
  out.speech = sha_head(trunk, weights, "x");
  out.noise = sha_head(trunk, weights, "n");
  return out;
}

// ---------------------------------------------------------- serialization

namespace {

constexpr char kMagic[4] = {'A', 'S', 'A', 'W'};
constexpr std::uint16_t kVersion = 1;

nlohmann::json config_json(const EstimatorConfig& cfg) {
  return {{"variant", variant_str(cfg.variant)},
          {"features", feature_str(cfg.feature_kind)},
          {"d_model", cfg.d_model},
          {"n_heads", cfg.n_heads},
          {"n_blocks", cfg.n_blocks},
          {"ff_dim", cfg.ff_dim},
          {"bins", cfg.bins},
          {"channels", cfg.channels}};
}

EstimatorConfig config_from_json(const nlohmann::json& j) {
  EstimatorConfig cfg;
  try {
    cfg.variant = variant_from(j.at("variant").get<std::string>());
    cfg.feature_kind = feature_from(j.at("features").get<std::string>());
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.n_blocks = j.at("n_blocks").get<int>();
    cfg.ff_dim = j.at("ff_dim").get<int>();
    cfg.bins = j.at("bins").get<int>();
    cfg.channels = j.at("channels").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weights header config invalid: ") +
                      e.what());
  }
  return cfg;
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

void save_weights(const ModelWeights& weights, const std::string& path) {
  weights.config.validate();
  nlohmann::json header;
  header["config"] = config_json(weights.config);
  header["meta"] = weights.meta;
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : weights.tensors) {
    const std::uint64_t len = tensor.storage().size();
    table.push_back({{"name", name},
                     {"dtype", tensor.is_complex() ? "complex128" : "real64"},
                     {"shape", tensor.shape()},
                     {"offset", offset},
                     {"len", len}});
    offset += len * sizeof(double);
  }
  header["tensors"] = table;

  std::string head_str = header.dump();
  const std::size_t unpadded = head_str.size();
  const std::size_t padded = (unpadded + 63) / 64 * 64;
  head_str.resize(padded, ' ');

  std::string blob;
  blob.append(kMagic, 4);
  put_u16(blob, kVersion);
  put_u16(blob, 0);
  put_u32(blob, static_cast<std::uint32_t>(padded));
  blob += head_str;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  for (const auto& [name, tensor] : weights.tensors) {
    const auto& data = tensor.storage();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed for " + path);
}

ModelWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a weights file (bad magic): " + path);
  }
  const auto u16 = [&](std::size_t at) {
    return static_cast<std::uint16_t>(
        static_cast<unsigned char>(bytes[at]) |
        (static_cast<unsigned char>(bytes[at + 1]) << 8));
  };
  const auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
    }
    return v;
  };
  const std::uint16_t version = u16(4);
  if (version != kVersion) {
    throw FormatError("unsupported weights version " +
                      std::to_string(version));
  }
  const std::uint32_t header_len = u32(8);
  if (header_len % 64 != 0 || 12 + static_cast<std::size_t>(header_len) > bytes.size()) {
    throw FormatError("corrupt weights header in " + path);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weights header is not valid JSON: ") +
                      e.what());
  }

  ModelWeights weights;
  weights.config = config_from_json(header.at("config"));
  weights.config.validate();
  if (header.contains("meta")) {
    for (const auto& [k, v] : header.at("meta").items()) {
      weights.meta[k] = v.get<std::string>();
    }
  }

  const std::size_t data_start = 12 + header_len;
  for (const auto& row : header.at("tensors")) {
    const std::string name = row.at("name").get<std::string>();
    const std::string dtype_s = row.at("dtype").get<std::string>();
    const Dtype dtype = dtype_s == "complex128" ? Dtype::kComplex128
                        : dtype_s == "real64"
                            ? Dtype::kReal64
                            : throw FormatError("bad dtype " + dtype_s);
    Shape shape = row.at("shape").get<Shape>();
    const std::uint64_t offset = row.at("offset").get<std::uint64_t>();
    const std::uint64_t len = row.at("len").get<std::uint64_t>();
    const std::int64_t numel = shape_numel(shape);
    const std::uint64_t want =
        dtype == Dtype::kComplex128 ? 2 * numel : numel;
    if (len != want) {
      throw FormatError("tensor " + name + " length does not match shape");
    }
    if (data_start + offset + len * sizeof(double) > bytes.size()) {
      throw FormatError("weights file truncated at tensor " + name);
    }
    std::vector<double> data(len);
    std::memcpy(data.data(), bytes.data() + data_start + offset,
                len * sizeof(double));
    weights.tensors.emplace(name,
                            Tensor::from_storage(shape, dtype, std::move(data)));
  }

  // Every parameter the config declares must be present with the declared
  // shape; extra tensors (optimizer state in checkpoints) may ride along.
  const auto expected = parameter_table(weights.config);
  for (const auto& row : expected) {
    auto it = weights.tensors.find(row.name);
    if (it == weights.tensors.end()) {
      throw FormatError("weights file missing tensor " + row.name);
    }
    if (it->second.shape() != row.shape) {
      throw FormatError("tensor " + row.name +
                        " shape does not match the declared config");
    }
  }
  return weights;
}

}  // namespace estimator
}  // namespace asabf
