#ifndef ASABF_ESTIMATOR_HPP_
#define ASABF_ESTIMATOR_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "asabf/tensor.hpp"

namespace asabf {

enum class Variant { kConcat, kTac };
enum class FeatureKind { kIscm, kMagIpd };

struct EstimatorConfig {
  Variant variant = Variant::kTac;
  FeatureKind feature_kind = FeatureKind::kMagIpd;
  int d_model = 64;
  int n_heads = 4;
  int n_blocks = 2;
  int ff_dim = 128;
  int bins = 0;      // F of the front-end
  int channels = 0;  // fixed C for the concat variant; unused for tac

  void validate() const;
  // Embedding input width implied by (variant, feature_kind, bins, channels).
  std::int64_t input_dim() const;
};

// Named parameter store. Iteration order (std::map) fixes serialization
// and initialization order.
struct ModelWeights {
  EstimatorConfig config;
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> meta;  // free-form provenance fields

  const Tensor& at(const std::string& name) const;
};

// Row-stochastic aggregation weights, one row per target frame.
struct AttentionWeights {
  Tensor speech;  // real [T, T]
  Tensor noise;   // real [T, T]
};

namespace estimator {

// Canonical parameter names for a config, in initialization order.
std::vector<std::string> parameter_names(const EstimatorConfig& config);

// Scaled uniform init (+-sqrt(6/(fan_in+fan_out))); zero biases; unit
// layer-norm scales. Deterministic per seed.
ModelWeights init_weights(const EstimatorConfig& config, std::uint64_t seed);

// Sinusoidal positions [T, d_model].
Tensor positional_encoding(std::int64_t frames, int d_model);

// Eq-style transform-average-concatenate block on [C', T, D] streams with
// shared (D/2) x D transforms.
Tensor tac_block(const Tensor& streams, const Tensor& l1, const Tensor& l2);

// Pre-layer-norm transformer encoder block on [T, D].
Tensor mha_encoder_block(const Tensor& seq, const ModelWeights& weights,
                         int block_index);

// Single-head attention score matrix [T, T] for head "x" or "n".
Tensor sha_head(const Tensor& seq, const ModelWeights& weights,
                const std::string& head);

// Full estimator. The concat variant takes flat [T, input_dim] features;
// the tac variant takes [C', T, 6F] streams for any C'.
AttentionWeights estimate_attention_weights(const Tensor& features,
                                            const ModelWeights& weights);

// Versioned container: magic "ASAW", u16 version, JSON header (config,
// meta, ordered tensor table) padded to a 64-byte boundary, then raw
// little-endian real64 planes. Round trips bit-exactly.
void save_weights(const ModelWeights& weights, const std::string& path);
ModelWeights load_weights(const std::string& path);

}  // namespace estimator
}  // namespace asabf

#endif  // ASABF_ESTIMATOR_HPP_
