#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posbias/trace.hpp"

namespace posbias::model {

struct ModelConfig {
  int layer_count = 0;
  int head_count = 0;
  int model_width = 0;
  int mlp_width = 0;
  int vocab_size = 0;
  int max_positions = 0;
  float norm_epsilon = 1e-5f;

  int head_width() const { return model_width / head_count; }
  void validate() const;
  /// Stable digest over all config fields.
  std::string digest() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Dense float32 parameter set of the reference transformer.
///
/// Architecture: token + learned absolute position embeddings, pre-norm
/// blocks of [RMS norm, causal multi-head attention, residual add, RMS norm,
/// GELU MLP, residual add], final RMS norm, untied unembedding. No biases
/// anywhere, so the attention output is exactly the sum of per-head output
/// projections, which is what grounds head ablation.
struct WeightSet {
  ModelConfig config;

  std::vector<float> token_embedding;     // vocab x width
  std::vector<float> position_embedding;  // max_positions x width

  struct Layer {
    std::vector<float> wq, wk, wv, wo;  // width x width
    std::vector<float> w_in;            // width x mlp_width
    std::vector<float> w_out;           // mlp_width x width
    std::vector<float> gain_attn;       // width
    std::vector<float> gain_mlp;        // width
  };
  std::vector<Layer> layers;

  std::vector<float> gain_final;  // width
  std::vector<float> unembedding; // width x vocab

  void validate() const;
  /// Digest over config and all parameter bytes.
  std::string digest() const;
};

/// Deterministic random initialization. Tensors are filled from one
/// splitmix64 stream in declaration order (token embedding, position
/// embedding, per layer wq wk wv wo w_in w_out, unembedding); normalization
/// gains are 1. Embeddings are drawn N(0, 0.02^2); projection matrices and
/// the unembedding are drawn N(0, (0.02 / sqrt(model_width))^2).
WeightSet init_random(const ModelConfig& config, uint64_t seed);

struct AblationTarget {
  int layer = 0;
  int head = 0;
  bool operator==(const AblationTarget&) const = default;
};

enum class OptionPositionPolicy { kFirst, kSecond };

/// Test-fixture weights with one live attention head. The designated head
/// attends from every position to the earliest (or latest, per policy) of the
/// marked option tokens that is visible under the causal mask, and copies
/// that token's identity direction into the residual stream, boosting its
/// output logit. All other heads carry near-zero weights and the MLPs write
/// nothing, so the injected preference is the only signal in the network.
///
/// Requires option_token_ids.size() <= head_width (the copy channel routes
/// through one head).
WeightSet plant_bias_head(const ModelConfig& config, AblationTarget target,
                          OptionPositionPolicy policy,
                          const std::vector<int>& option_token_ids,
                          uint64_t seed = 0x70736274u);

/// Control weights whose outputs depend only on the final token's identity:
/// position embeddings, attention and MLPs are all zero, so the two orderings
/// of a pair produce bitwise-identical answer logits. Used to null-check the
/// detection pipeline.
WeightSet position_blind_weights(const ModelConfig& config, uint64_t seed);

struct ForwardOptions {
  bool trace = false;
  bool trace_heads = false;
  std::optional<AblationTarget> ablate;
};

struct ForwardResult {
  /// Output logits at the final position.
  std::vector<float> final_logits;
  std::optional<ActivationTrace> trace;
};

/// Forward pass over a token sequence. With `ablate` set, the target head's
/// output vector is zeroed before the attention output projection in that one
/// layer. Deterministic for fixed weights and input at any thread count.
ForwardResult forward(const WeightSet& weights, std::span<const int> tokens,
                      const ForwardOptions& options = {});

/// Projects a residual vector through the unembedding, optionally applying
/// the final RMS norm first (the logit-lens default).
std::vector<float> unembed(std::span<const float> residual,
                           const WeightSet& weights, bool apply_final_norm);

/// Binary weight container, magic "PBWGT1": JSON header with the ModelConfig,
/// then raw little-endian float32 tensors.
void save_weights(const std::string& path, const WeightSet& weights);
WeightSet load_weights(const std::string& path);

}  // namespace posbias::model
