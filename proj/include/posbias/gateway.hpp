#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "posbias/design.hpp"
#include "posbias/model.hpp"
#include "posbias/vocab.hpp"

namespace posbias::gateway {

/// First subword token of each candidate ticker as it would appear in answer
/// position.
struct CandidateTokens {
  std::string ticker_first;
  std::string ticker_second;
  int token_first = -1;
  int token_second = -1;
};

/// One pairwise decision: candidate logits, their two-way softmax, and the
/// selected ticker. prob_first + prob_second is 1 up to rounding.
struct DecisionRecord {
  std::string trial_id;
  std::string chosen;
  double logit_first = 0.0;
  double logit_second = 0.0;
  double prob_first = 0.0;
  double prob_second = 0.0;
  bool tie = false;  // exactly equal probabilities, broken lexicographically
  std::string backend_id;
  double latency_ms = 0.0;
};

/// Two-way softmax over a logit pair. Shift-invariant by construction (only
/// the difference enters). Throws DataError on non-finite logits.
std::pair<double, double> two_way_softmax(double logit_first,
                                          double logit_second);

/// Resolves each ticker to the id of its first subword in answer position.
/// Throws AmbiguousCandidatesError when both share that token (the trial must
/// be excluded, not scored).
CandidateTokens resolve_candidate_tokens(const std::string& ticker_first,
                                         const std::string& ticker_second,
                                         const model::Vocabulary& vocabulary);

/// Applies the selection rule to scored logits: larger probability wins; at
/// exact equality the lexicographically smaller ticker is chosen and the tie
/// flag is set.
DecisionRecord make_decision(const CandidateTokens& candidates,
                             double logit_first, double logit_second,
                             const std::string& backend_id);

/// Chat scaffold used by the built-in backends. Candidate logits are read at
/// the first generated position, i.e. the model's prediction after the
/// assistant header.
std::string format_chat(const design::PromptText& prompt);

/// Uniform scoring/introspection interface over the three backend families.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const std::string& id() const = 0;
  virtual bool supports_trace() const = 0;

  virtual DecisionRecord score_pair(const design::PromptText& prompt,
                                    const CandidateTokens& candidates) = 0;

  /// Throws UnsupportedCapabilityError when the backend cannot introspect.
  virtual model::ActivationTrace capture_trace(
      const design::PromptText& prompt) = 0;

  /// Baseline output logits at the answer position.
  virtual std::vector<float> output_logits(const design::PromptText& prompt) = 0;

  /// Output logits with head (layer, head) zeroed before the attention output
  /// projection in that single layer.
  virtual std::vector<float> ablated_logits(const design::PromptText& prompt,
                                            int layer, int head) = 0;

  /// Vocabulary for candidate resolution; null when the backend has none.
  virtual const model::Vocabulary* vocabulary() const { return nullptr; }
  /// Weights, for attribution paths needing the unembedding; may be null.
  virtual const model::WeightSet* weights() const { return nullptr; }
};

/// In-process reference transformer. Immutable after construction; forward
/// passes are read-only and safe to issue from any number of threads.
class ReferenceBackend : public Backend {
 public:
  ReferenceBackend(model::WeightSet weights, model::Vocabulary vocabulary,
                   std::string id, bool trace_heads = false);

  const std::string& id() const override { return id_; }
  bool supports_trace() const override { return true; }
  DecisionRecord score_pair(const design::PromptText& prompt,
                            const CandidateTokens& candidates) override;
  model::ActivationTrace capture_trace(
      const design::PromptText& prompt) override;
  std::vector<float> output_logits(const design::PromptText& prompt) override;
  std::vector<float> ablated_logits(const design::PromptText& prompt,
                                    int layer, int head) override;
  const model::Vocabulary* vocabulary() const override { return &vocab_; }
  const model::WeightSet* weights() const override { return &weights_; }

  std::vector<int> encode_prompt(const design::PromptText& prompt) const;

 private:
  model::WeightSet weights_;
  model::Vocabulary vocab_;
  std::string id_;
  bool trace_heads_ = false;
};

/// Replays traces recorded to disk. Files are keyed by the digest of the
/// prompt text: <dir>/<prompt_digest>.pbtrace. Scoring reads candidate logits
/// from the stored answer-position logits; ablation is unavailable.
class DumpBackend : public Backend {
 public:
  DumpBackend(std::string directory, std::string id,
              std::optional<std::string> weights_path = std::nullopt);

  const std::string& id() const override { return id_; }
  bool supports_trace() const override { return true; }
  DecisionRecord score_pair(const design::PromptText& prompt,
                            const CandidateTokens& candidates) override;
  model::ActivationTrace capture_trace(
      const design::PromptText& prompt) override;
  std::vector<float> output_logits(const design::PromptText& prompt) override;
  std::vector<float> ablated_logits(const design::PromptText& prompt,
                                    int layer, int head) override;
  const model::WeightSet* weights() const override {
    return weights_ ? &*weights_ : nullptr;
  }

  static std::string prompt_digest(const design::PromptText& prompt);
  std::string trace_path(const design::PromptText& prompt) const;

 private:
  std::string dir_;
  std::string id_;
  std::optional<model::WeightSet> weights_;
};

struct RemoteEndpointConfig {
  std::string url;                 // e.g. http://host:8080/v1/pairwise
  int timeout_seconds = 30;
  int max_retries = 3;             // retries after the first attempt
  int retry_backoff_ms = 100;      // doubles per retry
  int concurrency_cap = 4;         // in-flight request bound
  int top_k = 32;
  std::string bearer_token_env = "POSBIAS_API_TOKEN";
};

/// HTTP client backend. POSTs {system, user, candidate_tokens, top_k} and
/// expects per-token logits (or logprobs) at the first answer position; the
/// two-way softmax runs locally. Traces and ablation are unsupported.
class RemoteBackend : public Backend {
 public:
  RemoteBackend(RemoteEndpointConfig config, std::string id,
                std::optional<model::Vocabulary> vocabulary = std::nullopt);
  ~RemoteBackend() override;

  const std::string& id() const override { return id_; }
  bool supports_trace() const override { return false; }
  DecisionRecord score_pair(const design::PromptText& prompt,
                            const CandidateTokens& candidates) override;
  model::ActivationTrace capture_trace(
      const design::PromptText& prompt) override;
  std::vector<float> output_logits(const design::PromptText& prompt) override;
  std::vector<float> ablated_logits(const design::PromptText& prompt,
                                    int layer, int head) override;
  const model::Vocabulary* vocabulary() const override {
    return vocab_ ? &*vocab_ : nullptr;
  }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string id_;
  std::optional<model::Vocabulary> vocab_;
};

}  // namespace posbias::gateway
