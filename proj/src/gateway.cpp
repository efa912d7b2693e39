#include "posbias/gateway.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

#include "posbias/digest.hpp"
#include "posbias/errors.hpp"

namespace posbias::gateway {

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::pair<double, double> two_way_softmax(double logit_first,
                                          double logit_second) {
  if (!std::isfinite(logit_first) || !std::isfinite(logit_second)) {
    throw DataError("score: non-finite candidate logit");
  }
  const double p_first = 1.0 / (1.0 + std::exp(logit_second - logit_first));
  const double p_second = 1.0 / (1.0 + std::exp(logit_first - logit_second));
  return {p_first, p_second};
}

CandidateTokens resolve_candidate_tokens(const std::string& ticker_first,
                                         const std::string& ticker_second,
                                         const model::Vocabulary& vocabulary) {
  CandidateTokens out;
  out.ticker_first = ticker_first;
  out.ticker_second = ticker_second;
  const auto ids_first = vocabulary.encode_word(ticker_first);
  const auto ids_second = vocabulary.encode_word(ticker_second);
  if (ids_first.empty() || ids_second.empty()) {
    throw DataError("resolve_candidate_tokens: empty ticker");
  }
  out.token_first = ids_first.front();
  out.token_second = ids_second.front();
  if (out.token_first == out.token_second) {
    throw AmbiguousCandidatesError(
        "candidates '" + ticker_first + "' and '" + ticker_second +
        "' share first subword token " + std::to_string(out.token_first) +
        " ('" + vocabulary.token(out.token_first) + "')");
  }
  return out;
}

DecisionRecord make_decision(const CandidateTokens& candidates,
                             double logit_first, double logit_second,
                             const std::string& backend_id) {
  DecisionRecord rec;
  rec.backend_id = backend_id;
  rec.logit_first = logit_first;
  rec.logit_second = logit_second;
  std::tie(rec.prob_first, rec.prob_second) =
      two_way_softmax(logit_first, logit_second);
  if (rec.prob_first > rec.prob_second) {
    rec.chosen = candidates.ticker_first;
  } else if (rec.prob_second > rec.prob_first) {
    rec.chosen = candidates.ticker_second;
  } else {
    rec.chosen = std::min(candidates.ticker_first, candidates.ticker_second);
    rec.tie = true;
  }
  return rec;
}

std::string format_chat(const design::PromptText& prompt) {
  return "system: " + prompt.system_text + "\nuser: " + prompt.user_text +
         "\nassistant:";
}

// ---------------------------------------------------------------------------
// ReferenceBackend
// ---------------------------------------------------------------------------

ReferenceBackend::ReferenceBackend(model::WeightSet weights,
                                   model::Vocabulary vocabulary,
                                   std::string id, bool trace_heads)
    : weights_(std::move(weights)),
      vocab_(std::move(vocabulary)),
      id_(std::move(id)),
      trace_heads_(trace_heads) {
  weights_.validate();
  if (vocab_.size() != weights_.config.vocab_size) {
    throw ConfigError("reference backend: vocabulary size " +
                      std::to_string(vocab_.size()) +
                      " does not match model vocab_size " +
                      std::to_string(weights_.config.vocab_size));
  }
}

std::vector<int> ReferenceBackend::encode_prompt(
    const design::PromptText& prompt) const {
  return vocab_.encode(format_chat(prompt));
}

DecisionRecord ReferenceBackend::score_pair(const design::PromptText& prompt,
                                            const CandidateTokens& candidates) {
  const double t0 = now_ms();
  const auto logits = output_logits(prompt);
  if (candidates.token_first < 0 ||
      candidates.token_first >= static_cast<int>(logits.size()) ||
      candidates.token_second < 0 ||
      candidates.token_second >= static_cast<int>(logits.size())) {
    throw DataError("score: candidate token id out of vocabulary");
  }
  auto rec = make_decision(
      candidates, logits[static_cast<size_t>(candidates.token_first)],
      logits[static_cast<size_t>(candidates.token_second)], id_);
  rec.latency_ms = now_ms() - t0;
  return rec;
}

model::ActivationTrace ReferenceBackend::capture_trace(
    const design::PromptText& prompt) {
  model::ForwardOptions opts;
  opts.trace = true;
  opts.trace_heads = trace_heads_;
  auto result = model::forward(weights_, encode_prompt(prompt), opts);
  return std::move(*result.trace);
}

std::vector<float> ReferenceBackend::output_logits(
    const design::PromptText& prompt) {
  return model::forward(weights_, encode_prompt(prompt)).final_logits;
}

std::vector<float> ReferenceBackend::ablated_logits(
    const design::PromptText& prompt, int layer, int head) {
  model::ForwardOptions opts;
  opts.ablate = model::AblationTarget{layer, head};
  return model::forward(weights_, encode_prompt(prompt), opts).final_logits;
}

// ---------------------------------------------------------------------------
// DumpBackend
// ---------------------------------------------------------------------------

DumpBackend::DumpBackend(std::string directory, std::string id,
                         std::optional<std::string> weights_path)
    : dir_(std::move(directory)), id_(std::move(id)) {
  if (!std::filesystem::is_directory(dir_)) {
    throw ConfigError("dump backend: '" + dir_ + "' is not a directory");
  }
  if (weights_path) {
    weights_ = model::load_weights(*weights_path);
  }
}

std::string DumpBackend::prompt_digest(const design::PromptText& prompt) {
  Fnv1a64 h;
  h.update(prompt.system_text).update("\x1f").update(prompt.user_text);
  return h.hex();
}

std::string DumpBackend::trace_path(const design::PromptText& prompt) const {
  return dir_ + "/" + prompt_digest(prompt) + ".pbtrace";
}

DecisionRecord DumpBackend::score_pair(const design::PromptText& prompt,
                                       const CandidateTokens& candidates) {
  const double t0 = now_ms();
  const auto logits = output_logits(prompt);
  if (candidates.token_first < 0 ||
      candidates.token_first >= static_cast<int>(logits.size()) ||
      candidates.token_second < 0 ||
      candidates.token_second >= static_cast<int>(logits.size())) {
    throw DataError("dump backend: candidate token id outside stored logits");
  }
  auto rec = make_decision(
      candidates, logits[static_cast<size_t>(candidates.token_first)],
      logits[static_cast<size_t>(candidates.token_second)], id_);
  rec.latency_ms = now_ms() - t0;
  return rec;
}

model::ActivationTrace DumpBackend::capture_trace(
    const design::PromptText& prompt) {
  const auto path = trace_path(prompt);
  if (!std::filesystem::exists(path)) {
    throw DataError("dump backend: no trace for prompt (expected '" + path +
                    "')");
  }
  return model::ingest_dump(path);
}

std::vector<float> DumpBackend::output_logits(
    const design::PromptText& prompt) {
  auto trace = capture_trace(prompt);
  if (trace.final_logits.empty()) {
    throw DataError("dump backend: trace has no final logits");
  }
  return std::move(trace.final_logits);
}

std::vector<float> DumpBackend::ablated_logits(const design::PromptText&, int,
                                               int) {
  throw UnsupportedCapabilityError(
      "dump backend: head ablation needs a live model, not recorded traces");
}

}  // namespace posbias::gateway
