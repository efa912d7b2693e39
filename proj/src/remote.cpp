#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "posbias/errors.hpp"
#include "posbias/gateway.hpp"

namespace posbias::gateway {

namespace {

struct ParsedUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // /... (defaults to "/")
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("remote: endpoint url '" + url +
                      "' has no scheme (expected http://host[:port]/path)");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.base = url;
    out.path = "/";
  } else {
    out.base = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  return out;
}

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

struct RemoteBackend::Impl {
  RemoteEndpointConfig config;
  ParsedUrl url;
  std::counting_semaphore<4096> slots;

  explicit Impl(RemoteEndpointConfig cfg)
      : config(std::move(cfg)),
        url(parse_url(config.url)),
        slots(std::max(1, config.concurrency_cap)) {}

  nlohmann::json post_with_retries(const nlohmann::json& body) {
    std::string last_error;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
      if (attempt > 0) {
        const auto delay = std::chrono::milliseconds(
            static_cast<long>(config.retry_backoff_ms) << (attempt - 1));
        std::this_thread::sleep_for(delay);
      }
      httplib::Client client(url.base);
      client.set_connection_timeout(config.timeout_seconds, 0);
      client.set_read_timeout(config.timeout_seconds, 0);
      httplib::Headers headers;
      if (const char* token = std::getenv(config.bearer_token_env.c_str());
          token != nullptr && token[0] != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + token);
      }
      auto res = client.Post(url.path, headers, body.dump(),
                             "application/json");
      if (!res) {
        last_error = "transport: " + httplib::to_string(res.error());
        continue;  // retryable
      }
      if (res->status >= 500) {
        last_error = "server returned status " + std::to_string(res->status);
        continue;  // retryable
      }
      if (res->status != 200) {
        throw TransportError("remote: endpoint rejected request with status " +
                             std::to_string(res->status) + ": " + res->body);
      }
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("remote: response is not valid JSON: ") +
                        e.what());
      }
    }
    throw TransportError("remote: request failed after " +
                         std::to_string(config.max_retries + 1) +
                         " attempts (" + last_error + ")");
  }
};

RemoteBackend::RemoteBackend(RemoteEndpointConfig config, std::string id,
                             std::optional<model::Vocabulary> vocabulary)
    : impl_(std::make_unique<Impl>(std::move(config))),
      id_(std::move(id)),
      vocab_(std::move(vocabulary)) {}

RemoteBackend::~RemoteBackend() = default;

DecisionRecord RemoteBackend::score_pair(const design::PromptText& prompt,
                                         const CandidateTokens& candidates) {
  const double t0 = now_ms();
  nlohmann::json body = {
      {"system", prompt.system_text},
      {"user", prompt.user_text},
      {"candidate_tokens",
       {candidates.token_first, candidates.token_second}},
      {"top_k", impl_->config.top_k},
  };

  impl_->slots.acquire();
  nlohmann::json response;
  try {
    response = impl_->post_with_retries(body);
  } catch (...) {
    impl_->slots.release();
    throw;
  }
  impl_->slots.release();

  const auto entries = response.find("logits");
  if (entries == response.end() || !entries->is_array()) {
    throw DataError("remote: response lacks a 'logits' array");
  }
  std::optional<double> logit_first, logit_second;
  for (const auto& e : *entries) {
    if (!e.is_object() || !e.contains("token")) {
      throw DataError("remote: malformed logits entry: " + e.dump());
    }
    const int token = e.at("token").get<int>();
    double value = 0.0;
    if (e.contains("logit")) {
      value = e.at("logit").get<double>();
    } else if (e.contains("logprob")) {
      value = e.at("logprob").get<double>();
    } else {
      throw DataError("remote: logits entry has neither 'logit' nor "
                      "'logprob': " + e.dump());
    }
    if (token == candidates.token_first) logit_first = value;
    if (token == candidates.token_second) logit_second = value;
  }
  if (!logit_first || !logit_second) {
    throw IncompleteLogitsError(
        "remote: candidate token(s) missing from returned top-" +
        std::to_string(impl_->config.top_k) + " (first " +
        (logit_first ? "present" : "absent") + ", second " +
        (logit_second ? "present" : "absent") + ")");
  }
  auto rec = make_decision(candidates, *logit_first, *logit_second, id_);
  rec.latency_ms = now_ms() - t0;
  return rec;
}

model::ActivationTrace RemoteBackend::capture_trace(const design::PromptText&) {
  throw UnsupportedCapabilityError(
      "remote backend: activation traces are not available over the wire");
}

std::vector<float> RemoteBackend::output_logits(const design::PromptText&) {
  throw UnsupportedCapabilityError(
      "remote backend: full logit vectors are not available over the wire");
}

std::vector<float> RemoteBackend::ablated_logits(const design::PromptText&,
                                                 int, int) {
  throw UnsupportedCapabilityError(
      "remote backend: head ablation is not available over the wire");
}

}  // namespace posbias::gateway
