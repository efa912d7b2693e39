#include "posbias/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "posbias/digest.hpp"
#include "posbias/errors.hpp"
#include "posbias/kernels.hpp"
#include "posbias/rng.hpp"

namespace posbias::model {

namespace {

constexpr char kWeightMagic[6] = {'P', 'B', 'W', 'G', 'T', '1'};
constexpr int kWeightVersion = 1;

void fill_gauss(std::vector<float>& v, size_t count, SplitMix64& g,
                float scale) {
  v.resize(count);
  for (auto& x : v) {
    x = g.next_gauss_f() * scale;
  }
}

void check_finite(const std::vector<float>& v, const char* what) {
  for (float f : v) {
    if (!std::isfinite(f)) {
      throw DataError(std::string("weights: non-finite value in ") + what);
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (layer_count < 1) throw ValidationError("model: layer_count must be >= 1");
  if (head_count < 1) throw ValidationError("model: head_count must be >= 1");
  if (model_width < 1) throw ValidationError("model: model_width must be >= 1");
  if (mlp_width < 1) throw ValidationError("model: mlp_width must be >= 1");
  if (vocab_size < 1) throw ValidationError("model: vocab_size must be >= 1");
  if (max_positions < 1)
    throw ValidationError("model: max_positions must be >= 1");
  if (model_width % head_count != 0) {
    throw ValidationError(
        "model: model_width must be divisible by head_count");
  }
  if (!(norm_epsilon > 0.0f)) {
    throw ValidationError("model: norm_epsilon must be positive");
  }
}

std::string ModelConfig::digest() const {
  Fnv1a64 h;
  h.update_u64(static_cast<uint64_t>(layer_count));
  h.update_u64(static_cast<uint64_t>(head_count));
  h.update_u64(static_cast<uint64_t>(model_width));
  h.update_u64(static_cast<uint64_t>(mlp_width));
  h.update_u64(static_cast<uint64_t>(vocab_size));
  h.update_u64(static_cast<uint64_t>(max_positions));
  uint32_t eps_bits;
  std::memcpy(&eps_bits, &norm_epsilon, sizeof(eps_bits));
  h.update_u64(eps_bits);
  return h.hex();
}

void WeightSet::validate() const {
  config.validate();
  const size_t w = static_cast<size_t>(config.model_width);
  const size_t v = static_cast<size_t>(config.vocab_size);
  const size_t m = static_cast<size_t>(config.mlp_width);
  auto expect = [](const std::vector<float>& t, size_t n, const char* what) {
    if (t.size() != n) {
      throw DataError(std::string("weights: ") + what + " has " +
                      std::to_string(t.size()) + " values, expected " +
                      std::to_string(n));
    }
    check_finite(t, what);
  };
  expect(token_embedding, v * w, "token_embedding");
  expect(position_embedding, static_cast<size_t>(config.max_positions) * w,
         "position_embedding");
  if (layers.size() != static_cast<size_t>(config.layer_count)) {
    throw DataError("weights: layer count mismatch");
  }
  for (const auto& l : layers) {
    expect(l.wq, w * w, "wq");
    expect(l.wk, w * w, "wk");
    expect(l.wv, w * w, "wv");
    expect(l.wo, w * w, "wo");
    expect(l.w_in, w * m, "w_in");
    expect(l.w_out, m * w, "w_out");
    expect(l.gain_attn, w, "gain_attn");
    expect(l.gain_mlp, w, "gain_mlp");
  }
  expect(gain_final, w, "gain_final");
  expect(unembedding, w * v, "unembedding");
}

std::string WeightSet::digest() const {
  Fnv1a64 h;
  h.update(config.digest());
  auto fold = [&h](const std::vector<float>& t) {
    h.update(std::string_view(reinterpret_cast<const char*>(t.data()),
                              t.size() * sizeof(float)));
  };
  fold(token_embedding);
  fold(position_embedding);
  for (const auto& l : layers) {
    fold(l.wq);
    fold(l.wk);
    fold(l.wv);
    fold(l.wo);
    fold(l.w_in);
    fold(l.w_out);
    fold(l.gain_attn);
    fold(l.gain_mlp);
  }
  fold(gain_final);
  fold(unembedding);
  return h.hex();
}

WeightSet init_random(const ModelConfig& config, uint64_t seed) {
  config.validate();
  const size_t w = static_cast<size_t>(config.model_width);
  const float emb_scale = 0.02f;
  const float proj_scale =
      0.02f / std::sqrt(static_cast<float>(config.model_width));

  SplitMix64 g(stream_seed(seed, 0x57454947u));
  WeightSet ws;
  ws.config = config;
  fill_gauss(ws.token_embedding, static_cast<size_t>(config.vocab_size) * w, g,
             emb_scale);
  fill_gauss(ws.position_embedding,
             static_cast<size_t>(config.max_positions) * w, g, emb_scale);
  ws.layers.resize(static_cast<size_t>(config.layer_count));
  for (auto& l : ws.layers) {
    fill_gauss(l.wq, w * w, g, proj_scale);
    fill_gauss(l.wk, w * w, g, proj_scale);
    fill_gauss(l.wv, w * w, g, proj_scale);
    fill_gauss(l.wo, w * w, g, proj_scale);
    fill_gauss(l.w_in, w * static_cast<size_t>(config.mlp_width), g,
               proj_scale);
    fill_gauss(l.w_out, static_cast<size_t>(config.mlp_width) * w, g,
               proj_scale);
    l.gain_attn.assign(w, 1.0f);
    l.gain_mlp.assign(w, 1.0f);
  }
  ws.gain_final.assign(w, 1.0f);
  fill_gauss(ws.unembedding, w * static_cast<size_t>(config.vocab_size), g,
             proj_scale);
  return ws;
}

WeightSet plant_bias_head(const ModelConfig& config, AblationTarget target,
                          OptionPositionPolicy policy,
                          const std::vector<int>& option_token_ids,
                          uint64_t seed) {
  config.validate();
  const int width = config.model_width;
  const int d = config.head_width();
  const int n_opts = static_cast<int>(option_token_ids.size());
  if (target.layer < 0 || target.layer >= config.layer_count ||
      target.head < 0 || target.head >= config.head_count) {
    throw ConfigError("plant_bias_head: target (" +
                      std::to_string(target.layer) + ", " +
                      std::to_string(target.head) + ") out of range");
  }
  if (n_opts == 0) {
    throw ConfigError("plant_bias_head: no option tokens given");
  }
  if (n_opts > d) {
    throw ConfigError(
        "plant_bias_head: option token count exceeds head width (" +
        std::to_string(n_opts) + " > " + std::to_string(d) + ")");
  }
  // Identity channels plus three reserved coordinates must fit.
  if (width < n_opts + 4) {
    throw ConfigError("plant_bias_head: model_width too small for fixture");
  }
  for (int id : option_token_ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw ConfigError("plant_bias_head: option token id out of vocabulary");
    }
  }

  // Reserved coordinates of the residual stream.
  const int c_mark = width - 1;   // set on option tokens only
  const int c_pos = width - 2;    // monotone position ramp
  const int c_norm = width - 3;   // keeps position rows unit-norm
  const int c_const = width - 4;  // constant beacon on every token

  // Gains; see the derivation in tests/test_model.cpp's fixture checks.
  const float mark_gain = 1.0f;       // option-token marker amplitude
  const float const_gain = 1.0f;      // beacon read by the query
  const float ident_gain = 1.0f;      // per-option identity amplitude
  const float query_gain = 2.0f;      // attention sharpness
  const float key_mark = 6.0f;        // marker weight in the key
  const float key_pos = 6.0f;         // position-ramp weight in the key
  const float copy_gain = 1.5f;       // V*O copy amplitude
  const float unembed_gain = 1.0f;    // identity-to-logit coupling

  SplitMix64 g(stream_seed(seed, 0x504c4e54u));
  WeightSet ws;
  ws.config = config;
  const size_t w = static_cast<size_t>(width);

  // Token embeddings: faint noise everywhere, exact structure on option
  // tokens so that all option rows share one norm.
  fill_gauss(ws.token_embedding, static_cast<size_t>(config.vocab_size) * w, g,
             0.02f);
  for (int t = 0; t < config.vocab_size; ++t) {
    float* row = ws.token_embedding.data() + static_cast<size_t>(t) * w;
    row[c_mark] = 0.0f;
    row[c_pos] = 0.0f;
    row[c_norm] = 0.0f;
    row[c_const] = const_gain;
  }
  for (int k = 0; k < n_opts; ++k) {
    float* row = ws.token_embedding.data() +
                 static_cast<size_t>(option_token_ids[k]) * w;
    std::fill(row, row + width, 0.0f);
    row[k] = ident_gain;
    row[c_mark] = mark_gain;
    row[c_const] = const_gain;
  }

  // Position rows: a linear ramp paired with a compensating coordinate so
  // every row has unit norm; the per-position RMS then cannot leak into the
  // attention scores.
  ws.position_embedding.assign(static_cast<size_t>(config.max_positions) * w,
                               0.0f);
  for (int p = 0; p < config.max_positions; ++p) {
    float* row = ws.position_embedding.data() + static_cast<size_t>(p) * w;
    float ramp = 1.0f - static_cast<float>(p) /
                            static_cast<float>(config.max_positions);
    if (policy == OptionPositionPolicy::kSecond) {
      ramp = static_cast<float>(p) / static_cast<float>(config.max_positions);
    }
    row[c_pos] = ramp;
    row[c_norm] = std::sqrt(std::max(0.0f, 1.0f - ramp * ramp));
  }

  // Near-zero weights everywhere; MLP write path exactly zero.
  ws.layers.resize(static_cast<size_t>(config.layer_count));
  for (auto& l : ws.layers) {
    fill_gauss(l.wq, w * w, g, 1e-6f);
    fill_gauss(l.wk, w * w, g, 1e-6f);
    fill_gauss(l.wv, w * w, g, 1e-6f);
    fill_gauss(l.wo, w * w, g, 1e-6f);
    fill_gauss(l.w_in, w * static_cast<size_t>(config.mlp_width), g, 1e-6f);
    l.w_out.assign(static_cast<size_t>(config.mlp_width) * w, 0.0f);
    l.gain_attn.assign(w, 1.0f);
    l.gain_mlp.assign(w, 1.0f);
  }

  // The planted head. Row-major projections map residual coordinate r to head
  // channel j at [r * width + head_base + j].
  auto& planted = ws.layers[static_cast<size_t>(target.layer)];
  const int head_base = target.head * d;
  auto at = [width](std::vector<float>& t, int r, int c) -> float& {
    return t[static_cast<size_t>(r) * width + c];
  };
  // Query channel 0 reads the constant beacon: nonzero for every query token.
  at(planted.wq, c_const, head_base + 0) = query_gain;
  // Key channel 0 scores marker plus position ramp.
  at(planted.wk, c_mark, head_base + 0) = key_mark;
  at(planted.wk, c_pos, head_base + 0) = key_pos;
  // V copies the option-identity channels into the head; O copies them back.
  for (int k = 0; k < n_opts; ++k) {
    at(planted.wv, k, head_base + k) = copy_gain;
    at(planted.wo, head_base + k, k) = copy_gain;
  }

  ws.gain_final.assign(w, 1.0f);

  // Unembedding: noise plus an identity-channel column for each option token.
  fill_gauss(ws.unembedding, w * static_cast<size_t>(config.vocab_size), g,
             0.02f / std::sqrt(static_cast<float>(width)));
  for (int k = 0; k < n_opts; ++k) {
    ws.unembedding[static_cast<size_t>(k) * config.vocab_size +
                   option_token_ids[k]] += unembed_gain;
  }
  return ws;
}

WeightSet position_blind_weights(const ModelConfig& config, uint64_t seed) {
  config.validate();
  WeightSet ws = init_random(config, seed);
  const size_t w = static_cast<size_t>(config.model_width);
  std::fill(ws.position_embedding.begin(), ws.position_embedding.end(), 0.0f);
  for (auto& l : ws.layers) {
    std::fill(l.wq.begin(), l.wq.end(), 0.0f);
    std::fill(l.wk.begin(), l.wk.end(), 0.0f);
    std::fill(l.wv.begin(), l.wv.end(), 0.0f);
    std::fill(l.wo.begin(), l.wo.end(), 0.0f);
    std::fill(l.w_in.begin(), l.w_in.end(), 0.0f);
    std::fill(l.w_out.begin(), l.w_out.end(), 0.0f);
    l.gain_attn.assign(w, 1.0f);
    l.gain_mlp.assign(w, 1.0f);
  }
  return ws;
}

ForwardResult forward(const WeightSet& weights, std::span<const int> tokens,
                      const ForwardOptions& options) {
  const ModelConfig& cfg = weights.config;
  const int seq = static_cast<int>(tokens.size());
  if (seq == 0) {
    throw DataError("forward: empty token sequence");
  }
  if (seq > cfg.max_positions) {
    throw DataError("forward: sequence length " + std::to_string(seq) +
                    " exceeds max_positions " +
                    std::to_string(cfg.max_positions));
  }
  for (int t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) {
      throw DataError("forward: token id " + std::to_string(t) +
                      " out of vocabulary");
    }
  }
  if (options.ablate) {
    if (options.ablate->layer < 0 || options.ablate->layer >= cfg.layer_count ||
        options.ablate->head < 0 || options.ablate->head >= cfg.head_count) {
      throw ConfigError("forward: ablation target out of range");
    }
  }

  const int width = cfg.model_width;
  const int heads = cfg.head_count;
  const int d = cfg.head_width();
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));
  const size_t row = static_cast<size_t>(width);

  std::vector<float> resid(static_cast<size_t>(seq) * row);
  for (int p = 0; p < seq; ++p) {
    const float* tok =
        weights.token_embedding.data() + static_cast<size_t>(tokens[p]) * row;
    const float* pos =
        weights.position_embedding.data() + static_cast<size_t>(p) * row;
    float* dst = resid.data() + static_cast<size_t>(p) * row;
    for (int i = 0; i < width; ++i) {
      dst[i] = tok[i] + pos[i];
    }
  }

  ForwardResult result;
  ActivationTrace* trace = nullptr;
  if (options.trace) {
    result.trace.emplace();
    trace = &*result.trace;
    trace->layer_count = cfg.layer_count;
    trace->position_count = seq;
    trace->width = width;
    trace->head_count = heads;
    trace->head_width = d;
    trace->token_ids.assign(tokens.begin(), tokens.end());
    trace->residuals.reserve(static_cast<size_t>(cfg.layer_count + 1) * seq *
                             row);
    trace->residuals.insert(trace->residuals.end(), resid.begin(), resid.end());
    if (options.trace_heads) {
      trace->head_outputs.assign(static_cast<size_t>(cfg.layer_count) * heads *
                                     seq * static_cast<size_t>(d),
                                 0.0f);
    }
  }

  std::vector<float> xn(resid.size());
  std::vector<float> q(resid.size()), k(resid.size()), v(resid.size());
  std::vector<float> z(resid.size());
  std::vector<float> attn_out(resid.size());
  std::vector<float> mlp_hidden(static_cast<size_t>(seq) * cfg.mlp_width);
  std::vector<float> mlp_out(resid.size());

  for (int l = 0; l < cfg.layer_count; ++l) {
    const auto& layer = weights.layers[static_cast<size_t>(l)];

    kernels::rmsnorm_rows(resid.data(), layer.gain_attn.data(), xn.data(), seq,
                          width, cfg.norm_epsilon);
    kernels::matmul(xn.data(), layer.wq.data(), q.data(), seq, width, width);
    kernels::matmul(xn.data(), layer.wk.data(), k.data(), seq, width, width);
    kernels::matmul(xn.data(), layer.wv.data(), v.data(), seq, width, width);

    // Causal attention, one (head, query) pair per task.
#pragma omp parallel for schedule(static) collapse(2)
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < seq; ++i) {
        const int base = h * d;
        std::vector<float> scores(static_cast<size_t>(i) + 1);
        const float* qi = q.data() + static_cast<size_t>(i) * row + base;
        float mx = -1e30f;
        for (int j = 0; j <= i; ++j) {
          const float* kj = k.data() + static_cast<size_t>(j) * row + base;
          float s = 0.0f;
          for (int c = 0; c < d; ++c) {
            s += qi[c] * kj[c];
          }
          s *= inv_sqrt_d;
          scores[j] = s;
          mx = std::max(mx, s);
        }
        float denom = 0.0f;
        for (int j = 0; j <= i; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          denom += scores[j];
        }
        const float inv_denom = 1.0f / denom;
        float* zi = z.data() + static_cast<size_t>(i) * row + base;
        for (int c = 0; c < d; ++c) {
          zi[c] = 0.0f;
        }
        for (int j = 0; j <= i; ++j) {
          const float a = scores[j] * inv_denom;
          const float* vj = v.data() + static_cast<size_t>(j) * row + base;
          for (int c = 0; c < d; ++c) {
            zi[c] += a * vj[c];
          }
        }
      }
    }

    if (options.ablate && options.ablate->layer == l) {
      const int base = options.ablate->head * d;
      for (int i = 0; i < seq; ++i) {
        float* zi = z.data() + static_cast<size_t>(i) * row + base;
        std::fill(zi, zi + d, 0.0f);
      }
    }

    if (trace && options.trace_heads) {
      for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < seq; ++i) {
          const float* src = z.data() + static_cast<size_t>(i) * row + h * d;
          float* dst = trace->head_outputs.data() +
                       ((static_cast<size_t>(l) * heads + h) * seq + i) * d;
          std::copy(src, src + d, dst);
        }
      }
    }

    kernels::matmul(z.data(), layer.wo.data(), attn_out.data(), seq, width,
                    width);
    kernels::add(resid.data(), attn_out.data(), seq * width);

    kernels::rmsnorm_rows(resid.data(), layer.gain_mlp.data(), xn.data(), seq,
                          width, cfg.norm_epsilon);
    kernels::matmul(xn.data(), layer.w_in.data(), mlp_hidden.data(), seq,
                    width, cfg.mlp_width);
    kernels::gelu(mlp_hidden.data(), seq * cfg.mlp_width);
    kernels::matmul(mlp_hidden.data(), layer.w_out.data(), mlp_out.data(), seq,
                    cfg.mlp_width, width);
    kernels::add(resid.data(), mlp_out.data(), seq * width);

    if (trace) {
      trace->residuals.insert(trace->residuals.end(), resid.begin(),
                              resid.end());
    }
  }

  std::vector<float> final_norm(row);
  kernels::rmsnorm_rows(resid.data() + static_cast<size_t>(seq - 1) * row,
                        weights.gain_final.data(), final_norm.data(), 1, width,
                        cfg.norm_epsilon);
  result.final_logits.resize(static_cast<size_t>(cfg.vocab_size));
  kernels::matmul(final_norm.data(), weights.unembedding.data(),
                  result.final_logits.data(), 1, width, cfg.vocab_size);

  if (trace) {
    trace->final_logits = result.final_logits;
  }
  return result;
}

std::vector<float> unembed(std::span<const float> residual,
                           const WeightSet& weights, bool apply_final_norm) {
  const int width = weights.config.model_width;
  if (static_cast<int>(residual.size()) != width) {
    throw DataError("unembed: residual width mismatch");
  }
  std::vector<float> x(residual.begin(), residual.end());
  if (apply_final_norm) {
    std::vector<float> normed(x.size());
    kernels::rmsnorm_rows(x.data(), weights.gain_final.data(), normed.data(),
                          1, width, weights.config.norm_epsilon);
    x = std::move(normed);
  }
  std::vector<float> logits(static_cast<size_t>(weights.config.vocab_size));
  kernels::matmul(x.data(), weights.unembedding.data(), logits.data(), 1,
                  width, weights.config.vocab_size);
  return logits;
}

void save_weights(const std::string& path, const WeightSet& weights) {
  weights.validate();
  nlohmann::json header = {
      {"version", kWeightVersion},
      {"dtype", "f32"},
      {"config",
       {{"layer_count", weights.config.layer_count},
        {"head_count", weights.config.head_count},
        {"model_width", weights.config.model_width},
        {"mlp_width", weights.config.mlp_width},
        {"vocab_size", weights.config.vocab_size},
        {"max_positions", weights.config.max_positions},
        {"norm_epsilon", weights.config.norm_epsilon}}},
  };
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("weights: cannot write '" + path + "'");
  }
  out.write(kWeightMagic, sizeof(kWeightMagic));
  const uint32_t len = static_cast<uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  auto dump = [&out](const std::vector<float>& t) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  };
  dump(weights.token_embedding);
  dump(weights.position_embedding);
  for (const auto& l : weights.layers) {
    dump(l.wq);
    dump(l.wk);
    dump(l.wv);
    dump(l.wo);
    dump(l.w_in);
    dump(l.w_out);
    dump(l.gain_attn);
    dump(l.gain_mlp);
  }
  dump(weights.gain_final);
  dump(weights.unembedding);
  if (!out) {
    throw Error("weights: write failure on '" + path + "'");
  }
}

WeightSet load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("weights: cannot open '" + path + "'");
  }
  char magic[6];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kWeightMagic, sizeof(kWeightMagic)) != 0) {
    throw ParseError("weights: '" + path + "' is not a PBWGT1 container");
  }
  uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) {
    throw ParseError("weights: truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("weights: header is not valid JSON: ") +
                     e.what());
  }
  if (header.value("version", -1) != kWeightVersion) {
    throw ParseError("weights: unsupported container version");
  }

  WeightSet ws;
  try {
    const auto& c = header.at("config");
    ws.config.layer_count = c.at("layer_count").get<int>();
    ws.config.head_count = c.at("head_count").get<int>();
    ws.config.model_width = c.at("model_width").get<int>();
    ws.config.mlp_width = c.at("mlp_width").get<int>();
    ws.config.vocab_size = c.at("vocab_size").get<int>();
    ws.config.max_positions = c.at("max_positions").get<int>();
    ws.config.norm_epsilon = c.at("norm_epsilon").get<float>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("weights: malformed config header: ") +
                     e.what());
  }
  ws.config.validate();

  auto slurp = [&in, &path](std::vector<float>& t, size_t n,
                            const char* what) {
    t.resize(n);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) {
      throw ParseError("weights: truncated " + std::string(what) + " in '" +
                       path + "'");
    }
  };
  const size_t w = static_cast<size_t>(ws.config.model_width);
  slurp(ws.token_embedding, static_cast<size_t>(ws.config.vocab_size) * w,
        "token_embedding");
  slurp(ws.position_embedding,
        static_cast<size_t>(ws.config.max_positions) * w, "position_embedding");
  ws.layers.resize(static_cast<size_t>(ws.config.layer_count));
  for (auto& l : ws.layers) {
    slurp(l.wq, w * w, "wq");
    slurp(l.wk, w * w, "wk");
    slurp(l.wv, w * w, "wv");
    slurp(l.wo, w * w, "wo");
    slurp(l.w_in, w * static_cast<size_t>(ws.config.mlp_width), "w_in");
    slurp(l.w_out, static_cast<size_t>(ws.config.mlp_width) * w, "w_out");
    slurp(l.gain_attn, w, "gain_attn");
    slurp(l.gain_mlp, w, "gain_mlp");
  }
  slurp(ws.gain_final, w, "gain_final");
  slurp(ws.unembedding, w * static_cast<size_t>(ws.config.vocab_size),
        "unembedding");
  ws.validate();
  return ws;
}

}  // namespace posbias::model
