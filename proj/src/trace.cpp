#include "posbias/trace.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "posbias/errors.hpp"

namespace posbias::model {

namespace {

constexpr char kMagic[8] = {'P', 'B', 'T', 'R', 'A', 'C', 'E', '1'};
constexpr int kVersion = 1;

void write_f32(std::ofstream& out, const std::vector<float>& v) {
  // Host is little-endian on every supported target; asserted at build time
  // would need C++23, so trust the platform list in the README.
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_f32(std::ifstream& in, std::vector<float>& v, size_t count,
              const std::string& what) {
  v.resize(count);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) {
    throw ParseError("trace: truncated " + what + " array");
  }
}

}  // namespace

std::span<const float> ActivationTrace::residual(int snapshot,
                                                 int position) const {
  const size_t off =
      (static_cast<size_t>(snapshot) * position_count + position) * width;
  return {residuals.data() + off, static_cast<size_t>(width)};
}

std::span<float> ActivationTrace::residual(int snapshot, int position) {
  const size_t off =
      (static_cast<size_t>(snapshot) * position_count + position) * width;
  return {residuals.data() + off, static_cast<size_t>(width)};
}

std::span<const float> ActivationTrace::head_output(int layer, int head,
                                                    int position) const {
  const size_t off =
      ((static_cast<size_t>(layer) * head_count + head) * position_count +
       position) *
      head_width;
  return {head_outputs.data() + off, static_cast<size_t>(head_width)};
}

void ActivationTrace::validate() const {
  if (layer_count < 0 || position_count <= 0 || width <= 0) {
    throw DataError("trace: non-positive dimensions");
  }
  const size_t expect_resid = static_cast<size_t>(layer_count + 1) *
                              position_count * static_cast<size_t>(width);
  if (residuals.size() != expect_resid) {
    throw DataError("trace: residual array has " +
                    std::to_string(residuals.size()) + " values, expected " +
                    std::to_string(expect_resid));
  }
  if (!head_outputs.empty()) {
    const size_t expect_heads = static_cast<size_t>(layer_count) * head_count *
                                position_count * static_cast<size_t>(head_width);
    if (head_outputs.size() != expect_heads) {
      throw DataError("trace: head output array has wrong size");
    }
  }
  if (static_cast<int>(token_ids.size()) != position_count) {
    throw DataError("trace: token id count does not match position count");
  }
  for (float f : residuals) {
    if (!std::isfinite(f)) throw DataError("trace: non-finite residual value");
  }
  for (float f : final_logits) {
    if (!std::isfinite(f)) throw DataError("trace: non-finite final logit");
  }
}

void save_trace(const std::string& path, const ActivationTrace& trace) {
  trace.validate();
  nlohmann::json header = {
      {"version", kVersion},
      {"dtype", "f32"},
      {"order", "row-major"},
      {"layer_count", trace.layer_count},
      {"position_count", trace.position_count},
      {"width", trace.width},
      {"head_count", trace.head_count},
      {"head_width", trace.head_width},
      {"has_head_outputs", trace.has_head_outputs()},
      {"final_logit_count", trace.final_logits.size()},
      {"token_ids", trace.token_ids},
  };
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("trace: cannot write '" + path + "'");
  }
  out.write(kMagic, sizeof(kMagic));
  const uint32_t len = static_cast<uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  write_f32(out, trace.residuals);
  write_f32(out, trace.head_outputs);
  write_f32(out, trace.final_logits);
  if (!out) {
    throw Error("trace: write failure on '" + path + "'");
  }
}

ActivationTrace ingest_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("trace: cannot open '" + path + "'");
  }
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("trace: '" + path + "' is not a PBTRACE1 container");
  }
  uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) {
    throw ParseError("trace: truncated header length");
  }
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) {
    throw ParseError("trace: truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trace: header is not valid JSON: ") +
                     e.what());
  }
  if (header.value("version", -1) != kVersion) {
    throw ParseError("trace: unsupported container version " +
                     header.value("version", nlohmann::json()).dump() +
                     " (expected " + std::to_string(kVersion) + ")");
  }
  if (header.value("dtype", "") != "f32") {
    throw ParseError("trace: unsupported dtype '" + header.value("dtype", "") +
                     "'");
  }

  ActivationTrace t;
  try {
    t.layer_count = header.at("layer_count").get<int>();
    t.position_count = header.at("position_count").get<int>();
    t.width = header.at("width").get<int>();
    t.head_count = header.at("head_count").get<int>();
    t.head_width = header.at("head_width").get<int>();
    t.token_ids = header.at("token_ids").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trace: malformed header: ") + e.what());
  }

  const size_t resid_count = static_cast<size_t>(t.layer_count + 1) *
                             t.position_count * static_cast<size_t>(t.width);
  read_f32(in, t.residuals, resid_count, "residual");
  if (header.value("has_head_outputs", false)) {
    const size_t head_count = static_cast<size_t>(t.layer_count) *
                              t.head_count * t.position_count *
                              static_cast<size_t>(t.head_width);
    read_f32(in, t.head_outputs, head_count, "head output");
  }
  const size_t logit_count = header.value("final_logit_count", size_t{0});
  read_f32(in, t.final_logits, logit_count, "final logit");
  t.validate();
  return t;
}

}  // namespace posbias::model
