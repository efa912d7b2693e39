#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace posbias::model {

/// Residual-stream recording of one forward pass.
///
/// Snapshot 0 is the post-embedding residual; snapshot l (1-based) is the
/// residual after block l, so there are layer_count + 1 snapshots. Head
/// outputs, when captured, are the per-head attention vectors before the
/// output projection.
struct ActivationTrace {
  int layer_count = 0;
  int position_count = 0;
  int width = 0;
  int head_count = 0;
  int head_width = 0;

  /// (layer_count + 1) x position_count x width
  std::vector<float> residuals;
  /// layer_count x head_count x position_count x head_width; empty if not
  /// captured.
  std::vector<float> head_outputs;
  /// Output logits at the final position (vocabulary length).
  std::vector<float> final_logits;
  std::vector<int> token_ids;

  std::span<const float> residual(int snapshot, int position) const;
  std::span<float> residual(int snapshot, int position);
  std::span<const float> head_output(int layer, int head, int position) const;
  bool has_head_outputs() const { return !head_outputs.empty(); }
  int snapshot_count() const { return layer_count + 1; }

  /// Shape/type consistency; throws DataError on violation.
  void validate() const;
};

/// Binary trace container: magic "PBTRACE1", little-endian uint32 header
/// length, JSON header (dims, dtype, token ids), then raw little-endian
/// float32 arrays in order residuals, head_outputs, final_logits.
void save_trace(const std::string& path, const ActivationTrace& trace);

/// Loads a trace dump; throws ParseError on magic/version/schema mismatch.
ActivationTrace ingest_dump(const std::string& path);

}  // namespace posbias::model
