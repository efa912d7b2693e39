#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace posbias::design {
struct DesignSpec;
}

namespace posbias::model {

/// Word-level vocabulary with byte fallback. Ids 0..255 are the 256 byte
/// tokens (spelled "<0xNN>"), word entries follow. Every byte sequence is
/// tokenizable, so candidate resolution never fails with an OOV error.
///
/// Tokenization rule: the text is cut into maximal alphanumeric runs and
/// single non-alphanumeric characters; whitespace only separates. An
/// alphanumeric run is looked up as one word and falls back to its bytes when
/// absent; every other character becomes its byte token. Tickers present in
/// the word list therefore always tokenize to a single id, even when glued to
/// punctuation ("MSFT,").
class Vocabulary {
 public:
  static constexpr int kByteTokens = 256;

  Vocabulary();
  /// Byte tokens plus the given words (order-preserving; duplicates rejected).
  static Vocabulary from_words(const std::vector<std::string>& words);

  static Vocabulary load_json(const std::string& path);
  /// Writes the word entries (not the implicit byte tokens) as a JSON array.
  void save_json(const std::string& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  /// Id of an exact token string, -1 if absent.
  int id_of(std::string_view token) const;
  const std::string& token(int id) const;
  bool is_byte_token(int id) const { return id >= 0 && id < kByteTokens; }

  std::vector<int> encode(std::string_view text) const;
  /// Encodes one whitespace-free chunk (e.g. a ticker in answer position).
  std::vector<int> encode_word(std::string_view word) const;

  std::vector<std::string> words() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;

  void append_token(std::string token);
};

/// Every alphanumeric word that can appear in a rendered prompt for this
/// design (template skeletons, style sentences, category phrases, tickers),
/// deduplicated and sorted. Feeding this to Vocabulary::from_words guarantees
/// single-token tickers for the built-in backends.
std::vector<std::string> design_word_inventory(const design::DesignSpec& spec);

}  // namespace posbias::model
