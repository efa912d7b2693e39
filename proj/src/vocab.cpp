#include "posbias/vocab.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "posbias/design.hpp"
#include "posbias/errors.hpp"

namespace posbias::model {

namespace {

bool is_word_char(unsigned char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
         (c >= '0' && c <= '9');
}

bool is_space_char(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

std::string byte_token_name(unsigned char c) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "<0x%02X>", c);
  return std::string(buf);
}

}  // namespace

Vocabulary::Vocabulary() {
  tokens_.reserve(kByteTokens);
  for (int b = 0; b < kByteTokens; ++b) {
    append_token(byte_token_name(static_cast<unsigned char>(b)));
  }
}

void Vocabulary::append_token(std::string token) {
  const int id = static_cast<int>(tokens_.size());
  auto [it, inserted] = index_.emplace(token, id);
  if (!inserted) {
    throw ValidationError("vocabulary: duplicate token '" + token + "'");
  }
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  for (const auto& w : words) {
    if (w.empty()) {
      throw ValidationError("vocabulary: empty word entry");
    }
    if (std::any_of(w.begin(), w.end(),
                    [](unsigned char c) { return is_space_char(c); })) {
      throw ValidationError("vocabulary: word '" + w + "' contains whitespace");
    }
    v.append_token(w);
  }
  return v;
}

Vocabulary Vocabulary::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("vocabulary: cannot open '" + path + "'");
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("vocabulary: '" + path + "' is not valid JSON: " +
                     e.what());
  }
  if (!j.is_array()) {
    throw ParseError("vocabulary: '" + path + "' must be a JSON array");
  }
  std::vector<std::string> words;
  words.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_string()) {
      throw ParseError("vocabulary: non-string entry in '" + path + "'");
    }
    words.push_back(e.get<std::string>());
  }
  return from_words(words);
}

void Vocabulary::save_json(const std::string& path) const {
  nlohmann::json j = nlohmann::json::array();
  for (int i = kByteTokens; i < size(); ++i) {
    j.push_back(tokens_[static_cast<size_t>(i)]);
  }
  std::ofstream out(path);
  if (!out) {
    throw Error("vocabulary: cannot write '" + path + "'");
  }
  out << j.dump(2) << '\n';
}

int Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw DataError("vocabulary: token id " + std::to_string(id) +
                    " out of range");
  }
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::encode_word(std::string_view word) const {
  std::vector<int> ids;
  const int whole = id_of(word);
  if (whole >= 0) {
    ids.push_back(whole);
    return ids;
  }
  ids.reserve(word.size());
  for (unsigned char c : word) {
    ids.push_back(static_cast<int>(c));
  }
  return ids;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (is_space_char(c)) {
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      size_t j = i;
      while (j < text.size() &&
             is_word_char(static_cast<unsigned char>(text[j]))) {
        ++j;
      }
      const auto word_ids = encode_word(text.substr(i, j - i));
      ids.insert(ids.end(), word_ids.begin(), word_ids.end());
      i = j;
    } else {
      ids.push_back(static_cast<int>(c));
      ++i;
    }
  }
  return ids;
}

std::vector<std::string> Vocabulary::words() const {
  return {tokens_.begin() + kByteTokens, tokens_.end()};
}

std::vector<std::string> design_word_inventory(
    const design::DesignSpec& spec) {
  std::set<std::string> words;
  auto collect = [&words](std::string_view text) {
    size_t i = 0;
    while (i < text.size()) {
      if (is_word_char(static_cast<unsigned char>(text[i]))) {
        size_t j = i;
        while (j < text.size() &&
               is_word_char(static_cast<unsigned char>(text[j]))) {
          ++j;
        }
        words.emplace(text.substr(i, j - i));
        i = j;
      } else {
        ++i;
      }
    }
  };

  design::TrialConfig probe;
  probe.firm_first = "X0";
  probe.firm_second = "Y0";
  probe.replication_index = 1;
  for (const auto& style : spec.styles) {
    for (const auto& category : spec.categories) {
      for (int template_id : spec.templates) {
        probe.style = style;
        probe.category = category;
        probe.template_id = template_id;
        const auto prompt = design::render_prompt(probe, spec);
        collect(prompt.system_text);
        collect(prompt.user_text);
      }
    }
  }
  words.erase("X0");
  words.erase("Y0");
  for (const auto& t : spec.universe.firms) {
    words.insert(t);
  }
  // Chat-scaffold words used by the built-in backends' prompt format.
  words.insert("system");
  words.insert("user");
  words.insert("assistant");
  return {words.begin(), words.end()};
}

}  // namespace posbias::model
