#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace covlm {

/// Word-level vocabulary with single-character tokens for digits and
/// coordinate punctuation. Reserved ids occupy 0..4; `<region>` always maps
/// to the PLACEHOLDER id.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kPlaceholder = 4;
  static constexpr const char* kPlaceholderText = "<region>";

  Vocab();

  int size() const { return static_cast<int>(tokens_.size()); }
  int id_of(const std::string& tok) const;  // kUnk if absent
  const std::string& token(int id) const { return tokens_.at(id); }
  bool contains(const std::string& tok) const {
    return to_id_.count(tok) != 0;
  }
  int add(const std::string& tok);

  std::string to_json() const;  // JSON array of token strings, index = id
  static Vocab from_json(const std::string& json_text);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> to_id_;
};

struct TokenSeq {
  std::vector<int> ids;
  std::vector<uint8_t> loss_mask;  // per-position loss participation
};

/// Deterministic vocabulary over a corpus: words in order of first
/// appearance, digits and coordinate punctuation always present.
Vocab build_vocab(const std::vector<std::string>& corpus);

/// Splits text into word tokens and single-character digit/punct tokens.
/// `<region>` becomes the PLACEHOLDER token. Unknown words map to UNK.
TokenSeq tokenize(const std::string& text, const Vocab& v);

/// Inverse of tokenize up to whitespace normalization; exact on pure
/// coordinate strings.
std::string detokenize(const std::vector<int>& ids, const Vocab& v);

inline int count_tokens(const std::string& text, const Vocab& v) {
  return static_cast<int>(tokenize(text, v).ids.size());
}

/// Raw token strings for a piece of text, independent of any vocab.
std::vector<std::string> split_tokens(const std::string& text);

}  // namespace covlm
