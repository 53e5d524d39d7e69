#include "covlm/textcodec.hpp"

#include <cctype>
#include <stdexcept>

#include "json.hpp"

namespace covlm {

namespace {

bool is_coord_char(char c) {
  return (c >= '0' && c <= '9') || c == '.' || c == ',' || c == '[' ||
         c == ']' || c == '-';
}

const char* kCoordChars = "0123456789.,[]-";

}  // namespace

Vocab::Vocab() {
  add("<pad>");
  add("<bos>");
  add("<eos>");
  add("<unk>");
  add(kPlaceholderText);
}

int Vocab::id_of(const std::string& tok) const {
  auto it = to_id_.find(tok);
  return it == to_id_.end() ? kUnk : it->second;
}

int Vocab::add(const std::string& tok) {
  auto it = to_id_.find(tok);
  if (it != to_id_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(tok);
  to_id_.emplace(tok, id);
  return id;
}

std::string Vocab::to_json() const {
  return nlohmann::json(tokens_).dump();
}

Vocab Vocab::from_json(const std::string& json_text) {
  auto arr = nlohmann::json::parse(json_text);
  Vocab v;
  for (size_t i = 0; i < arr.size(); ++i) {
    const std::string tok = arr[i].get<std::string>();
    if (static_cast<int>(i) < v.size()) {
      if (v.token(static_cast<int>(i)) != tok)
        throw std::runtime_error("vocab json: reserved token mismatch");
    } else {
      v.add(tok);
    }
  }
  return v;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (text.compare(i, 8, Vocab::kPlaceholderText) == 0) {
      out.emplace_back(Vocab::kPlaceholderText);
      i += 8;
      continue;
    }
    if (is_coord_char(c)) {
      out.emplace_back(1, c);
      ++i;
      continue;
    }
    size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j])) &&
           !is_coord_char(text[j]) && text.compare(j, 8, Vocab::kPlaceholderText) != 0)
      ++j;
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

Vocab build_vocab(const std::vector<std::string>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  Vocab v;
  for (const char* p = kCoordChars; *p; ++p) v.add(std::string(1, *p));
  for (const auto& text : corpus)
    for (const auto& tok : split_tokens(text)) v.add(tok);
  return v;
}

TokenSeq tokenize(const std::string& text, const Vocab& v) {
  TokenSeq seq;
  for (const auto& tok : split_tokens(text)) seq.ids.push_back(v.id_of(tok));
  seq.loss_mask.assign(seq.ids.size(), 0);
  return seq;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& v) {
  std::string out;
  bool prev_coord = false;
  bool first = true;
  for (int id : ids) {
    if (id == Vocab::kPad || id == Vocab::kBos || id == Vocab::kEos) continue;
    const std::string& tok = v.token(id);
    const bool coord = tok.size() == 1 && is_coord_char(tok[0]);
    if (!first && !(prev_coord && coord)) out += ' ';
    out += tok;
    prev_coord = coord;
    first = false;
  }
  return out;
}

}  // namespace covlm
