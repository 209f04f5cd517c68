#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace timesense::toymodel {

// Fixed character-level vocabulary: ids 0..2 are <eos>, <ts>, </ts>; the rest
// cover the template alphabet (letters, digits, punctuation used by the
// question/answer templates and by decimal number rendering).

inline constexpr int kEos = 0;
inline constexpr int kTsOpen = 1;
inline constexpr int kTsClose = 2;
inline constexpr int kSpecialCount = 3;

inline const std::string& alphabet() {
  static const std::string a =
      " \n!\"#%'()*+,-./0123456789:;<=>?ABCDEFGHIJKLMNOPQRSTUVWXYZ[]_"
      "abcdefghijklmnopqrstuvwxyz{|}~";
  return a;
}

inline int vocab_size() {
  return kSpecialCount + static_cast<int>(alphabet().size());
}

inline int char_to_id(char c) {
  const auto pos = alphabet().find(c);
  if (pos == std::string::npos)
    throw std::invalid_argument(std::string("character outside vocabulary: '") + c + "'");
  return kSpecialCount + static_cast<int>(pos);
}

inline std::vector<int> encode_text(const std::string& text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(char_to_id(c));
  return ids;
}

inline std::string decode_ids(const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id == kEos) continue;
    if (id == kTsOpen) {
      out += "<ts>";
    } else if (id == kTsClose) {
      out += "</ts>";
    } else if (id >= kSpecialCount && id < vocab_size()) {
      out += alphabet()[static_cast<std::size_t>(id - kSpecialCount)];
    } else {
      throw std::invalid_argument("token id outside vocabulary");
    }
  }
  return out;
}

// Question text references series by placeholder; the fused sequence carries
// the actual blocks at its head, so placeholders reduce to their ordinal.
inline std::string strip_placeholders(const std::string& question) {
  std::string out;
  std::size_t pos = 0;
  while (pos < question.size()) {
    const std::size_t at = question.find("<ts:", pos);
    if (at == std::string::npos) {
      out += question.substr(pos);
      break;
    }
    out += question.substr(pos, at - pos);
    const std::size_t close = question.find('>', at);
    if (close == std::string::npos)
      throw std::invalid_argument("unterminated series placeholder");
    out += question.substr(at + 4, close - at - 4);  // keep the ordinal
    pos = close + 1;
  }
  return out;
}

}  // namespace timesense::toymodel
