#include "macrt/text.hpp"

#include <algorithm>

#include "macrt/errors.hpp"

namespace macrt {
namespace {

// Decodes one scalar starting at text[pos]; advances pos. Returns false on
// malformed input.
bool decode_one(std::string_view text, std::size_t& pos, char32_t& out) noexcept {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
  const unsigned char lead = byte(pos);
  std::size_t extra = 0;
  char32_t cp = 0;
  char32_t min = 0;
  if (lead < 0x80) {
    out = lead;
    ++pos;
    return true;
  } else if ((lead & 0xE0) == 0xC0) {
    extra = 1;
    cp = lead & 0x1F;
    min = 0x80;
  } else if ((lead & 0xF0) == 0xE0) {
    extra = 2;
    cp = lead & 0x0F;
    min = 0x800;
  } else if ((lead & 0xF8) == 0xF0) {
    extra = 3;
    cp = lead & 0x07;
    min = 0x10000;
  } else {
    return false;
  }
  if (pos + extra >= text.size()) return false;
  for (std::size_t i = 1; i <= extra; ++i) {
    const unsigned char b = byte(pos + i);
    if ((b & 0xC0) != 0x80) return false;
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
  out = cp;
  pos += extra + 1;
  return true;
}

[[noreturn]] void throw_invalid(std::size_t pos) {
  throw ContractViolation("invalid UTF-8 at byte " + std::to_string(pos));
}

// Byte offset of every scalar boundary, including the end.
std::vector<std::size_t> boundaries(std::string_view text) {
  std::vector<std::size_t> out;
  out.reserve(text.size() + 1);
  std::size_t pos = 0;
  char32_t cp;
  while (pos < text.size()) {
    out.push_back(pos);
    if (!decode_one(text, pos, cp)) throw_invalid(out.back());
  }
  out.push_back(text.size());
  return out;
}

}  // namespace

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  char32_t cp;
  while (pos < text.size()) {
    const std::size_t at = pos;
    if (!decode_one(text, pos, cp)) throw_invalid(at);
    out.push_back(cp);
  }
  return out;
}

void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

std::string encode_utf8(std::u32string_view scalars) {
  std::string out;
  out.reserve(scalars.size());
  for (char32_t c : scalars) {
    if (c > 0x10FFFF || (c >= 0xD800 && c <= 0xDFFF)) {
      throw ContractViolation("not a Unicode scalar value");
    }
    append_utf8(out, c);
  }
  return out;
}

bool is_valid_utf8(std::string_view text) noexcept {
  std::size_t pos = 0;
  char32_t cp;
  while (pos < text.size()) {
    if (!decode_one(text, pos, cp)) return false;
  }
  return true;
}

std::size_t scalar_count(std::string_view text) { return boundaries(text).size() - 1; }

std::string char_slice(std::string_view text, std::size_t start, std::size_t end) {
  const auto bounds = boundaries(text);
  const std::size_t len = bounds.size() - 1;
  if (start > end || end > len) {
    throw ContractViolation("char_slice [" + std::to_string(start) + ", " + std::to_string(end) +
                            ") out of range for length " + std::to_string(len));
  }
  return std::string(text.substr(bounds[start], bounds[end] - bounds[start]));
}

std::string char_slice(const Word& word, std::size_t start, std::size_t end) {
  return char_slice(word.text, start, end);
}

char32_t lower_scalar(char32_t c) noexcept {
  if (c >= U'A' && c <= U'Z') return c + 0x20;
  if (c < 0xC0) return c;
  if (c <= 0xDE) return c == 0xD7 ? c : c + 0x20;
  if (c >= 0x100 && c <= 0x137) return c | 1;
  if (c >= 0x139 && c <= 0x148) return (c & 1) ? c + 1 : c;
  if (c >= 0x14A && c <= 0x177) return c | 1;
  if (c == 0x178) return 0xFF;
  if (c >= 0x179 && c <= 0x17E) return (c & 1) ? c + 1 : c;
  if (c == 0x386) return 0x3AC;
  if (c >= 0x388 && c <= 0x38A) return c + 0x25;
  if (c == 0x38C) return 0x3CC;
  if (c == 0x38E || c == 0x38F) return c + 0x3F;
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  return c;
}

std::string to_lower(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : decode_utf8(text)) append_utf8(out, lower_scalar(c));
  return out;
}

bool is_space_scalar(char32_t c) noexcept {
  switch (c) {
    case U' ':
    case U'\t':
    case U'\n':
    case U'\v':
    case U'\f':
    case U'\r':
    case 0x85:
    case 0xA0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

bool is_punct_scalar(char32_t c) noexcept {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
  }
  switch (c) {
    case 0xA1:  // ¡
    case 0xAB:  // «
    case 0xB7:  // ·
    case 0xBB:  // »
    case 0xBF:  // ¿
      return true;
    default:
      break;
  }
  return (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) || (c >= 0x3001 && c <= 0x3003) ||
         (c >= 0x3008 && c <= 0x3011) || (c >= 0xFF01 && c <= 0xFF0F);
}

Word make_word(std::string_view token) {
  const std::u32string s = decode_utf8(token);
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && is_punct_scalar(s[begin])) ++begin;
  while (end > begin && is_punct_scalar(s[end - 1])) --end;
  Word w;
  w.prefix = encode_utf8(std::u32string_view(s).substr(0, begin));
  w.text = encode_utf8(std::u32string_view(s).substr(begin, end - begin));
  w.suffix = encode_utf8(std::u32string_view(s).substr(end));
  w.char_len = end - begin;
  return w;
}

std::vector<std::size_t> Prompt::sensitive_indices() const {
  std::vector<std::size_t> out;
  out.reserve(sensitive_.size());
  for (const auto& m : sensitive_) out.push_back(m.index);
  return out;
}

Prompt Prompt::with_sensitive(std::vector<SensitiveMark> marks) const {
  for (std::size_t i = 0; i < marks.size(); ++i) {
    if (marks[i].index >= words_.size()) {
      throw ContractViolation("sensitive index " + std::to_string(marks[i].index) + " out of range");
    }
    if (i > 0 && marks[i].index <= marks[i - 1].index) {
      throw ContractViolation("sensitive indices must be strictly increasing");
    }
  }
  Prompt copy = *this;
  copy.sensitive_ = std::move(marks);
  return copy;
}

std::string Prompt::render() const {
  std::string out = separators_.front();
  for (std::size_t i = 0; i < words_.size(); ++i) {
    out += words_[i].token();
    out += separators_[i + 1];
  }
  return out;
}

Prompt tokenize(std::string_view raw) {
  Prompt p;
  p.raw_ = std::string(raw);
  p.separators_.clear();

  const std::u32string s = decode_utf8(raw);
  std::size_t i = 0;
  std::u32string gap;
  while (i < s.size()) {
    gap.clear();
    while (i < s.size() && is_space_scalar(s[i])) gap.push_back(s[i++]);
    p.separators_.push_back(encode_utf8(gap));
    if (i == s.size()) break;
    const std::size_t start = i;
    while (i < s.size() && !is_space_scalar(s[i])) ++i;
    p.words_.push_back(make_word(encode_utf8(std::u32string_view(s).substr(start, i - start))));
  }
  if (p.separators_.size() == p.words_.size()) p.separators_.emplace_back();
  return p;
}

}  // namespace macrt
