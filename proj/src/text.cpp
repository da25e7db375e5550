#include "text.hpp"

#include <fstream>
#include <sstream>

#include "error.hpp"
#include "log.hpp"

namespace mswave {
namespace {

// Splits UTF-8 into code point substrings; invalid bytes become single-byte units.
std::vector<std::string_view> code_points(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    if (i + len > s.size()) len = 1;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

Charset::Charset(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i].empty()) throw Error(ErrorCode::Parse, "charset contains an empty symbol");
    if (code_points(symbols_[i]).size() != 1) {
      throw Error(ErrorCode::Parse, "charset symbol '" + symbols_[i] + "' is not a single code point");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (symbols_[j] == symbols_[i]) throw Error(ErrorCode::Parse, "duplicate charset symbol '" + symbols_[i] + "'");
    }
    if (symbols_[i] == ".") period_id_ = static_cast<int>(i);
  }
  if (period_id_ < 0) throw Error(ErrorCode::Parse, "charset must contain the period symbol '.'");
}

Charset Charset::default_charset() {
  std::vector<std::string> symbols = {" "};
  for (char c = 'a'; c <= 'z'; ++c) symbols.emplace_back(1, c);
  for (const char* p : {"'", ".", ",", "?", "!", "-"}) symbols.emplace_back(p);
  return Charset(std::move(symbols));
}

Charset Charset::parse(std::string_view text) {
  std::vector<std::string> symbols;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) symbols.emplace_back(line);
    start = nl + 1;
  }
  return Charset(std::move(symbols));
}

Charset Charset::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open charset file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

int Charset::id_of(std::string_view symbol) const {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i] == symbol) return static_cast<int>(i);
  }
  return -1;
}

std::string Charset::serialize() const {
  std::string out;
  for (const auto& s : symbols_) {
    out += s;
    out += '\n';
  }
  return out;
}

CharacterSequence normalize_and_encode_text(std::string_view text, const Charset& charset) {
  std::string lowered(text);
  for (char& c : lowered) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  const auto first = lowered.find_first_not_of(" \t\r\n");
  const auto last = lowered.find_last_not_of(" \t\r\n");
  const std::string_view trimmed =
      first == std::string::npos ? std::string_view{} : std::string_view(lowered).substr(first, last - first + 1);

  CharacterSequence seq;
  for (auto cp : code_points(trimmed)) {
    const int id = charset.id_of(cp);
    if (id < 0) {
      ++seq.dropped;
      continue;
    }
    seq.ids.push_back(id);
    seq.normalized_text += cp;
  }
  if (seq.dropped) {
    log::warn("dropped " + std::to_string(seq.dropped) + " symbol(s) outside the charset from \"" + std::string(text) + "\"");
  }
  // Whitespace left at the end after dropping symbols would precede the period.
  while (!seq.ids.empty() && charset.symbols()[static_cast<std::size_t>(seq.ids.back())] == " ") {
    seq.ids.pop_back();
    seq.normalized_text.pop_back();
  }
  if (seq.ids.empty()) throw Error(ErrorCode::InvalidArgument, "text is empty after normalization");
  if (seq.ids.back() != charset.period_id()) {
    seq.ids.push_back(charset.period_id());
    seq.normalized_text += '.';
  }
  return seq;
}

}  // namespace mswave
