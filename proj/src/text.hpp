#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mswave {

// Ordered symbol list; a symbol is one UTF-8 encoded code point.
class Charset {
 public:
  // Space, a-z, apostrophe and basic punctuation; always contains ".".
  static Charset default_charset();
  // One symbol per line (a line holding a single space is the space symbol).
  static Charset parse(std::string_view text);
  static Charset load(const std::string& path);

  explicit Charset(std::vector<std::string> symbols);

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  int id_of(std::string_view symbol) const;  // -1 when absent
  int period_id() const { return period_id_; }
  std::string serialize() const;

  bool operator==(const Charset& o) const { return symbols_ == o.symbols_; }

 private:
  std::vector<std::string> symbols_;
  int period_id_ = -1;
};

struct CharacterSequence {
  std::vector<int> ids;
  std::string normalized_text;
  std::size_t dropped = 0;  // symbols outside the charset
};

// Lowercases ASCII, trims surrounding whitespace, drops symbols outside the
// charset (with a warning) and appends "." when the text does not end in one.
CharacterSequence normalize_and_encode_text(std::string_view text, const Charset& charset);

}  // namespace mswave
