#pragma once

// UTF-8 helpers and the default token counting rule.
//
// Default rule: Unicode whitespace separates tokens; inside a whitespace-free
// run, every punctuation code point is a token of its own and each maximal run
// of other code points is one token.  "Hi, there!" is four tokens.

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace graphgen {

struct CodePoint {
  char32_t value;
  std::size_t begin;  // byte offsets into the source string
  std::size_t end;
};

inline std::vector<CodePoint> decode_utf8(std::string_view text) {
  std::vector<CodePoint> out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c = 0;
    U8_NEXT(s, i, length, c);
    if (c < 0) c = 0xFFFD;
    out.push_back({static_cast<char32_t>(c), static_cast<std::size_t>(start),
                   static_cast<std::size_t>(i)});
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t c) {
  uint8_t buf[U8_MAX_LENGTH];
  int32_t n = 0;
  UBool error = false;
  U8_APPEND(buf, n, U8_MAX_LENGTH, static_cast<UChar32>(c), error);
  if (error) {
    append_utf8(out, 0xFFFD);
    return;
  }
  out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
}

inline bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }
inline bool is_punct(char32_t c) { return u_ispunct(static_cast<UChar32>(c)); }

// Simple (single code point) Unicode case folding.
inline std::string case_fold(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (const auto& cp : decode_utf8(text)) {
    append_utf8(out, static_cast<char32_t>(u_foldCase(static_cast<UChar32>(cp.value),
                                                      U_FOLD_CASE_DEFAULT)));
  }
  return out;
}

inline std::string trim(std::string_view text) {
  const auto cps = decode_utf8(text);
  std::size_t first = 0;
  while (first < cps.size() && is_space(cps[first].value)) ++first;
  if (first == cps.size()) return {};
  std::size_t last = cps.size();
  while (last > first && is_space(cps[last - 1].value)) --last;
  return std::string(text.substr(cps[first].begin, cps[last - 1].end - cps[first].begin));
}

// Case fold, trim, and collapse internal whitespace runs to a single space.
inline std::string canonical_name(std::string_view name) {
  const std::string folded = case_fold(name);
  std::string out;
  bool pending_space = false;
  for (const auto& cp : decode_utf8(folded)) {
    if (is_space(cp.value)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    append_utf8(out, cp.value);
  }
  return out;
}

struct TokenSpan {
  std::size_t begin;
  std::size_t end;
};

// Pluggable counter.  spans() must return ordered, non-overlapping byte ranges
// and count() must equal spans().size().
class TokenCounter {
 public:
  virtual ~TokenCounter() = default;
  virtual std::vector<TokenSpan> spans(std::string_view text) const = 0;
  virtual std::size_t count(std::string_view text) const { return spans(text).size(); }
};

class DefaultTokenCounter final : public TokenCounter {
 public:
  std::vector<TokenSpan> spans(std::string_view text) const override {
    std::vector<TokenSpan> out;
    bool in_word = false;
    for (const auto& cp : decode_utf8(text)) {
      if (is_space(cp.value)) {
        in_word = false;
      } else if (is_punct(cp.value)) {
        out.push_back({cp.begin, cp.end});
        in_word = false;
      } else if (in_word) {
        out.back().end = cp.end;
      } else {
        out.push_back({cp.begin, cp.end});
        in_word = true;
      }
    }
    return out;
  }
};

inline const TokenCounter& default_token_counter() {
  static const DefaultTokenCounter counter;
  return counter;
}

inline std::size_t count_tokens(std::string_view text) {
  return default_token_counter().count(text);
}

}  // namespace graphgen
