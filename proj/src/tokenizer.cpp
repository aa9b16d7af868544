#include "winseg/tokenizer.hpp"

#include "winseg/types.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>

namespace winseg {

namespace {

std::string utf8(int codepoint) {
  std::string s;
  if (codepoint < 0x80) {
    s += static_cast<char>(codepoint);
  } else if (codepoint < 0x800) {
    s += static_cast<char>(0xC0 | (codepoint >> 6));
    s += static_cast<char>(0x80 | (codepoint & 0x3F));
  } else {
    s += static_cast<char>(0xE0 | (codepoint >> 12));
    s += static_cast<char>(0x80 | ((codepoint >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (codepoint & 0x3F));
  }
  return s;
}

// GPT-2 / CLIP reversible byte -> printable unicode table, in vocabulary order.
std::vector<std::pair<int, std::string>> byte_table() {
  std::vector<int> bytes;
  for (int b = '!'; b <= '~'; ++b) bytes.push_back(b);
  for (int b = 0xA1; b <= 0xAC; ++b) bytes.push_back(b);
  for (int b = 0xAE; b <= 0xFF; ++b) bytes.push_back(b);
  std::vector<int> codepoints = bytes;
  int extra = 0;
  for (int b = 0; b < 256; ++b) {
    if (std::find(bytes.begin(), bytes.end(), b) == bytes.end()) {
      bytes.push_back(b);
      codepoints.push_back(256 + extra++);
    }
  }
  std::vector<std::pair<int, std::string>> table;
  for (std::size_t i = 0; i < bytes.size(); ++i) table.emplace_back(bytes[i], utf8(codepoints[i]));
  return table;
}

const std::vector<std::string>& byte_symbols() {
  static const std::vector<std::string> symbols = [] {
    std::vector<std::string> s(256);
    for (const auto& [b, sym] : byte_table()) s[static_cast<std::size_t>(b)] = sym;
    return s;
  }();
  return symbols;
}

bool is_letter(unsigned char c) { return std::isalpha(c) || c >= 0x80; }
bool is_digit(unsigned char c) { return std::isdigit(c) != 0; }
bool is_space(unsigned char c) { return std::isspace(c) != 0; }

}  // namespace

std::vector<std::string> clip_pretokenize(std::string_view text) {
  std::string clean;
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      pending_space = !clean.empty();
      continue;
    }
    if (pending_space) clean += ' ';
    pending_space = false;
    clean += static_cast<char>(std::tolower(c));
  }

  static const std::vector<std::string> specials = {"<|startoftext|>", "<|endoftext|>"};
  static const std::vector<std::string> contractions = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};

  std::vector<std::string> pieces;
  std::size_t i = 0;
  while (i < clean.size()) {
    const auto c = static_cast<unsigned char>(clean[i]);
    if (is_space(c)) {
      ++i;
      continue;
    }
    bool matched = false;
    for (const auto* group : {&specials, &contractions}) {
      for (const auto& s : *group) {
        if (clean.compare(i, s.size(), s) == 0) {
          pieces.push_back(s);
          i += s.size();
          matched = true;
          break;
        }
      }
      if (matched) break;
    }
    if (matched) continue;

    std::size_t j = i + 1;
    if (is_letter(c)) {
      while (j < clean.size() && is_letter(static_cast<unsigned char>(clean[j]))) ++j;
    } else if (!is_digit(c)) {
      while (j < clean.size()) {
        const auto d = static_cast<unsigned char>(clean[j]);
        if (is_space(d) || is_letter(d) || is_digit(d)) break;
        ++j;
      }
    }
    pieces.push_back(clean.substr(i, j - i));
    i = j;
  }
  return pieces;
}

ClipTokenizer::ClipTokenizer(const std::vector<std::pair<std::string, std::string>>& merges, int context_length)
    : context_length_(context_length) {
  if (context_length < 2) throw ConfigError("tokenizer context length must be at least 2");
  std::int64_t next = 0;
  const auto table = byte_table();
  for (const auto& entry : table) vocab_.emplace(entry.second, next++);
  for (const auto& entry : table) vocab_.emplace(entry.second + "</w>", next++);
  int rank = 0;
  for (const auto& m : merges) {
    vocab_.emplace(m.first + m.second, next++);
    ranks_.emplace(m, rank++);
  }
  start_ = next++;
  end_ = next++;
  vocab_.emplace("<|startoftext|>", start_);
  vocab_.emplace("<|endoftext|>", end_);
}

ClipTokenizer ClipTokenizer::from_file(const std::string& merges_path, int context_length, int max_merges) {
  std::ifstream in(merges_path);
  if (!in) throw IoError("cannot open BPE merges file '" + merges_path + "'");
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::pair<std::string, std::string>> merges;
  while (static_cast<int>(merges.size()) < max_merges && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto space = line.find(' ');
    if (space == std::string::npos) continue;
    merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return ClipTokenizer(merges, context_length);
}

std::int64_t ClipTokenizer::token_id(const std::string& symbol) const {
  const auto it = vocab_.find(symbol);
  if (it == vocab_.end()) throw EncoderError("symbol not in vocabulary: '" + symbol + "'");
  return it->second;
}

std::vector<std::string> ClipTokenizer::bpe(const std::string& word) const {
  const auto& symbols = byte_symbols();
  std::vector<std::string> parts;
  for (char ch : word) parts.push_back(symbols[static_cast<unsigned char>(ch)]);
  if (parts.empty()) return parts;
  parts.back() += "</w>";

  while (parts.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    std::size_t best = 0;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      const auto it = ranks_.find({parts[i], parts[i + 1]});
      if (it != ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = i;
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    const std::string first = parts[best];
    const std::string second = parts[best + 1];
    std::vector<std::string> merged;
    for (std::size_t i = 0; i < parts.size();) {
      if (i + 1 < parts.size() && parts[i] == first && parts[i + 1] == second) {
        merged.push_back(first + second);
        i += 2;
      } else {
        merged.push_back(parts[i]);
        ++i;
      }
    }
    parts = std::move(merged);
  }
  return parts;
}

std::vector<std::int64_t> ClipTokenizer::encode(std::string_view text) const {
  std::vector<std::int64_t> ids{start_};
  for (const auto& piece : clip_pretokenize(text)) {
    if (piece == "<|startoftext|>" || piece == "<|endoftext|>") {
      ids.push_back(token_id(piece));
      continue;
    }
    for (const auto& sym : bpe(piece)) ids.push_back(token_id(sym));
  }
  ids.push_back(end_);
  if (static_cast<int>(ids.size()) > context_length_)
    throw EncoderError("prompt needs " + std::to_string(ids.size()) + " tokens, context is " +
                       std::to_string(context_length_) + ": '" + std::string(text) + "'");
  return ids;
}

std::vector<std::int64_t> ClipTokenizer::encode_padded(std::string_view text) const {
  auto ids = encode(text);
  ids.resize(static_cast<std::size_t>(context_length_), 0);
  return ids;
}

}  // namespace winseg
