#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace winseg {

// CLIP byte-level BPE tokenizer. Reads the standard merges file (first line is a
// header, then one "a b" merge per line). Sequences are
// <|startoftext|> tokens... <|endoftext|>, zero padded to the context length.
class ClipTokenizer {
 public:
  ClipTokenizer(const std::vector<std::pair<std::string, std::string>>& merges, int context_length);
  static ClipTokenizer from_file(const std::string& merges_path, int context_length, int max_merges = 49152 - 256 - 2);

  // Token ids without padding. Throws EncoderError when the sequence would
  // exceed the context length.
  std::vector<std::int64_t> encode(std::string_view text) const;
  std::vector<std::int64_t> encode_padded(std::string_view text) const;

  int context_length() const { return context_length_; }
  std::int64_t start_token() const { return start_; }
  std::int64_t end_token() const { return end_; }
  std::int64_t token_id(const std::string& symbol) const;

 private:
  std::vector<std::string> bpe(const std::string& word) const;

  int context_length_;
  std::unordered_map<std::string, std::int64_t> vocab_;
  std::map<std::pair<std::string, std::string>, int> ranks_;
  std::int64_t start_ = 0;
  std::int64_t end_ = 0;
};

// Pre-tokenizer split used by CLIP: contractions, letter runs, single digits,
// runs of other non-space characters. Input is lower-cased and
// whitespace-collapsed first. Non-ASCII bytes count as letters.
std::vector<std::string> clip_pretokenize(std::string_view text);

}  // namespace winseg
