#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace prrl {

// Word-level vocabulary with dense ids. Ids 0,1,2 are reserved for the
// padding, unknown-word and begin-of-sequence tokens.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;

  Vocab();

  // Frequency-sorted vocabulary from tokenized sequences; ties break
  // alphabetically so construction is deterministic.
  static Vocab build(const std::vector<std::vector<std::string>>& sequences,
                     int min_freq = 2, int max_size = 2000);

  static Vocab read_file(const std::string& path);
  void write_file(const std::string& path) const;

  int id(const std::string& token) const;  // kUnk for unseen tokens
  const std::string& token(int id) const;
  int size() const { return (int)tokens_.size(); }
  uint64_t content_hash() const;

 private:
  void push(const std::string& token);

  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

}  // namespace prrl
