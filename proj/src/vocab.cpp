#include "prrl/vocab.hpp"

#include <algorithm>
#include <fstream>

#include "prrl/errors.hpp"

namespace prrl {

namespace {
const char* kReserved[3] = {"<pad>", "<unk>", "<bos>"};
}

Vocab::Vocab() {
  for (const char* t : kReserved) push(t);
}

void Vocab::push(const std::string& token) {
  if (index_.count(token))
    throw data_error("vocab: duplicate token '" + token + "'");
  index_[token] = (int)tokens_.size();
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& sequences, int min_freq,
                   int max_size) {
  std::map<std::string, int64_t> freq;
  for (const auto& seq : sequences)
    for (const auto& w : seq) ++freq[w];

  std::vector<std::pair<std::string, int64_t>> items;
  for (const auto& [tok, n] : freq)
    if (n >= min_freq) items.emplace_back(tok, n);
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  for (const auto& [tok, n] : items) {
    if (v.size() >= max_size) break;
    if (!v.index_.count(tok)) v.push(tok);
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    throw data_error("vocab: id " + std::to_string(id) + " out of range (size " +
                     std::to_string(size()) + ")");
  return tokens_[id];
}

uint64_t Vocab::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  };
  for (int i = 0; i < size(); ++i) {
    mix(tokens_[i]);
    mix("\t" + std::to_string(i) + "\n");
  }
  return h;
}

void Vocab::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("vocab: cannot write " + path);
  for (int i = 0; i < size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocab Vocab::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("vocab: cannot read " + path);
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw data_error("vocab: " + path + ":" + std::to_string(lineno) + ": missing tab");
    const std::string tok = line.substr(0, tab);
    int id;
    try {
      id = std::stoi(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw data_error("vocab: " + path + ":" + std::to_string(lineno) + ": bad id");
    }
    if (id != (int)v.tokens_.size())
      throw data_error("vocab: " + path + ":" + std::to_string(lineno) +
                       ": ids must be dense and ascending, got " + std::to_string(id));
    v.push(tok);
  }
  if (v.size() < 3 || v.tokens_[0] != kReserved[0] || v.tokens_[1] != kReserved[1] ||
      v.tokens_[2] != kReserved[2])
    throw data_error("vocab: " + path + ": ids 0,1,2 must be <pad>, <unk>, <bos>");
  return v;
}

}  // namespace prrl
