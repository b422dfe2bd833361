#include "prrl/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace prrl {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'P', 'R', 'R', 'L'};

json config_to_json(const ModelConfig& c) {
  return json{{"d_model", c.d_model},   {"n_layers", c.n_layers},
              {"n_heads", c.n_heads},   {"max_len", c.max_len},
              {"vocab_size", c.vocab_size}, {"dropout", c.dropout}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff),
                        (unsigned char)((v >> 24) & 0xff)};
  out.write((const char*)b, 4);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read((char*)b, 4)) throw data_error("checkpoint: truncated file " + path);
  return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) |
         ((uint32_t)b[3] << 24);
}

json read_meta_json(std::istream& in, const std::string& path) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
    throw data_error("checkpoint: bad magic in " + path);
  const uint32_t version = read_u32(in, path);
  if (version != kCheckpointVersion)
    throw data_error("checkpoint: unsupported format version " + std::to_string(version) +
                     " in " + path);
  const uint32_t meta_len = read_u32(in, path);
  std::string meta(meta_len, '\0');
  if (!in.read(meta.data(), meta_len))
    throw data_error("checkpoint: truncated metadata in " + path);
  try {
    return json::parse(meta);
  } catch (const json::exception& e) {
    throw data_error("checkpoint: bad metadata in " + path + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamSetT<float>& params) {
  json j{{"kind", meta.kind},
         {"config", config_to_json(meta.config)},
         {"vocab_hash", meta.vocab_hash},
         {"layout_id", meta.layout_id},
         {"step", meta.step}};
  const std::string text = j.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, (uint32_t)text.size());
  out.write(text.data(), (std::streamsize)text.size());
  const std::vector<float> flat = params.flatten_values();
  out.write((const char*)flat.data(), (std::streamsize)(flat.size() * sizeof(float)));
  if (!out) throw data_error("checkpoint: write failed for " + path);
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("checkpoint: cannot read " + path);
  const json j = read_meta_json(in, path);
  CheckpointMeta meta;
  try {
    meta.kind = j.at("kind").get<std::string>();
    meta.config = config_from_json(j.at("config"));
    meta.vocab_hash = j.at("vocab_hash").get<uint64_t>();
    meta.layout_id = j.at("layout_id").get<uint64_t>();
    meta.step = j.at("step").get<int64_t>();
  } catch (const json::exception& e) {
    throw data_error("checkpoint: bad metadata in " + path + ": " + e.what());
  }
  return meta;
}

void load_checkpoint_params(const std::string& path, ParamSetT<float>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("checkpoint: cannot read " + path);
  const json j = read_meta_json(in, path);
  const uint64_t layout = j.at("layout_id").get<uint64_t>();
  if (layout != params.layout_id())
    throw data_error("checkpoint: parameter layout mismatch in " + path);
  std::vector<float> flat(params.total_size());
  if (!in.read((char*)flat.data(), (std::streamsize)(flat.size() * sizeof(float))))
    throw data_error("checkpoint: truncated parameters in " + path);
  params.load_values(flat);
}

}  // namespace prrl
