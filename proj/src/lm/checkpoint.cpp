#include "plab/lm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <json.hpp>

#include "plab/util/error.hpp"
#include "plab/util/io.hpp"

namespace plab::lm {

namespace {

constexpr char kMagic[8] = {'P', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t& pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += static_cast<std::size_t>(bytes);
  return v;
}

nlohmann::json config_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers}, {"n_heads", c.n_heads},       {"d_model", c.d_model}, {"d_ff", c.d_ff},
          {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len}, {"seed", c.seed}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta) {
  nlohmann::json header;
  header["config"] = config_json(model.config());
  header["seed"] = meta.seed;
  header["corpus_hash"] = meta.corpus_hash;
  header["params"] = nlohmann::json::array();
  for (const auto& p : model.parameters()) header["params"].push_back({{"name", p.name}, {"shape", p.tensor->shape()}});
  const std::string hdr = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le(out, kCheckpointVersion, 4);
  put_le(out, hdr.size(), 8);
  out += hdr;
  for (const auto& p : model.parameters()) {
    for (double v : p.tensor->data()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  write_file_atomic(path, out);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le(in, pos, 4);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = get_le(in, pos, 8);
  if (pos + hlen > in.size()) throw DataError("checkpoint header truncated");
  const auto header = nlohmann::json::parse(in.substr(pos, hlen));
  pos += hlen;

  const auto& c = header.at("config");
  ModelConfig cfg;
  cfg.n_layers = c.at("n_layers");
  cfg.n_heads = c.at("n_heads");
  cfg.d_model = c.at("d_model");
  cfg.d_ff = c.at("d_ff");
  cfg.vocab_size = c.at("vocab_size");
  cfg.max_seq_len = c.at("max_seq_len");
  cfg.seed = c.at("seed");

  LoadedCheckpoint out{Model(cfg), {}};
  out.meta.seed = header.at("seed");
  out.meta.corpus_hash = header.at("corpus_hash");
  auto params = out.model.parameters();
  const auto& hp = header.at("params");
  if (hp.size() != params.size()) throw DataError("checkpoint parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (hp[k].at("name") != params[k].name || hp[k].at("shape").get<ad::Shape>() != params[k].tensor->shape()) {
      throw DataError("checkpoint parameter layout mismatch at " + params[k].name);
    }
    for (auto& v : params[k].tensor->data()) v = std::bit_cast<double>(get_le(in, pos, 8));
  }
  if (pos != in.size()) throw DataError("checkpoint has trailing bytes");
  return out;
}

}  // namespace plab::lm
