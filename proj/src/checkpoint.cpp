#include "lvae/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "json.hpp"
#include "lvae/config.hpp"
#include "lvae/errors.hpp"

namespace lvae {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'V', 'A', 'E', 'C', 'K', 'P', 'T'};

template <class T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorCode::ShapeMismatch, "checkpoint is truncated");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

}  // namespace

void require_same_vocabulary(const Vocabulary& expected, const Vocabulary& actual) {
  if (expected.hash() != actual.hash())
    throw Error(ErrorCode::VocabHashMismatch,
                "vocabulary hash " + hex64(actual.hash()) + " does not match checkpoint " +
                    hex64(expected.hash()));
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const ModelDims& d = ckpt.model.dims();
  json meta;
  meta["method"] = to_string(ckpt.config.method);
  meta["config"] = json::parse(train_config_to_json(ckpt.config));
  meta["vocab"] = ckpt.vocab.tokens();
  meta["vocab_hash"] = hex64(ckpt.vocab.hash());
  meta["cell"] = SequenceVae::kCellType;
  meta["dims"] = {{"vocab_size", d.vocab_size}, {"d_emb", d.d_emb},
                  {"d_h", d.d_h},               {"d_z", d.d_z},
                  {"shared_embeddings", d.shared_embeddings},
                  {"use_encoder", d.use_encoder}, {"max_len", d.max_len}};
  json params = json::array();
  for (const auto& p : ckpt.model.params())
    params.push_back({{"name", p.name}, {"rows", p.rows}, {"cols", p.cols}});
  meta["params"] = params;
  meta["rng_state"] = ckpt.rng_state;
  meta["epoch"] = ckpt.epoch;
  const std::string text = meta.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, Checkpoint::kFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& p : ckpt.model.params())
    for (double v : p.value) put_le<double>(out, v);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorCode::BadMagic, "not a checkpoint file");
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != Checkpoint::kFormatVersion)
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) +
                                                ", expected " + std::to_string(Checkpoint::kFormatVersion));
  const auto meta_len = get_le<std::uint64_t>(bytes, pos);
  if (meta_len > bytes.size() - pos) throw Error(ErrorCode::ShapeMismatch, "checkpoint is truncated");
  json meta;
  try {
    meta = json::parse(bytes.substr(pos, meta_len));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ShapeMismatch, std::string("corrupt checkpoint metadata: ") + e.what());
  }
  pos += meta_len;

  Checkpoint ckpt;
  try {
    ckpt.config = train_config_from_json(meta.at("config").dump());
    ckpt.vocab = Vocabulary();
    const auto tokens = meta.at("vocab").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const TokenId id = ckpt.vocab.add(tokens[i]);
      if (static_cast<std::size_t>(id) != i)
        throw Error(ErrorCode::ShapeMismatch, "checkpoint vocabulary is not in id order");
    }
    if (meta.at("vocab_hash").get<std::string>() != hex64(ckpt.vocab.hash()))
      throw Error(ErrorCode::VocabHashMismatch, "checkpoint vocabulary does not match its hash");
    if (meta.at("cell").get<std::string>() != SequenceVae::kCellType)
      throw Error(ErrorCode::ShapeMismatch, "unsupported cell type");
    const auto& jd = meta.at("dims");
    ModelDims dims;
    dims.vocab_size = jd.at("vocab_size").get<int>();
    dims.d_emb = jd.at("d_emb").get<int>();
    dims.d_h = jd.at("d_h").get<int>();
    dims.d_z = jd.at("d_z").get<int>();
    dims.shared_embeddings = jd.at("shared_embeddings").get<bool>();
    dims.use_encoder = jd.at("use_encoder").get<bool>();
    dims.max_len = jd.at("max_len").get<int>();
    if (static_cast<std::size_t>(dims.vocab_size) != ckpt.vocab.size())
      throw Error(ErrorCode::ShapeMismatch, "model vocabulary size differs from the stored vocabulary");
    Rng init(0);
    ckpt.model = SequenceVae(dims, init);
    const auto& jp = meta.at("params");
    auto& params = ckpt.model.params();
    if (jp.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "parameter count differs");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[static_cast<int>(i)];
      if (jp[i].at("name").get<std::string>() != p.name || jp[i].at("rows").get<int>() != p.rows ||
          jp[i].at("cols").get<int>() != p.cols)
        throw Error(ErrorCode::ShapeMismatch, "parameter '" + p.name + "' has a different shape");
    }
    ckpt.rng_state = meta.at("rng_state").get<std::string>();
    ckpt.epoch = meta.at("epoch").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ShapeMismatch, std::string("incomplete checkpoint metadata: ") + e.what());
  }

  const std::size_t expected = ckpt.model.params().total_size() * sizeof(double);
  if (bytes.size() - pos != expected)
    throw Error(ErrorCode::ShapeMismatch, "checkpoint payload has " + std::to_string(bytes.size() - pos) +
                                              " bytes, expected " + std::to_string(expected));
  for (auto& p : ckpt.model.params())
    for (double& v : p.value) v = get_le<double>(bytes, pos);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_text_file(path));
}

}  // namespace lvae
