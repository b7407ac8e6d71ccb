#include "slrf/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace slrf {

namespace {

constexpr char kMagic[5] = {'S', 'L', 'R', 'F', '1'};

void put_u32(std::ostream& out, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<uint32_t>(f)); }

// Readers throw on short files so a truncated record can never pass silently.
uint32_t take_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("truncated checkpoint: " + path);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

float take_f32(std::istream& in, const std::string& path) {
  return std::bit_cast<float>(take_u32(in, path));
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  for (const auto& e : params.entries()) {
    put_u32(out, static_cast<uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(out, static_cast<uint32_t>(e.value.shape.size()));
    for (int64_t d : e.value.shape) put_u32(out, static_cast<uint32_t>(d));
    for (float f : e.value.v) put_f32(out, f);
  }
  if (!out) throw std::runtime_error("write failed on checkpoint: " + path);
}

ParamStore<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint (bad magic): " + path);

  ParamStore<float> store;
  while (in.peek() != std::char_traits<char>::eof()) {
    uint32_t name_len = take_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw std::runtime_error("truncated checkpoint: " + path);
    uint32_t rank = take_u32(in, path);
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) d = take_u32(in, path);
    Tensor<float> t(shape);
    for (auto& f : t.v) f = take_f32(in, path);
    if (store.has(name))
      throw std::runtime_error("checkpoint repeats parameter '" + name + "': " + path);
    store.add(name, std::move(t));
  }
  return store;
}

std::string meta_path_for(const std::string& checkpoint_path) {
  return checkpoint_path + ".meta.json";
}

void save_meta(const std::string& checkpoint_path, const CheckpointMeta& meta) {
  meta.config.validate();
  nlohmann::json j;
  j["mode"] = mode_name(meta.mode);
  auto& c = j["config"];
  c["num_layers"] = meta.config.num_layers;
  c["num_heads"] = meta.config.num_heads;
  c["hidden"] = meta.config.hidden;
  c["feed_forward"] = meta.config.feed_forward;
  c["rel_clip"] = meta.config.rel_clip;
  c["dropout"] = meta.config.dropout;
  c["rel_values"] = meta.config.rel_values;
  c["max_len"] = meta.config.max_len;
  c["token_vocab"] = meta.config.token_vocab;
  c["tag_vocab"] = meta.config.tag_vocab;
  c["intent_vocab"] = meta.config.intent_vocab;
  auto& v = j["vocab"];
  v["tokens"] = nlohmann::json::array();
  for (int32_t i = 0; i < meta.vocab.token_count(); ++i) v["tokens"].push_back(meta.vocab.token_surface(i));
  v["tags"] = nlohmann::json::array();
  for (int32_t i = 0; i < meta.vocab.tag_count(); ++i) v["tags"].push_back(meta.vocab.tag_surface(i));
  v["intents"] = nlohmann::json::array();
  for (int32_t i = 0; i < meta.vocab.intent_count(); ++i) v["intents"].push_back(meta.vocab.intent_surface(i));

  std::string path = meta_path_for(checkpoint_path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint metadata: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed on checkpoint metadata: " + path);
}

CheckpointMeta load_meta(const std::string& checkpoint_path) {
  std::string path = meta_path_for(checkpoint_path);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint metadata: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint metadata " + path + ": " + e.what());
  }

  CheckpointMeta meta;
  try {
    meta.mode = parse_mode(j.at("mode").get<std::string>());
    const auto& c = j.at("config");
    meta.config.num_layers = c.at("num_layers").get<int32_t>();
    meta.config.num_heads = c.at("num_heads").get<int32_t>();
    meta.config.hidden = c.at("hidden").get<int32_t>();
    meta.config.feed_forward = c.at("feed_forward").get<int32_t>();
    meta.config.rel_clip = c.at("rel_clip").get<int32_t>();
    meta.config.dropout = c.at("dropout").get<double>();
    meta.config.rel_values = c.at("rel_values").get<bool>();
    meta.config.max_len = c.at("max_len").get<int32_t>();
    meta.config.token_vocab = c.at("token_vocab").get<int32_t>();
    meta.config.tag_vocab = c.at("tag_vocab").get<int32_t>();
    meta.config.intent_vocab = c.at("intent_vocab").get<int32_t>();

    const auto& v = j.at("vocab");
    auto tokens = v.at("tokens").get<std::vector<std::string>>();
    auto tags = v.at("tags").get<std::vector<std::string>>();
    auto intents = v.at("intents").get<std::vector<std::string>>();
    // a fresh Vocab pre-seeds the special tokens and the O tag; the stored
    // lists must open with exactly those or the ids would shift
    if (tokens.size() < 3 || tokens[0] != meta.vocab.token_surface(0) ||
        tokens[1] != meta.vocab.token_surface(1) || tokens[2] != meta.vocab.token_surface(2))
      throw std::runtime_error("checkpoint metadata " + path +
                               ": token list does not start with the reserved entries");
    if (tags.empty() || tags[0] != "O")
      throw std::runtime_error("checkpoint metadata " + path + ": tag list does not start with O");
    for (size_t i = 3; i < tokens.size(); ++i) meta.vocab.add_token(tokens[i]);
    for (size_t i = 1; i < tags.size(); ++i) meta.vocab.add_tag(tags[i]);
    for (const auto& s : intents) meta.vocab.add_intent(s);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint metadata " + path + ": " + e.what());
  }

  meta.config.validate();
  if (meta.vocab.token_count() != meta.config.token_vocab ||
      meta.vocab.tag_count() != meta.config.tag_vocab ||
      meta.vocab.intent_count() != meta.config.intent_vocab) {
    std::ostringstream msg;
    msg << "checkpoint metadata " << path << " is inconsistent: vocabulary sizes "
        << meta.vocab.token_count() << "/" << meta.vocab.tag_count() << "/"
        << meta.vocab.intent_count() << " vs config " << meta.config.token_vocab << "/"
        << meta.config.tag_vocab << "/" << meta.config.intent_vocab;
    throw std::runtime_error(msg.str());
  }
  return meta;
}

void validate_params(const ParamStore<float>& params, const EncoderConfig& cfg, RunMode mode) {
  auto expected = param_shapes(cfg);
  // greedy and two-pass decode just ignore a transition matrix, so a
  // CRF-trained checkpoint stays usable in every mode; only CRF decode
  // insists on having one
  if (mode == RunMode::one_pass_crf || params.has("crf.trans"))
    expected.emplace_back("crf.trans",
                          std::vector<int64_t>{cfg.tag_vocab + 2, cfg.tag_vocab + 2});
  std::unordered_set<std::string> known;
  for (const auto& [name, shape] : expected) {
    known.insert(name);
    if (!params.has(name))
      throw std::runtime_error("checkpoint is missing parameter '" + name + "'");
    if (params.param(name).shape != shape) {
      std::ostringstream msg;
      msg << "checkpoint parameter '" << name << "' has shape [";
      const auto& got = params.param(name).shape;
      for (size_t i = 0; i < got.size(); ++i) msg << (i ? " " : "") << got[i];
      msg << "], config expects [";
      for (size_t i = 0; i < shape.size(); ++i) msg << (i ? " " : "") << shape[i];
      msg << "]";
      throw std::runtime_error(msg.str());
    }
  }
  for (const auto& e : params.entries())
    if (!known.count(e.name))
      throw std::runtime_error("checkpoint carries unexpected parameter '" + e.name + "'");
}

}  // namespace slrf
