#include "slrf/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "slrf/iob.hpp"
#include "slrf/rng.hpp"

namespace slrf {
namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string w;
  while (ss >> w) out.push_back(std::move(w));
  return out;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

int32_t add_unique(std::unordered_map<std::string, int32_t>& ids,
                   std::vector<std::string>& surfaces, const std::string& s) {
  auto it = ids.find(s);
  if (it != ids.end()) return it->second;
  int32_t id = static_cast<int32_t>(surfaces.size());
  ids.emplace(s, id);
  surfaces.push_back(s);
  return id;
}

std::string dump(const std::vector<std::string>& surfaces) {
  std::string out;
  for (size_t i = 0; i < surfaces.size(); ++i) {
    out += std::to_string(i);
    out += '\t';
    out += surfaces[i];
    out += '\n';
  }
  return out;
}

}  // namespace

Vocab::Vocab() {
  add_unique(token_ids_, token_surfaces_, "<pad>");
  add_unique(token_ids_, token_surfaces_, "<unk>");
  add_unique(token_ids_, token_surfaces_, "<cls>");
  o_tag_id_ = add_unique(tag_ids_, tag_surfaces_, "O");
}

int32_t Vocab::add_token(const std::string& s) { return add_unique(token_ids_, token_surfaces_, s); }
int32_t Vocab::add_tag(const std::string& s) { return add_unique(tag_ids_, tag_surfaces_, s); }
int32_t Vocab::add_intent(const std::string& s) {
  return add_unique(intent_ids_, intent_surfaces_, s);
}

int32_t Vocab::token_id(const std::string& s) const {
  auto it = token_ids_.find(s);
  return it == token_ids_.end() ? kUnk : it->second;
}

int32_t Vocab::tag_id(const std::string& s) const {
  auto it = tag_ids_.find(s);
  if (it == tag_ids_.end()) throw std::out_of_range("tag not in vocabulary: " + s);
  return it->second;
}

int32_t Vocab::intent_id(const std::string& s) const {
  auto it = intent_ids_.find(s);
  if (it == intent_ids_.end()) throw std::out_of_range("intent not in vocabulary: " + s);
  return it->second;
}

int32_t Vocab::tag_id_or(const std::string& s, int32_t fallback) const {
  auto it = tag_ids_.find(s);
  return it == tag_ids_.end() ? fallback : it->second;
}

int32_t Vocab::intent_id_or(const std::string& s, int32_t fallback) const {
  auto it = intent_ids_.find(s);
  return it == intent_ids_.end() ? fallback : it->second;
}

bool Vocab::has_tag(const std::string& s) const { return tag_ids_.count(s) > 0; }

const std::string& Vocab::token_surface(int32_t id) const {
  return token_surfaces_.at(static_cast<size_t>(id));
}
const std::string& Vocab::tag_surface(int32_t id) const {
  return tag_surfaces_.at(static_cast<size_t>(id));
}
const std::string& Vocab::intent_surface(int32_t id) const {
  return intent_surfaces_.at(static_cast<size_t>(id));
}

std::string Vocab::dump_tokens() const { return dump(token_surfaces_); }
std::string Vocab::dump_tags() const { return dump(tag_surfaces_); }
std::string Vocab::dump_intents() const { return dump(intent_surfaces_); }

std::vector<Utterance> load_split(const std::string& dir, const std::string& split) {
  namespace fs = std::filesystem;
  fs::path base = fs::path(dir) / split;
  if (split == "dev" && !fs::exists(base) && fs::exists(fs::path(dir) / "valid"))
    base = fs::path(dir) / "valid";
  std::string in_path = (base / "seq.in").string();
  std::string out_path = (base / "seq.out").string();
  std::string label_path = (base / "label").string();

  auto tokens_lines = read_lines(in_path);
  auto tags_lines = read_lines(out_path);
  auto intent_lines = read_lines(label_path);
  // a single trailing blank line is a newline artifact, not an utterance
  auto trim_trailing_blank = [](std::vector<std::string>& v) {
    if (!v.empty() && v.back().empty()) v.pop_back();
  };
  trim_trailing_blank(tokens_lines);
  trim_trailing_blank(tags_lines);
  trim_trailing_blank(intent_lines);

  if (tokens_lines.size() != tags_lines.size() || tokens_lines.size() != intent_lines.size())
    throw std::runtime_error("line counts differ: " + in_path + " has " +
                             std::to_string(tokens_lines.size()) + ", " + out_path + " has " +
                             std::to_string(tags_lines.size()) + ", " + label_path + " has " +
                             std::to_string(intent_lines.size()));

  std::vector<Utterance> out;
  out.reserve(tokens_lines.size());
  for (size_t i = 0; i < tokens_lines.size(); ++i) {
    Utterance u;
    u.id = static_cast<int64_t>(i);
    for (auto& w : split_ws(tokens_lines[i])) u.tokens.push_back(lower(w));
    u.slot_tags = split_ws(tags_lines[i]);
    u.intent = intent_lines[i];
    if (u.tokens.empty())
      throw std::runtime_error(in_path + " line " + std::to_string(i + 1) + ": empty utterance");
    if (u.tokens.size() != u.slot_tags.size())
      throw std::runtime_error(in_path + " line " + std::to_string(i + 1) + ": " +
                               std::to_string(u.tokens.size()) + " tokens but " +
                               std::to_string(u.slot_tags.size()) + " tags");
    if (u.intent.empty())
      throw std::runtime_error(label_path + " line " + std::to_string(i + 1) + ": empty intent");
    for (const auto& t : u.slot_tags) require_well_formed(t);
    out.push_back(std::move(u));
  }
  return out;
}

Vocab build_vocab(const std::vector<Utterance>& train) {
  if (train.empty()) throw std::invalid_argument("build_vocab: empty training split");
  Vocab v;
  for (const auto& u : train) {
    for (const auto& w : u.tokens) v.add_token(w);
    for (const auto& t : u.slot_tags) v.add_tag(t);
    v.add_intent(u.intent);
  }
  // close B-t => I-t so the refiner can always continue a begun chunk
  std::vector<std::string> need;
  for (int32_t i = 0; i < v.tag_count(); ++i) {
    const std::string& s = v.tag_surface(i);
    if (s[0] == 'B') need.push_back("I-" + s.substr(2));
  }
  for (const auto& s : need) v.add_tag(s);
  return v;
}

std::vector<int32_t> encode_tokens(const Vocab& v, const std::vector<std::string>& tokens) {
  std::vector<int32_t> out;
  out.reserve(tokens.size());
  for (const auto& w : tokens) out.push_back(v.token_id(w));
  return out;
}

std::vector<Batch> make_batches(const std::vector<Utterance>& data, const Vocab& vocab,
                                int32_t batch_size, std::optional<uint64_t> shuffle_seed) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::vector<int64_t> order(data.size());
  for (size_t i = 0; i < data.size(); ++i) order[i] = static_cast<int64_t>(i);
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(order);
  }
  std::vector<Batch> out;
  const int32_t o_id = vocab.o_tag_id();
  for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(batch_size)) {
    size_t end = std::min(order.size(), begin + static_cast<size_t>(batch_size));
    Batch b;
    b.size = static_cast<int32_t>(end - begin);
    int32_t max_len = 0;
    for (size_t k = begin; k < end; ++k)
      max_len = std::max(max_len,
                         static_cast<int32_t>(data[static_cast<size_t>(order[k])].tokens.size()));
    b.width = max_len + 1;
    b.token_ids.assign(static_cast<size_t>(b.size) * b.width, Vocab::kPad);
    b.tag_input_ids.assign(static_cast<size_t>(b.size) * b.width, o_id);
    b.gold_tag_ids.assign(static_cast<size_t>(b.size) * max_len, -1);
    b.gold_intent_ids.resize(static_cast<size_t>(b.size));
    b.mask.assign(static_cast<size_t>(b.size) * b.width, 0);
    b.lengths.resize(static_cast<size_t>(b.size));
    b.utterance_ids.resize(static_cast<size_t>(b.size));
    for (size_t k = begin; k < end; ++k) {
      const Utterance& u = data[static_cast<size_t>(order[k])];
      int32_t row = static_cast<int32_t>(k - begin);
      int32_t len = static_cast<int32_t>(u.tokens.size());
      b.lengths[static_cast<size_t>(row)] = len;
      b.utterance_ids[static_cast<size_t>(row)] = u.id;
      b.gold_intent_ids[static_cast<size_t>(row)] = vocab.intent_id_or(u.intent, -1);
      int32_t* toks = b.token_ids.data() + static_cast<size_t>(row) * b.width;
      uint8_t* mask = b.mask.data() + static_cast<size_t>(row) * b.width;
      int32_t* gold = b.gold_tag_ids.data() + static_cast<size_t>(row) * max_len;
      toks[0] = Vocab::kCls;
      mask[0] = 1;
      for (int32_t i = 0; i < len; ++i) {
        toks[1 + i] = vocab.token_id(u.tokens[static_cast<size_t>(i)]);
        mask[1 + i] = 1;
        // unlabeled utterances (inference input) simply carry no supervision
        gold[i] = static_cast<size_t>(i) < u.slot_tags.size()
                      ? vocab.tag_id_or(u.slot_tags[static_cast<size_t>(i)], -1)
                      : -1;
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace slrf
