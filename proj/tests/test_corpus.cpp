#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "slrf/corpus.hpp"

using namespace slrf;
namespace fs = std::filesystem;

namespace {

// Scratch split directory, removed on destruction.
struct SplitDir {
  fs::path root;
  explicit SplitDir(const std::string& name) {
    root = fs::temp_directory_path() / ("slrf_corpus_" + name);
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~SplitDir() { fs::remove_all(root); }

  void write(const std::string& split, const std::string& seq_in, const std::string& seq_out,
             const std::string& label) const {
    fs::create_directories(root / split);
    std::ofstream(root / split / "seq.in", std::ios::binary) << seq_in;
    std::ofstream(root / split / "seq.out", std::ios::binary) << seq_out;
    std::ofstream(root / split / "label", std::ios::binary) << label;
  }
  std::string dir() const { return root.string(); }
};

Utterance utt(std::vector<std::string> tokens, std::vector<std::string> tags, std::string intent,
              int64_t id = 0) {
  Utterance u;
  u.tokens = std::move(tokens);
  u.slot_tags = std::move(tags);
  u.intent = std::move(intent);
  u.id = id;
  return u;
}

}  // namespace

TEST_CASE("load_split reads the three-file format") {
  SplitDir d("basic");
  d.write("train", "play mumford\n", "O B-artist\n", "PlayMusic\n");
  auto data = load_split(d.dir(), "train");
  REQUIRE(data.size() == 1);
  CHECK(data[0].tokens == std::vector<std::string>{"play", "mumford"});
  CHECK(data[0].slot_tags == std::vector<std::string>{"O", "B-artist"});
  CHECK(data[0].intent == "PlayMusic");
  CHECK(data[0].id == 0);
}

TEST_CASE("load_split lowercases tokens but not labels") {
  SplitDir d("case");
  d.write("train", "Play MUMford\n", "O B-artist\n", "PlayMusic\n");
  auto data = load_split(d.dir(), "train");
  CHECK(data[0].tokens == std::vector<std::string>{"play", "mumford"});
  CHECK(data[0].intent == "PlayMusic");
}

TEST_CASE("load_split accepts empty files and CRLF endings") {
  SplitDir d("crlf");
  d.write("test", "", "", "");
  CHECK(load_split(d.dir(), "test").empty());
  d.write("train", "a b\r\nc\r\n", "O O\r\nB-x\r\n", "i1\r\ni2\r\n");
  auto data = load_split(d.dir(), "train");
  REQUIRE(data.size() == 2);
  CHECK(data[0].tokens == std::vector<std::string>{"a", "b"});
  CHECK(data[1].slot_tags == std::vector<std::string>{"B-x"});
  CHECK(data[1].id == 1);
}

TEST_CASE("load_split errors name the offending place") {
  SplitDir d("errs");
  d.write("train", "a b\n", "O\n", "i\n");
  try {
    load_split(d.dir(), "train");
    FAIL("expected arity error");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("line 1") != std::string::npos);
    CHECK(msg.find("2 tokens") != std::string::npos);
  }

  d.write("dev", "a\nb\n", "O\nO\n", "i\n");
  try {
    load_split(d.dir(), "dev");
    FAIL("expected line-count error");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("label") != std::string::npos);
    CHECK(msg.find("seq.in") != std::string::npos);
  }

  d.write("test", "a\n", "Z-x\n", "i\n");
  CHECK_THROWS_AS(load_split(d.dir(), "test"), std::invalid_argument);

  SplitDir missing("missing");
  CHECK_THROWS_AS(load_split(missing.dir(), "train"), std::runtime_error);
}

TEST_CASE("load_split accepts valid/ as the dev directory name") {
  SplitDir d("valid_alias");
  d.write("valid", "a\n", "O\n", "i\n");
  auto data = load_split(d.dir(), "dev");
  REQUIRE(data.size() == 1);
  CHECK(data[0].tokens == std::vector<std::string>{"a"});
}

TEST_CASE("vocab reserves pad, unk, cls and always holds O") {
  Vocab v;
  CHECK(Vocab::kPad == 0);
  CHECK(Vocab::kUnk == 1);
  CHECK(Vocab::kCls == 2);
  CHECK(v.token_count() == 3);
  CHECK(v.tag_count() == 1);
  CHECK(v.tag_surface(v.o_tag_id()) == "O");
}

TEST_CASE("build_vocab first-seen order and B=>I closure") {
  std::vector<Utterance> train = {
      utt({"show", "flights"}, {"O", "O"}, "list", 0),
      utt({"to", "boston"}, {"O", "B-city"}, "list", 1),
      utt({"show", "fares"}, {"O", "B-fare"}, "fares", 2),
  };
  Vocab v = build_vocab(train);
  CHECK(v.token_id("show") == 3);  // first new token after the specials
  CHECK(v.token_id("flights") == 4);
  CHECK(v.token_id("to") == 5);
  CHECK(v.token_id("boston") == 6);
  CHECK(v.token_id("fares") == 7);
  // closure allocates the I- twin of every seen B- tag
  CHECK(v.has_tag("I-city"));
  CHECK(v.has_tag("I-fare"));
  CHECK(v.tag_id("O") == v.o_tag_id());
  CHECK(v.intent_count() == 2);
  CHECK(v.intent_id("list") == 0);
  CHECK(v.intent_id("fares") == 1);

  // idempotence: duplicated utterances change nothing
  auto doubled = train;
  doubled.insert(doubled.end(), train.begin(), train.end());
  Vocab v2 = build_vocab(doubled);
  CHECK(v2.token_count() == v.token_count());
  CHECK(v2.tag_count() == v.tag_count());
  CHECK(v2.intent_count() == v.intent_count());

  CHECK_THROWS_AS(build_vocab({}), std::invalid_argument);
}

TEST_CASE("unseen words encode to UNK; unseen labels have no id") {
  Vocab v = build_vocab({utt({"play"}, {"O"}, "music")});
  auto ids = encode_tokens(v, {"play", "zanzibar"});
  CHECK(ids == std::vector<int32_t>{v.token_id("play"), Vocab::kUnk});
  CHECK_THROWS_AS(v.tag_id("B-nope"), std::out_of_range);
  CHECK_THROWS_AS(v.intent_id("nope"), std::out_of_range);
  CHECK(v.tag_id_or("B-nope", -1) == -1);
  CHECK(v.intent_id_or("nope", -1) == -1);
}

TEST_CASE("vocab dump is id-tab-surface") {
  Vocab v = build_vocab({utt({"hi"}, {"B-x"}, "greet")});
  CHECK(v.dump_tokens().substr(0, 17) == "0\t<pad>\n1\t<unk>\n2");
  CHECK(v.dump_tags() == "0\tO\n1\tB-x\n2\tI-x\n");
  CHECK(v.dump_intents() == "0\tgreet\n");
}

TEST_CASE("make_batches shapes, CLS column, and padding") {
  std::vector<Utterance> data;
  for (int i = 0; i < 65; ++i)
    data.push_back(utt({"w"}, {"O"}, "i", i));
  Vocab v = build_vocab(data);
  auto batches = make_batches(data, v, 32, std::nullopt);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size == 32);
  CHECK(batches[1].size == 32);
  CHECK(batches[2].size == 1);

  // single 3-token utterance: width is CLS + 3
  auto one = make_batches({utt({"a", "b", "c"}, {"O", "O", "B-x"}, "i")},
                          build_vocab({utt({"a", "b", "c"}, {"O", "O", "B-x"}, "i")}), 4,
                          std::nullopt);
  REQUIRE(one.size() == 1);
  CHECK(one[0].width == 4);
  CHECK(one[0].token_ids.size() == 4);
  CHECK(one[0].token_ids[0] == Vocab::kCls);
  CHECK(one[0].lengths == std::vector<int32_t>{3});
}

TEST_CASE("make_batches pads to the batch max and masks padding") {
  std::vector<Utterance> data = {utt({"a"}, {"O"}, "i", 0),
                                 utt({"a", "b", "c"}, {"O", "O", "O"}, "i", 1)};
  Vocab v = build_vocab(data);
  auto batches = make_batches(data, v, 2, std::nullopt);
  REQUIRE(batches.size() == 1);
  const Batch& b = batches[0];
  CHECK(b.width == 4);
  // row 0 is the short utterance: CLS + 1 token + 2 pads
  CHECK(b.mask[0] == 1);
  CHECK(b.mask[1] == 1);
  CHECK(b.mask[2] == 0);
  CHECK(b.mask[3] == 0);
  CHECK(b.token_ids[2] == Vocab::kPad);
  CHECK(b.token_ids[3] == Vocab::kPad);
  CHECK(b.gold_tag_ids[1] == -1);  // padded gold positions carry no supervision
  CHECK(b.gold_tag_ids[2] == -1);
  // every real position's tag input starts as O
  for (int i = 0; i < 4; ++i)
    if (b.mask[static_cast<size_t>(i)]) CHECK(b.tag_input_ids[static_cast<size_t>(i)] == v.o_tag_id());
  // mask row has exactly length+1 true entries
  int row1_true = 0;
  for (int i = 0; i < 4; ++i) row1_true += b.mask[4 + static_cast<size_t>(i)];
  CHECK(row1_true == b.lengths[1] + 1);
}

TEST_CASE("make_batches decode round trip for in-vocabulary words") {
  std::vector<Utterance> data = {utt({"red", "green", "blue"}, {"O", "O", "O"}, "i", 0)};
  Vocab v = build_vocab(data);
  auto b = make_batches(data, v, 1, std::nullopt)[0];
  std::vector<std::string> back;
  for (int i = 1; i <= b.lengths[0]; ++i)
    back.push_back(v.token_surface(b.token_ids[static_cast<size_t>(i)]));
  CHECK(back == data[0].tokens);
}

TEST_CASE("make_batches shuffling is seed-deterministic") {
  std::vector<Utterance> data;
  for (int i = 0; i < 40; ++i) data.push_back(utt({"w" + std::to_string(i)}, {"O"}, "i", i));
  Vocab v = build_vocab(data);
  auto a = make_batches(data, v, 8, 7u);
  auto b = make_batches(data, v, 8, 7u);
  auto c = make_batches(data, v, 8, 8u);
  REQUIRE(a.size() == b.size());
  bool same_order = true, differs_somewhere = false;
  for (size_t i = 0; i < a.size(); ++i) {
    same_order = same_order && a[i].utterance_ids == b[i].utterance_ids;
    differs_somewhere = differs_somewhere || a[i].utterance_ids != c[i].utterance_ids;
  }
  CHECK(same_order);
  CHECK(differs_somewhere);  // a different seed actually moves something
  // no seed keeps corpus order
  auto plain = make_batches(data, v, 8, std::nullopt);
  CHECK(plain[0].utterance_ids == std::vector<int64_t>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK_THROWS_AS(make_batches(data, v, 0, std::nullopt), std::invalid_argument);
}

TEST_CASE("gold labels unseen in training carry no supervision") {
  Vocab v = build_vocab({utt({"a"}, {"B-x"}, "known")});
  auto batches = make_batches({utt({"a"}, {"B-zzz"}, "unknown", 0)}, v, 1, std::nullopt);
  CHECK(batches[0].gold_tag_ids[0] == -1);
  CHECK(batches[0].gold_intent_ids[0] == -1);
}
