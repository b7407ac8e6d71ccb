#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "slrf/checkpoint.hpp"

using namespace slrf;

namespace {

// Temp file that cleans up after itself.
struct TmpPath {
  std::string path;
  explicit TmpPath(const std::string& name) : path("/tmp/slrf_ckpt_test_" + name) {}
  ~TmpPath() {
    std::remove(path.c_str());
    std::remove(meta_path_for(path).c_str());
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void append_u32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void append_f32(std::string& s, float f) { append_u32(s, std::bit_cast<uint32_t>(f)); }

Vocab toy_vocab() {
  Vocab v;
  v.add_token("red");
  v.add_token("blue");
  v.add_tag("B-color");
  v.add_tag("I-color");
  v.add_intent("paint");
  return v;
}

EncoderConfig toy_config(const Vocab& v) {
  EncoderConfig cfg;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.hidden = 8;
  cfg.rel_clip = 2;
  cfg.token_vocab = v.token_count();
  cfg.tag_vocab = v.tag_count();
  cfg.intent_vocab = v.intent_count();
  return cfg;
}

}  // namespace

TEST_CASE("checkpoint file bytes follow the container layout exactly") {
  ParamStore<float> store;
  Tensor<float> w({2, 3});
  for (int i = 0; i < 6; ++i) w.v[static_cast<size_t>(i)] = static_cast<float>(i);
  store.add("w", w);
  TmpPath tmp("layout.slrf");
  save_checkpoint(tmp.path, store);

  // the expected byte stream, assembled by hand from the documented layout
  std::string want = "SLRF1";
  append_u32(want, 1);  // name length
  want += "w";
  append_u32(want, 2);  // rank
  append_u32(want, 2);
  append_u32(want, 3);
  for (int i = 0; i < 6; ++i) append_f32(want, static_cast<float>(i));
  CHECK(slurp(tmp.path) == want);
}

TEST_CASE("checkpoint round trip preserves every bit and the entry order") {
  ParamStore<float> store;
  Rng rng(31);
  Tensor<float> a({3, 4});
  for (auto& x : a.v) x = static_cast<float>(rng.uniform(-2.0, 2.0));
  // awkward values: signed zero, denormal, extremes of the finite range
  a.v[0] = -0.0f;
  a.v[1] = std::numeric_limits<float>::denorm_min();
  a.v[2] = std::numeric_limits<float>::max();
  a.v[3] = std::numeric_limits<float>::lowest();
  store.add("deep.weight", a);
  Tensor<float> b({5});
  for (auto& x : b.v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  store.add("bias", b);

  TmpPath tmp("roundtrip.slrf");
  save_checkpoint(tmp.path, store);
  ParamStore<float> got = load_checkpoint(tmp.path);

  REQUIRE(got.entries().size() == store.entries().size());
  for (size_t i = 0; i < store.entries().size(); ++i) {
    const auto& x = store.entries()[i];
    const auto& y = got.entries()[i];
    CHECK(y.name == x.name);
    CHECK(y.value.shape == x.value.shape);
    REQUIRE(y.value.v.size() == x.value.v.size());
    for (size_t k = 0; k < x.value.v.size(); ++k)
      CHECK(std::bit_cast<uint32_t>(y.value.v[k]) == std::bit_cast<uint32_t>(x.value.v[k]));
  }

  // saving the loaded store reproduces the identical file
  TmpPath tmp2("roundtrip2.slrf");
  save_checkpoint(tmp2.path, got);
  CHECK(slurp(tmp2.path) == slurp(tmp.path));
}

TEST_CASE("checkpoint loader rejects damage instead of guessing") {
  CHECK_THROWS_AS(load_checkpoint("/tmp/slrf_ckpt_test_does_not_exist.slrf"),
                  std::runtime_error);

  ParamStore<float> store;
  store.add("w", Tensor<float>::full({2, 2}, 1.5f));
  TmpPath tmp("damage.slrf");
  save_checkpoint(tmp.path, store);
  std::string good = slurp(tmp.path);

  TmpPath bad("damaged.slrf");
  // wrong magic
  {
    std::string s = good;
    s[4] = '2';
    std::ofstream(bad.path, std::ios::binary) << s;
    CHECK_THROWS_WITH_AS(load_checkpoint(bad.path), doctest::Contains("bad magic"),
                         std::runtime_error);
  }
  // every truncation point; cutting back to exactly the magic leaves a
  // well-formed zero-record file, which only weight validation can reject
  for (size_t keep = 0; keep < good.size(); ++keep) {
    std::ofstream(bad.path, std::ios::binary | std::ios::trunc) << good.substr(0, keep);
    if (keep == 5) {
      CHECK(load_checkpoint(bad.path).entries().empty());
    } else {
      CHECK_THROWS_AS(load_checkpoint(bad.path), std::runtime_error);
    }
  }
  // the same record twice
  {
    std::string s = good + good.substr(5);
    std::ofstream(bad.path, std::ios::binary | std::ios::trunc) << s;
    CHECK_THROWS_WITH_AS(load_checkpoint(bad.path), doctest::Contains("repeats"),
                         std::runtime_error);
  }
}

TEST_CASE("metadata sidecar restores config, mode, and vocabulary") {
  Vocab v = toy_vocab();
  CheckpointMeta meta;
  meta.config = toy_config(v);
  meta.mode = RunMode::one_pass_crf;
  meta.vocab = v;

  TmpPath tmp("meta.slrf");
  save_meta(tmp.path, meta);
  CheckpointMeta got = load_meta(tmp.path);

  CHECK(got.mode == RunMode::one_pass_crf);
  CHECK(got.config.num_layers == meta.config.num_layers);
  CHECK(got.config.num_heads == meta.config.num_heads);
  CHECK(got.config.hidden == meta.config.hidden);
  CHECK(got.config.feed_forward == meta.config.feed_forward);
  CHECK(got.config.rel_clip == meta.config.rel_clip);
  CHECK(got.config.dropout == meta.config.dropout);
  CHECK(got.config.rel_values == meta.config.rel_values);
  CHECK(got.config.max_len == meta.config.max_len);
  CHECK(got.vocab.token_count() == v.token_count());
  CHECK(got.vocab.tag_count() == v.tag_count());
  CHECK(got.vocab.intent_count() == v.intent_count());
  for (int32_t i = 0; i < v.token_count(); ++i)
    CHECK(got.vocab.token_surface(i) == v.token_surface(i));
  for (int32_t i = 0; i < v.tag_count(); ++i) CHECK(got.vocab.tag_surface(i) == v.tag_surface(i));
  for (int32_t i = 0; i < v.intent_count(); ++i)
    CHECK(got.vocab.intent_surface(i) == v.intent_surface(i));
  CHECK(got.vocab.o_tag_id() == v.o_tag_id());
}

TEST_CASE("metadata loader names what is wrong") {
  TmpPath tmp("badmeta.slrf");
  std::ofstream(meta_path_for(tmp.path)) << "{ not json";
  CHECK_THROWS_WITH_AS(load_meta(tmp.path), doctest::Contains("malformed"), std::runtime_error);

  std::ofstream(meta_path_for(tmp.path), std::ios::trunc) << "{\"mode\":\"one_pass\"}";
  CHECK_THROWS_AS(load_meta(tmp.path), std::runtime_error);

  CHECK_THROWS_AS(load_meta("/tmp/slrf_ckpt_test_no_meta.slrf"), std::runtime_error);

  // config sizes that contradict the stored vocabulary
  Vocab v = toy_vocab();
  CheckpointMeta meta;
  meta.config = toy_config(v);
  meta.config.tag_vocab += 1;
  meta.vocab = v;
  save_meta(tmp.path, meta);
  CHECK_THROWS_WITH_AS(load_meta(tmp.path), doctest::Contains("inconsistent"),
                       std::runtime_error);
}

TEST_CASE("weight validation matches the config's parameter inventory") {
  Vocab v = toy_vocab();
  EncoderConfig cfg = toy_config(v);
  ParamStore<float> store = init_params<float>(cfg, 5);
  validate_params(store, cfg, RunMode::one_pass);
  validate_params(store, cfg, RunMode::two_pass);
  CHECK_THROWS_WITH_AS(validate_params(store, cfg, RunMode::one_pass_crf),
                       doctest::Contains("crf.trans"), std::runtime_error);

  ensure_crf_params(store, cfg);
  validate_params(store, cfg, RunMode::one_pass_crf);
  // the transition matrix rides along harmlessly in the other modes
  validate_params(store, cfg, RunMode::one_pass);

  ParamStore<float> extra = init_params<float>(cfg, 5);
  extra.add("stowaway", Tensor<float>::zeros({1}));
  CHECK_THROWS_WITH_AS(validate_params(extra, cfg, RunMode::one_pass),
                       doctest::Contains("stowaway"), std::runtime_error);

  ParamStore<float> base = init_params<float>(cfg, 5);
  ParamStore<float> wrong;
  for (const auto& e : base.entries()) {
    if (e.name == "slot.w") {
      wrong.add(e.name, Tensor<float>::zeros({1, 1}));
    } else {
      wrong.add(e.name, e.value);
    }
  }
  CHECK_THROWS_WITH_AS(validate_params(wrong, cfg, RunMode::one_pass),
                       doctest::Contains("slot.w"), std::runtime_error);

  ParamStore<float> missing;
  for (const auto& e : base.entries())
    if (e.name != "intent.b") missing.add(e.name, e.value);
  CHECK_THROWS_WITH_AS(validate_params(missing, cfg, RunMode::one_pass),
                       doctest::Contains("intent.b"), std::runtime_error);
}

TEST_CASE("a trained-then-reloaded model decodes identically") {
  Vocab v = toy_vocab();
  EncoderConfig cfg = toy_config(v);
  cfg.dropout = 0.0;
  ParamStore<float> store = init_params<float>(cfg, 77);
  std::vector<Utterance> utts = {{{"red", "blue", "red"}, {"B-color", "I-color", "O"}, "paint", 0},
                                 {{"blue"}, {"B-color"}, "paint", 1}};

  TmpPath tmp("decode.slrf");
  save_checkpoint(tmp.path, store);
  CheckpointMeta meta{cfg, RunMode::two_pass, v};
  save_meta(tmp.path, meta);

  ParamStore<float> loaded = load_checkpoint(tmp.path);
  CheckpointMeta lm = load_meta(tmp.path);
  validate_params(loaded, lm.config, lm.mode);

  auto before = decode(store, cfg, v, utts, RunMode::two_pass);
  auto after = decode(loaded, lm.config, lm.vocab, utts, lm.mode);
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(before[i].intent_id == after[i].intent_id);
    CHECK(before[i].slot_tag_ids == after[i].slot_tag_ids);
    CHECK(before[i].pass1_tag_ids == after[i].pass1_tag_ids);
  }
}
