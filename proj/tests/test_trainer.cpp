#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "slrf/trainer.hpp"

using namespace slrf;
namespace fs = std::filesystem;

namespace {

// Self-cleaning workspace holding both the dataset splits and the run output.
struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name) {
    root = fs::temp_directory_path() / ("slrf_trainer_" + name);
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }

  void write_split(const std::string& split, const std::string& seq_in,
                   const std::string& seq_out, const std::string& label) const {
    fs::create_directories(root / "data" / split);
    std::ofstream(root / "data" / split / "seq.in", std::ios::binary) << seq_in;
    std::ofstream(root / "data" / split / "seq.out", std::ios::binary) << seq_out;
    std::ofstream(root / "data" / split / "label", std::ios::binary) << label;
  }
  std::string data_dir() const { return (root / "data").string(); }
  std::string out_dir(const std::string& run = "out") const { return (root / run).string(); }
};

// Eight memorable utterances with multi-token chunks and two intents.
void write_toy_corpus(const Workspace& ws) {
  std::string seq_in =
      "show flights from boston to denver\n"
      "list flights to new york city\n"
      "book a table for two\n"
      "weather in san francisco today\n"
      "flights from denver\n"
      "cheap flights from new york to boston\n"
      "reserve a table at luigi\n"
      "forecast for boston tomorrow\n";
  std::string seq_out =
      "O O O B-src O B-dst\n"
      "O O O B-dst I-dst I-dst\n"
      "O O O O B-size\n"
      "O O B-city I-city O\n"
      "O O B-src\n"
      "O O O B-src I-src O B-dst\n"
      "O O O O B-place\n"
      "O O B-city O\n";
  std::string label =
      "flight\nflight\nrestaurant\nweather\nflight\nflight\nrestaurant\nweather\n";
  ws.write_split("train", seq_in, seq_out, label);
  ws.write_split("dev", seq_in, seq_out, label);
  ws.write_split("test", seq_in, seq_out, label);
}

TrainConfig toy_config(const Workspace& ws) {
  TrainConfig cfg;
  cfg.data_dir = ws.data_dir();
  cfg.encoder.num_layers = 1;
  cfg.encoder.num_heads = 2;
  cfg.encoder.hidden = 16;
  cfg.encoder.rel_clip = 3;
  cfg.encoder.dropout = 0.0;
  cfg.batch_size = 8;
  cfg.lr = 0.01;
  cfg.seed = 7;
  return cfg;
}

// Blank the two fields that legitimately differ between identical runs:
// wall time and the output path the checkpoint landed in.
RunReport normalized(RunReport r) {
  for (auto& e : r.epochs) e.wall_seconds = 0;
  r.checkpoint_path.clear();
  return r;
}

}  // namespace

TEST_CASE("two epochs on the toy set already reduce the training loss") {
  Workspace ws("loss_drop");
  write_toy_corpus(ws);
  TrainConfig cfg = toy_config(ws);
  cfg.max_epochs = 2;
  TrainResult r = train(cfg, ws.out_dir());
  REQUIRE(r.report.epochs.size() == 2);
  CHECK(r.report.epochs[1].train_loss < r.report.epochs[0].train_loss);
  CHECK(fs::exists(r.checkpoint_path));
  CHECK(fs::exists(meta_path_for(r.checkpoint_path)));
}

TEST_CASE("two-pass training memorizes the toy set completely") {
  Workspace ws("memorize");
  write_toy_corpus(ws);
  TrainConfig cfg = toy_config(ws);
  cfg.mode = RunMode::two_pass;
  cfg.max_epochs = 200;
  TrainResult r = train(cfg, ws.out_dir());
  CHECK(r.report.best_dev.sentence_accuracy == 1.0);

  // and the saved model reproduces it from disk, on the train split too
  MetricsReport again =
      evaluate_checkpoint(r.checkpoint_path, ws.data_dir(), "train", RunMode::two_pass);
  CHECK(again.sentence_accuracy == 1.0);
  CHECK(again.slot_f1 == 1.0);
}

TEST_CASE("reloading the selected checkpoint reproduces the stored dev metrics exactly") {
  Workspace ws("bookkeeping");
  write_toy_corpus(ws);
  TrainConfig cfg = toy_config(ws);
  cfg.max_epochs = 5;
  TrainResult r = train(cfg, ws.out_dir());

  MetricsReport dev = evaluate_checkpoint(r.checkpoint_path, ws.data_dir(), "dev", cfg.mode);
  CHECK(dev.slot_precision == r.report.best_dev.slot_precision);
  CHECK(dev.slot_recall == r.report.best_dev.slot_recall);
  CHECK(dev.slot_f1 == r.report.best_dev.slot_f1);
  CHECK(dev.intent_accuracy == r.report.best_dev.intent_accuracy);
  CHECK(dev.sentence_accuracy == r.report.best_dev.sentence_accuracy);
  CHECK(dev.uncoordinated_count == r.report.best_dev.uncoordinated_count);
  CHECK(dev.gold_chunks == r.report.best_dev.gold_chunks);
  CHECK(dev.pred_chunks == r.report.best_dev.pred_chunks);
  CHECK(dev.correct_chunks == r.report.best_dev.correct_chunks);
}

TEST_CASE("the selected epoch is never beaten by any logged epoch") {
  Workspace ws("selection");
  write_toy_corpus(ws);
  TrainConfig cfg = toy_config(ws);
  cfg.max_epochs = 6;
  TrainResult r = train(cfg, ws.out_dir());
  REQUIRE(r.report.best_epoch >= 1);
  double best = r.report.best_dev.sentence_accuracy;
  for (const EpochLog& e : r.report.epochs) CHECK(best >= e.dev.sentence_accuracy);
  CHECK(r.report.epochs[static_cast<size_t>(r.report.best_epoch - 1)].dev.sentence_accuracy ==
        best);
}

TEST_CASE("the same seed reproduces the run bit for bit") {
  Workspace ws("determinism");
  write_toy_corpus(ws);
  TrainConfig cfg = toy_config(ws);
  cfg.max_epochs = 3;
  cfg.encoder.dropout = 0.1;  // the dropout stream must be seeded too
  TrainResult a = train(cfg, ws.out_dir("run_a"));
  TrainResult b = train(cfg, ws.out_dir("run_b"));

  // wall time is the one legitimately nondeterministic field
  CHECK(run_report_json(normalized(a.report)) == run_report_json(normalized(b.report)));
  CHECK(uncoordinated_curve_csv(a.report) == uncoordinated_curve_csv(b.report));

  std::ifstream fa(a.checkpoint_path, std::ios::binary);
  std::ifstream fb(b.checkpoint_path, std::ios::binary);
  std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ca == cb);

  TrainConfig other = cfg;
  other.seed = 8;
  TrainResult c = train(other, ws.out_dir("run_c"));
  CHECK(run_report_json(normalized(a.report)) != run_report_json(normalized(c.report)));
}

TEST_CASE("an exploding learning rate aborts with the epoch number") {
  Workspace ws("divergence");
  write_toy_corpus(ws);
  TrainConfig cfg = toy_config(ws);
  cfg.lr = 1e18;
  cfg.max_epochs = 4;
  cfg.batch_size = 4;
  CHECK_THROWS_WITH_AS(train(cfg, ws.out_dir()), doctest::Contains("epoch"),
                       std::runtime_error);
}

TEST_CASE("the curve file carries one mode,epoch,count row per epoch") {
  Workspace ws("curve");
  write_toy_corpus(ws);
  TrainConfig cfg = toy_config(ws);
  cfg.max_epochs = 4;
  TrainResult r = train(cfg, ws.out_dir());

  std::ifstream in(fs::path(ws.out_dir()) / "curve.csv");
  REQUIRE(in.good());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream ls(line);
    std::string mode, epoch, count;
    REQUIRE(std::getline(ls, mode, ','));
    REQUIRE(std::getline(ls, epoch, ','));
    REQUIRE(std::getline(ls, count, ','));
    CHECK(mode == mode_name(cfg.mode));
    CHECK(std::stoi(epoch) == rows);
    CHECK(std::stoll(count) >= 0);
  }
  CHECK(rows == 4);
}

TEST_CASE("the run report is valid json echoing the resolved config") {
  Workspace ws("report");
  write_toy_corpus(ws);
  TrainConfig cfg = toy_config(ws);
  cfg.max_epochs = 2;
  cfg.mode = RunMode::one_pass;
  TrainResult r = train(cfg, ws.out_dir());

  std::ifstream in(fs::path(ws.out_dir()) / "run_report.json");
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  CHECK(j.at("config").at("mode") == "one_pass");
  CHECK(j.at("config").at("seed") == cfg.seed);
  CHECK(j.at("config").at("hidden") == 16);
  CHECK(j.at("config").at("data_dir") == cfg.data_dir);
  CHECK(j.at("epochs").size() == 2);
  CHECK(j.at("best").at("epoch").get<int>() >= 1);
  CHECK(j.at("epochs")[0].at("dev").contains("sentence_accuracy"));
  CHECK(j.at("checkpoint") == r.checkpoint_path);
}

TEST_CASE("all three modes train and leave loadable checkpoints") {
  Workspace ws("modes");
  write_toy_corpus(ws);
  for (RunMode m : {RunMode::one_pass, RunMode::two_pass, RunMode::one_pass_crf}) {
    TrainConfig cfg = toy_config(ws);
    cfg.mode = m;
    cfg.max_epochs = 2;
    TrainResult r = train(cfg, ws.out_dir(std::string("out_") + mode_name(m)));
    for (const EpochLog& e : r.report.epochs) CHECK(std::isfinite(e.train_loss));
    ParamStore<float> loaded = load_checkpoint(r.checkpoint_path);
    CheckpointMeta meta = load_meta(r.checkpoint_path);
    CHECK(meta.mode == m);
    validate_params(loaded, meta.config, m);
    CHECK(loaded.has("crf.trans") == (m == RunMode::one_pass_crf));
  }
}

TEST_CASE("evaluation rejects unknown splits and modes the weights cannot serve") {
  Workspace ws("eval_errors");
  write_toy_corpus(ws);
  TrainConfig cfg = toy_config(ws);
  cfg.max_epochs = 1;
  TrainResult r = train(cfg, ws.out_dir());

  CHECK_THROWS_WITH_AS(
      evaluate_checkpoint(r.checkpoint_path, ws.data_dir(), "validation", cfg.mode),
      doctest::Contains("unknown split"), std::invalid_argument);
  // greedy decode of the two-pass model is fine; CRF decode lacks its matrix
  MetricsReport greedy =
      evaluate_checkpoint(r.checkpoint_path, ws.data_dir(), "dev", RunMode::one_pass);
  CHECK(greedy.utterances == 8);
  CHECK_THROWS_WITH_AS(
      evaluate_checkpoint(r.checkpoint_path, ws.data_dir(), "dev", RunMode::one_pass_crf),
      doctest::Contains("crf.trans"), std::runtime_error);
}
