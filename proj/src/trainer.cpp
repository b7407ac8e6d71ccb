#include "slrf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace slrf {

namespace {

double selection_value(const MetricsReport& m, const std::string& selection) {
  if (selection == "sentence_accuracy") return m.sentence_accuracy;
  if (selection == "slot_f1") return m.slot_f1;
  if (selection == "intent_accuracy") return m.intent_accuracy;
  throw std::invalid_argument("unknown selection metric '" + selection + "'");
}

nlohmann::json metrics_obj(const MetricsReport& m) {
  return nlohmann::json{{"slot_precision", m.slot_precision},
                        {"slot_recall", m.slot_recall},
                        {"slot_f1", m.slot_f1},
                        {"intent_accuracy", m.intent_accuracy},
                        {"sentence_accuracy", m.sentence_accuracy},
                        {"uncoordinated_count", m.uncoordinated_count},
                        {"gold_chunks", m.gold_chunks},
                        {"pred_chunks", m.pred_chunks},
                        {"correct_chunks", m.correct_chunks},
                        {"utterances", m.utterances}};
}

nlohmann::json config_obj(const TrainConfig& cfg) {
  return nlohmann::json{{"data_dir", cfg.data_dir},
                        {"preset", cfg.preset},
                        {"mode", mode_name(cfg.mode)},
                        {"batch_size", cfg.batch_size},
                        {"lr", cfg.lr},
                        {"max_epochs", cfg.max_epochs},
                        {"seed", cfg.seed},
                        {"selection", cfg.selection},
                        {"teacher_force", cfg.teacher_force},
                        {"pass2_loss_only", cfg.pass2_loss_only},
                        {"num_layers", cfg.encoder.num_layers},
                        {"num_heads", cfg.encoder.num_heads},
                        {"hidden", cfg.encoder.hidden},
                        {"feed_forward", cfg.encoder.feed_forward},
                        {"rel_clip", cfg.encoder.rel_clip},
                        {"dropout", cfg.encoder.dropout},
                        {"rel_values", cfg.encoder.rel_values},
                        {"max_len", cfg.encoder.max_len}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed on " + path);
}

}  // namespace

std::pair<std::vector<TaggedSample>, std::vector<TaggedSample>> tagged_pairs(
    const std::vector<Utterance>& utts, const Vocab& vocab,
    const std::vector<Prediction>& preds) {
  if (utts.size() != preds.size())
    throw std::logic_error("tagged_pairs: prediction count differs from utterance count");
  std::vector<TaggedSample> gold, pred;
  gold.reserve(utts.size());
  pred.reserve(utts.size());
  for (size_t i = 0; i < utts.size(); ++i) {
    gold.push_back({utts[i].intent, utts[i].slot_tags});
    TaggedSample p;
    p.intent = vocab.intent_surface(preds[i].intent_id);
    p.tags.reserve(preds[i].slot_tag_ids.size());
    for (int32_t id : preds[i].slot_tag_ids) p.tags.push_back(vocab.tag_surface(id));
    pred.push_back(std::move(p));
  }
  return {std::move(gold), std::move(pred)};
}

TrainResult train(const TrainConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  std::vector<Utterance> train_set = load_split(cfg.data_dir, "train");
  std::vector<Utterance> dev_set = load_split(cfg.data_dir, "dev");
  std::vector<Utterance> test_set = load_split(cfg.data_dir, "test");

  Vocab vocab = build_vocab(train_set);
  EncoderConfig enc = cfg.encoder;
  enc.token_vocab = vocab.token_count();
  enc.tag_vocab = vocab.tag_count();
  enc.intent_vocab = vocab.intent_count();
  enc.validate();

  ParamStore<float> params = init_params<float>(enc, cfg.seed);
  if (cfg.mode == RunMode::one_pass_crf) ensure_crf_params(params, enc);
  std::vector<int32_t> proj = projection_table(vocab);
  const int32_t o_id = vocab.o_tag_id();

  AdamConfig adam;
  adam.lr = cfg.lr;
  int64_t step = 0;

  RunReport report;
  report.config = cfg;
  report.checkpoint_path = (std::filesystem::path(out_dir) / "model.slrf").string();
  double best_value = -1.0;

  for (int32_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    Rng dropout_rng(derive_seed(cfg.seed, "dropout", static_cast<uint64_t>(epoch)));
    uint64_t shuffle = derive_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));

    double loss_sum = 0;
    int64_t batches = 0;
    for (const Batch& b : make_batches(train_set, vocab, cfg.batch_size, shuffle)) {
      StepLosses l = train_step(params, enc, b, cfg.mode, proj, o_id, &dropout_rng,
                                cfg.teacher_force, cfg.pass2_loss_only);
      if (!std::isfinite(l.total))
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              ": loss is not finite");
      adam_step(params, adam, ++step);
      loss_sum += l.total;
      ++batches;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(batches);

    auto dev_preds = decode(params, enc, vocab, dev_set, cfg.mode);
    auto [dev_gold, dev_pred] = tagged_pairs(dev_set, vocab, dev_preds);
    log.dev = evaluate(dev_gold, dev_pred);

    auto test_preds = decode(params, enc, vocab, test_set, cfg.mode);
    auto [test_gold, test_pred] = tagged_pairs(test_set, vocab, test_preds);
    log.test_uncoordinated = evaluate(test_gold, test_pred).uncoordinated_count;

    double value = selection_value(log.dev, cfg.selection);
    if (value > best_value) {
      best_value = value;
      report.best_epoch = epoch;
      report.best_dev = log.dev;
      save_checkpoint(report.checkpoint_path, params);
      save_meta(report.checkpoint_path, CheckpointMeta{enc, cfg.mode, vocab});
    }

    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(log);
  }

  write_text((std::filesystem::path(out_dir) / "run_report.json").string(),
             run_report_json(report));
  write_text((std::filesystem::path(out_dir) / "curve.csv").string(),
             uncoordinated_curve_csv(report));
  return TrainResult{report.checkpoint_path, std::move(report)};
}

MetricsReport evaluate_checkpoint(const std::string& checkpoint_path, const std::string& data_dir,
                                  const std::string& split, RunMode mode) {
  if (split != "train" && split != "dev" && split != "test")
    throw std::invalid_argument("unknown split '" + split + "' (expected train, dev or test)");
  ParamStore<float> params = load_checkpoint(checkpoint_path);
  CheckpointMeta meta = load_meta(checkpoint_path);
  validate_params(params, meta.config, mode);
  std::vector<Utterance> data = load_split(data_dir, split);
  auto preds = decode(params, meta.config, meta.vocab, data, mode);
  auto [gold, pred] = tagged_pairs(data, meta.vocab, preds);
  return evaluate(gold, pred);
}

std::string uncoordinated_curve_csv(const RunReport& report) {
  std::ostringstream out;
  for (const EpochLog& e : report.epochs)
    out << mode_name(report.config.mode) << "," << e.epoch << "," << e.test_uncoordinated << "\n";
  return out.str();
}

std::string run_report_json(const RunReport& report) {
  nlohmann::json j;
  j["config"] = config_obj(report.config);
  j["checkpoint"] = report.checkpoint_path;
  j["best"] = {{"epoch", report.best_epoch}, {"dev", metrics_obj(report.best_dev)}};
  j["epochs"] = nlohmann::json::array();
  for (const EpochLog& e : report.epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"dev", metrics_obj(e.dev)},
                           {"test_uncoordinated", e.test_uncoordinated},
                           {"wall_seconds", e.wall_seconds}});
  return j.dump(2) + "\n";
}

std::string metrics_json(const MetricsReport& m, int indent) {
  return metrics_obj(m).dump(indent) + (indent >= 0 ? "\n" : "");
}

}  // namespace slrf
