#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "slrf/bench.hpp"
#include "slrf/checkpoint.hpp"
#include "slrf/config.hpp"
#include "slrf/corpus.hpp"
#include "slrf/crf.hpp"
#include "slrf/encoder.hpp"
#include "slrf/gradcheck.hpp"
#include "slrf/iob.hpp"
#include "slrf/metrics.hpp"
#include "slrf/refine.hpp"
#include "slrf/rng.hpp"
#include "slrf/trainer.hpp"

namespace fs = std::filesystem;
using namespace slrf;

namespace {

// ---- shared plumbing --------------------------------------------------------

struct LoadedModel {
  ParamStore<float> params;
  CheckpointMeta meta;
  RunMode mode = RunMode::one_pass;
};

LoadedModel load_model(const std::string& checkpoint, const std::string& mode_flag) {
  LoadedModel m{load_checkpoint(checkpoint), load_meta(checkpoint), RunMode::one_pass};
  m.mode = mode_flag.empty() ? m.meta.mode : parse_mode(mode_flag);
  validate_params(m.params, m.meta.config, m.mode);
  return m;
}

// One whitespace-tokenized utterance per line; blank lines stay as empty
// utterances so input and output lines correspond one to one.
std::vector<Utterance> read_utterance_lines(std::istream& in) {
  std::vector<Utterance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Utterance u;
    u.id = static_cast<int64_t>(out.size());
    std::istringstream ls(line);
    for (std::string tok; ls >> tok;) u.tokens.push_back(std::move(tok));
    out.push_back(std::move(u));
  }
  return out;
}

// "-" means the standard stream. Owning wrapper so main stays exception-clean.
struct InputStream {
  std::ifstream file;
  std::istream* in = nullptr;
  explicit InputStream(const std::string& path) {
    if (path == "-") {
      in = &std::cin;
    } else {
      file.open(path, std::ios::binary);
      if (!file) throw std::runtime_error("cannot open input file: " + path);
      in = &file;
    }
  }
};

struct OutputStream {
  std::ofstream file;
  std::ostream* out = nullptr;
  explicit OutputStream(const std::string& path) {
    if (path == "-") {
      out = &std::cout;
    } else {
      file.open(path, std::ios::binary);
      if (!file) throw std::runtime_error("cannot open output file: " + path);
      out = &file;
    }
  }
};

std::shared_ptr<const std::vector<int32_t>> ids(std::vector<int32_t> v) {
  return std::make_shared<const std::vector<int32_t>>(std::move(v));
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string out_dir;
  bool dump_vocab = false;
  // (key, value) pairs in override order: named flags first, then --set
  std::vector<std::pair<std::string, std::string>> overrides;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg = a.config_path.empty() ? TrainConfig{} : load_run_config(a.config_path);
  for (const auto& [key, value] : a.overrides) apply_kv(cfg, key, value);

  TrainResult res = train(cfg, a.out_dir);
  std::cerr << "best epoch " << res.report.best_epoch << ": dev sentence accuracy "
            << res.report.best_dev.sentence_accuracy << ", slot F1 "
            << res.report.best_dev.slot_f1 << ", intent accuracy "
            << res.report.best_dev.intent_accuracy << "\n";

  std::cout << "checkpoint\t" << res.checkpoint_path << "\n";
  std::cout << "report\t" << (fs::path(a.out_dir) / "run_report.json").string() << "\n";
  std::cout << "curve\t" << (fs::path(a.out_dir) / "curve.csv").string() << "\n";

  if (a.dump_vocab) {
    CheckpointMeta meta = load_meta(res.checkpoint_path);
    const std::pair<const char*, std::string> dumps[] = {
        {"tokens.vocab", meta.vocab.dump_tokens()},
        {"tags.vocab", meta.vocab.dump_tags()},
        {"intents.vocab", meta.vocab.dump_intents()},
    };
    for (const auto& [name, text] : dumps) {
      fs::path p = fs::path(a.out_dir) / name;
      std::ofstream f(p, std::ios::binary);
      if (!f) throw std::runtime_error("cannot open output file: " + p.string());
      f << text;
      std::cout << "vocab\t" << p.string() << "\n";
    }
  }
  return 0;
}

// ---- eval -------------------------------------------------------------------

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& split,
             const std::string& mode_flag) {
  RunMode mode = mode_flag.empty() ? load_meta(checkpoint).mode : parse_mode(mode_flag);
  MetricsReport m = evaluate_checkpoint(checkpoint, data, split, mode);
  std::cout << metrics_json(m, 2);
  return 0;
}

// ---- tag --------------------------------------------------------------------

int cmd_tag(const std::string& checkpoint, const std::string& input, const std::string& output,
            const std::string& mode_flag, int32_t batch_size) {
  LoadedModel m = load_model(checkpoint, mode_flag);
  InputStream src(input);
  std::vector<Utterance> utts = read_utterance_lines(*src.in);
  std::vector<Prediction> preds =
      decode(m.params, m.meta.config, m.meta.vocab, utts, m.mode, batch_size);

  OutputStream dst(output);
  for (const Prediction& p : preds) {
    *dst.out << m.meta.vocab.intent_surface(p.intent_id) << '\t';
    for (size_t i = 0; i < p.slot_tag_ids.size(); ++i) {
      if (i > 0) *dst.out << ' ';
      *dst.out << m.meta.vocab.tag_surface(p.slot_tag_ids[i]);
    }
    *dst.out << '\n';
  }
  return 0;
}

// ---- bench ------------------------------------------------------------------

struct BenchArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string input;
  std::vector<std::string> modes{"one_pass", "two_pass"};
  std::string reference = "one_pass";
  int32_t warmup = 50;
  int32_t repeats = 5;
  int32_t threads = 1;
  std::string csv_path;
  std::string json_path;
};

int cmd_bench(const BenchArgs& a) {
  ParamStore<float> params = load_checkpoint(a.checkpoint);
  CheckpointMeta meta = load_meta(a.checkpoint);

  std::vector<Utterance> utts;
  if (!a.input.empty()) {
    InputStream src(a.input);
    utts = read_utterance_lines(*src.in);
  } else if (!a.data.empty()) {
    utts = load_split(a.data, a.split);
  } else {
    throw std::invalid_argument("bench needs --data or --input to supply utterances");
  }

  std::vector<LatencyReport> reports;
  for (const std::string& name : a.modes) {
    RunMode mode = parse_mode(name);
    validate_params(params, meta.config, mode);
    reports.push_back(measure_latency(params, meta.config, meta.vocab, utts, mode, a.warmup,
                                      a.repeats, a.threads));
  }
  std::vector<LatencyReport> table = speedup_table(reports, a.reference);

  std::cout << speedup_table_text(table);
  if (!a.csv_path.empty()) {
    OutputStream dst(a.csv_path);
    *dst.out << speedup_table_csv(table);
  }
  if (!a.json_path.empty()) {
    OutputStream dst(a.json_path);
    *dst.out << latency_table_json(table, 2);
  }
  std::cerr << "timed " << utts.size() << " utterances per mode on: " << hardware_note() << "\n";
  return 0;
}

// ---- audit ------------------------------------------------------------------

int cmd_audit(const std::string& input) {
  InputStream src(input);
  std::string line;
  int64_t line_no = 0, total = 0;
  while (std::getline(*src.in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> tags;
    std::istringstream ls(line);
    for (std::string tag; ls >> tag;) tags.push_back(std::move(tag));
    std::vector<CrfRuleViolation> violations;
    try {
      violations = validate_crf_rules(tags);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": " + e.what());
    }
    for (const CrfRuleViolation& v : violations) {
      // "-" marks a violation at the start of the sequence (no previous tag)
      std::cout << line_no << ':' << v.pos << ' ' << (v.prev.empty() ? "-" : v.prev) << ' '
                << v.tag << "\n";
    }
    total += static_cast<int64_t>(violations.size());
  }
  std::cerr << "audited " << line_no << " lines: " << total << " uncoordinated transitions\n";
  return 0;
}

// ---- gradcheck --------------------------------------------------------------

// Mirrors the verification suite: the one-layer two-head width-8 encoder under
// the joint loss, and the CRF objective over a free emission matrix, both in
// 64-bit against central finite differences.
int cmd_gradcheck(int32_t seeds, double tolerance, int32_t coords) {
  bool all_ok = true;
  double worst = 0.0;

  auto run_one = [&](const char* label, uint64_t seed, ParamStore<double>& store,
                     const std::function<double(bool)>& loss_fn) {
    GradCheckReport rep =
        grad_check(store, loss_fn, tolerance, coords, derive_seed(0x6c0de, "pick", seed));
    worst = std::max(worst, rep.max_rel_err);
    all_ok = all_ok && rep.ok();
    std::cout << "check=" << label << " seed=" << seed << " coords=" << rep.coords_checked
              << " max_rel_err=" << rep.max_rel_err << (rep.ok() ? " PASS" : " FAIL") << "\n";
    for (const GradCheckFailure& f : rep.failures)
      std::cerr << "  " << f.param << "[" << f.index << "] analytic=" << f.analytic
                << " numeric=" << f.numeric << " rel_err=" << f.rel_err << "\n";
  };

  for (uint64_t seed = 0; seed < static_cast<uint64_t>(seeds); ++seed) {
    EncoderConfig cfg;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.hidden = 8;
    cfg.rel_clip = 2;
    cfg.dropout = 0.0;
    cfg.token_vocab = 9;
    cfg.tag_vocab = 4;
    cfg.intent_vocab = 3;

    Packed p = Packed::from_lengths({3});
    auto toks = ids({2, 3, 4, 5});
    auto tags = ids({0, 0, 0, 0});
    auto gold_i = ids({1});
    auto gold_s = ids({1, 2, 0});

    ParamStore<double> store = init_params<double>(cfg, derive_seed(0x6c0de, "enc", seed));
    run_one("joint_loss", seed, store, [&](bool with_grad) {
      Tape<double> t;
      auto bp = BoundParams<double>::bind(t, store);
      ModelOutputs out = model_forward(t, bp, cfg, p, toks, tags);
      VarId loss = joint_loss(t, out, gold_i, gold_s, 1);
      if (with_grad) {
        t.backward(loss);
        bp.pull_grads();
      }
      return t.val(loss).v[0];
    });

    Rng rng(derive_seed(0x6c0de, "crf", seed));
    const int64_t T = 4;
    ParamStore<double> crf_store;
    Tensor<double> em({3, T});
    for (double& x : em.v) x = rng.uniform(-1.0, 1.0);
    Tensor<double> tr({T + 2, T + 2});
    for (double& x : tr.v) x = rng.uniform(-1.0, 1.0);
    crf_store.add("em", std::move(em));
    crf_store.add("crf.trans", std::move(tr));
    run_one("crf_nll", seed, crf_store, [&](bool with_grad) {
      Tape<double> t;
      auto bp = BoundParams<double>::bind(t, crf_store);
      VarId nll = crf_nll_rows(t, bp["em"], bp["crf.trans"], p, ids({1, 2, 0}), 1.0);
      if (with_grad) {
        t.backward(nll);
        bp.pull_grads();
      }
      return t.val(nll).v[0];
    });
  }

  std::cout << "gradcheck " << (all_ok ? "PASS" : "FAIL") << " max_rel_err=" << worst << "\n";
  return all_ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"non-autoregressive joint intent + slot tagger with two-pass refinement"};
  app.require_subcommand(1);
  int rc = 0;

  // train
  TrainArgs ta;
  std::string t_data, t_preset, t_mode, t_selection, t_teacher, t_pass2;
  uint64_t t_seed = 0;
  int64_t t_epochs = 0, t_batch = 0;
  double t_lr = 0, t_dropout = 0;
  std::vector<std::string> t_sets;
  CLI::App* tr = app.add_subcommand("train", "train a model and keep the best-dev checkpoint");
  tr->add_option("--config", ta.config_path, "key=value run configuration file");
  tr->add_option("--out", ta.out_dir, "output directory for checkpoint, report, curve")
      ->required();
  tr->add_flag("--dump-vocab", ta.dump_vocab, "also write id<TAB>surface vocabulary dumps");
  CLI::Option* o_data = tr->add_option("--data", t_data, "dataset directory");
  CLI::Option* o_preset = tr->add_option("--preset", t_preset, "encoder preset: atis or snips");
  CLI::Option* o_mode =
      tr->add_option("--mode", t_mode, "one_pass, two_pass, or one_pass_crf");
  CLI::Option* o_seed = tr->add_option("--seed", t_seed, "run seed");
  CLI::Option* o_epochs = tr->add_option("--epochs", t_epochs, "training epochs");
  CLI::Option* o_batch = tr->add_option("--batch-size", t_batch, "utterances per step");
  CLI::Option* o_lr = tr->add_option("--lr", t_lr, "learning rate");
  CLI::Option* o_dropout = tr->add_option("--dropout", t_dropout, "dropout probability");
  CLI::Option* o_sel =
      tr->add_option("--selection", t_selection, "model selection metric on dev");
  tr->add_option("--set", t_sets, "extra config overrides as key=value (applied last)")
      ->check([](const std::string& s) {
        size_t eq = s.find('=');
        return eq == std::string::npos || eq == 0 ? std::string("expected key=value") : "";
      });
  tr->callback([&] {
    auto add = [&](const CLI::Option* o, const char* key, std::string value) {
      if (o->count() > 0) ta.overrides.emplace_back(key, std::move(value));
    };
    // preset first: it resets the encoder block, so later keys survive it
    add(o_preset, "preset", t_preset);
    add(o_data, "data_dir", t_data);
    add(o_mode, "mode", t_mode);
    add(o_seed, "seed", std::to_string(t_seed));
    add(o_epochs, "max_epochs", std::to_string(t_epochs));
    add(o_batch, "batch_size", std::to_string(t_batch));
    add(o_lr, "lr", std::to_string(t_lr));
    add(o_dropout, "dropout", std::to_string(t_dropout));
    add(o_sel, "selection", t_selection);
    for (const std::string& s : t_sets) {
      size_t eq = s.find('=');
      ta.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    rc = cmd_train(ta);
  });

  // eval
  std::string e_ckpt, e_data, e_split = "test", e_mode;
  CLI::App* ev = app.add_subcommand("eval", "score a saved model on a dataset split");
  ev->add_option("--checkpoint", e_ckpt, "saved model")->required();
  ev->add_option("--data", e_data, "dataset directory")->required();
  ev->add_option("--split", e_split, "train, dev, or test");
  ev->add_option("--mode", e_mode, "decode mode (default: the checkpoint's)");
  ev->callback([&] { rc = cmd_eval(e_ckpt, e_data, e_split, e_mode); });

  // tag
  std::string g_ckpt, g_input = "-", g_output = "-", g_mode;
  int32_t g_batch = 32;
  CLI::App* tg = app.add_subcommand("tag", "label utterances, one per line");
  tg->add_option("--checkpoint", g_ckpt, "saved model")->required();
  tg->add_option("--input", g_input, "utterance file, - for stdin");
  tg->add_option("--output", g_output, "prediction file, - for stdout");
  tg->add_option("--mode", g_mode, "decode mode (default: the checkpoint's)");
  tg->add_option("--batch-size", g_batch, "decode batch size");
  tg->callback([&] { rc = cmd_tag(g_ckpt, g_input, g_output, g_mode, g_batch); });

  // bench
  BenchArgs ba;
  CLI::App* bn = app.add_subcommand("bench", "measure per-utterance decode latency");
  bn->add_option("--checkpoint", ba.checkpoint, "saved model")->required();
  CLI::Option* b_data = bn->add_option("--data", ba.data, "dataset directory");
  bn->add_option("--split", ba.split, "split to time (with --data)");
  CLI::Option* b_input = bn->add_option("--input", ba.input, "utterance file, - for stdin");
  b_data->excludes(b_input);
  bn->add_option("--modes", ba.modes, "modes to time")->delimiter(',');
  bn->add_option("--reference", ba.reference, "mode speedups are measured against");
  bn->add_option("--warmup", ba.warmup, "unrecorded decodes before timing");
  bn->add_option("--repeats", ba.repeats, "timed decodes per utterance, averaged");
  bn->add_option("--threads", ba.threads, "must be 1; the harness refuses to parallelize");
  bn->add_option("--csv", ba.csv_path, "also write the table as CSV, - for stdout");
  bn->add_option("--json", ba.json_path, "also write full reports as JSON, - for stdout");
  bn->callback([&] { rc = cmd_bench(ba); });

  // audit
  std::string a_input = "-";
  CLI::App* au = app.add_subcommand("audit", "list uncoordinated slot transitions");
  au->add_option("--input", a_input, "tag sequences, one per line, - for stdin");
  au->callback([&] { rc = cmd_audit(a_input); });

  // gradcheck
  int32_t gc_seeds = 5, gc_coords = 24;
  double gc_tol = 1e-4;
  CLI::App* gc =
      app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
  gc->add_option("--seeds", gc_seeds, "number of seeded repetitions");
  gc->add_option("--tolerance", gc_tol, "maximum relative error");
  gc->add_option("--coords", gc_coords, "coordinates sampled per parameter");
  gc->callback([&] { rc = cmd_gradcheck(gc_seeds, gc_tol, gc_coords); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
