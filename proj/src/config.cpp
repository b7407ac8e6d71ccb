#include "slrf/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace slrf {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size())
    throw std::invalid_argument("config: " + key + " needs an integer, got '" + value + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " needs a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config: " + key + " needs true or false, got '" + value + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (data_dir.empty()) throw std::invalid_argument("config: data_dir is not set");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
  if (max_epochs < 1) throw std::invalid_argument("config: max_epochs must be >= 1");
  if (selection != "sentence_accuracy" && selection != "slot_f1" &&
      selection != "intent_accuracy")
    throw std::invalid_argument(
        "config: selection must be sentence_accuracy, slot_f1 or intent_accuracy, got '" +
        selection + "'");
  if (encoder.dropout < 0.0 || encoder.dropout >= 1.0)
    throw std::invalid_argument("config: dropout must be in [0, 1)");
}

void apply_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "data_dir") {
    cfg.data_dir = value;
  } else if (key == "preset") {
    if (value == "atis") {
      cfg.encoder = EncoderConfig::atis_preset();
    } else if (value == "snips") {
      cfg.encoder = EncoderConfig::snips_preset();
    } else {
      throw std::invalid_argument("config: preset must be atis or snips, got '" + value + "'");
    }
    cfg.preset = value;
  } else if (key == "mode") {
    cfg.mode = parse_mode(value);
  } else if (key == "batch_size") {
    cfg.batch_size = parse_int<int32_t>(key, value);
  } else if (key == "lr") {
    cfg.lr = parse_double(key, value);
  } else if (key == "max_epochs") {
    cfg.max_epochs = parse_int<int32_t>(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_int<uint64_t>(key, value);
  } else if (key == "selection") {
    cfg.selection = value;
  } else if (key == "teacher_force") {
    cfg.teacher_force = parse_bool(key, value);
  } else if (key == "pass2_loss_only") {
    cfg.pass2_loss_only = parse_bool(key, value);
  } else if (key == "num_layers") {
    cfg.encoder.num_layers = parse_int<int32_t>(key, value);
  } else if (key == "num_heads") {
    cfg.encoder.num_heads = parse_int<int32_t>(key, value);
  } else if (key == "hidden") {
    cfg.encoder.hidden = parse_int<int32_t>(key, value);
  } else if (key == "feed_forward") {
    cfg.encoder.feed_forward = parse_int<int32_t>(key, value);
  } else if (key == "rel_clip") {
    cfg.encoder.rel_clip = parse_int<int32_t>(key, value);
  } else if (key == "dropout") {
    cfg.encoder.dropout = parse_double(key, value);
  } else if (key == "rel_values") {
    cfg.encoder.rel_values = parse_bool(key, value);
  } else if (key == "max_len") {
    cfg.encoder.max_len = parse_int<int32_t>(key, value);
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

TrainConfig parse_run_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value, got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    try {
      apply_kv(base, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

TrainConfig load_run_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), std::move(base));
}

std::string dump_run_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(17);  // doubles survive the round trip
  out << "data_dir=" << cfg.data_dir << "\n";
  out << "preset=" << cfg.preset << "\n";
  out << "mode=" << mode_name(cfg.mode) << "\n";
  out << "batch_size=" << cfg.batch_size << "\n";
  out << "lr=" << cfg.lr << "\n";
  out << "max_epochs=" << cfg.max_epochs << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "selection=" << cfg.selection << "\n";
  out << "teacher_force=" << (cfg.teacher_force ? "true" : "false") << "\n";
  out << "pass2_loss_only=" << (cfg.pass2_loss_only ? "true" : "false") << "\n";
  out << "num_layers=" << cfg.encoder.num_layers << "\n";
  out << "num_heads=" << cfg.encoder.num_heads << "\n";
  out << "hidden=" << cfg.encoder.hidden << "\n";
  out << "feed_forward=" << cfg.encoder.feed_forward << "\n";
  out << "rel_clip=" << cfg.encoder.rel_clip << "\n";
  out << "dropout=" << cfg.encoder.dropout << "\n";
  out << "rel_values=" << (cfg.encoder.rel_values ? "true" : "false") << "\n";
  out << "max_len=" << cfg.encoder.max_len << "\n";
  return out.str();
}

}  // namespace slrf
