#include "slrf/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace slrf {

namespace detail {

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("latency statistics need at least one sample");
  double total = 0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("latency statistics need at least one sample");
  std::sort(xs.begin(), xs.end());
  size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double p95_of(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("latency statistics need at least one sample");
  std::sort(xs.begin(), xs.end());
  // nearest-rank: the smallest value with at least 95% of the mass at or below it
  size_t rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(xs.size())));
  return xs[rank - 1];
}

}  // namespace detail

std::string hardware_note() {
  std::string cpu = "unknown CPU";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      size_t colon = line.find(':');
      if (colon != std::string::npos) {
        size_t begin = line.find_first_not_of(" \t", colon + 1);
        if (begin != std::string::npos) cpu = line.substr(begin);
      }
      break;
    }
  }
  return cpu + "; 1 thread; steady_clock";
}

LatencyReport time_decoder(const std::function<void(size_t)>& decode_one,
                           const std::vector<int64_t>& lengths, const std::string& mode_label,
                           int32_t warmup, int32_t repeats, int32_t threads) {
  if (threads != 1)
    throw std::invalid_argument("latency bench is strictly single-threaded; refusing threads=" +
                                std::to_string(threads));
  if (lengths.empty()) throw std::invalid_argument("latency bench needs at least one utterance");
  if (warmup < 0) throw std::invalid_argument("warmup must be >= 0");
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");

  using clock = std::chrono::steady_clock;
  const size_t n = lengths.size();
  for (int32_t w = 0; w < warmup; ++w) decode_one(static_cast<size_t>(w) % n);

  std::vector<double> per_utt(n);
  for (size_t i = 0; i < n; ++i) {
    double total_ms = 0;
    for (int32_t r = 0; r < repeats; ++r) {
      clock::time_point t0 = clock::now();
      decode_one(i);
      clock::time_point t1 = clock::now();
      total_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    per_utt[i] = total_ms / repeats;
  }

  LatencyReport rep;
  rep.mode = mode_label;
  rep.mean_ms = detail::mean_of(per_utt);
  rep.median_ms = detail::median_of(per_utt);
  rep.p95_ms = detail::p95_of(per_utt);
  rep.count = static_cast<int64_t>(n);
  std::vector<double> long_ms;
  for (size_t i = 0; i < n; ++i)
    if (lengths[i] >= 12) long_ms.push_back(per_utt[i]);
  rep.long_count = static_cast<int64_t>(long_ms.size());
  rep.long_bucket_present = long_ms.size() >= 10;
  if (rep.long_bucket_present) rep.long_mean_ms = detail::mean_of(long_ms);
  rep.hardware = hardware_note();
  return rep;
}

LatencyReport measure_latency(const ParamStore<float>& params, const EncoderConfig& cfg,
                              const Vocab& vocab, const std::vector<Utterance>& utts,
                              RunMode mode, int32_t warmup, int32_t repeats, int32_t threads) {
  if (utts.empty()) throw std::invalid_argument("latency bench needs at least one utterance");

  // stage the batch-of-one inputs up front so the timed region is decode only
  std::vector<std::vector<Utterance>> singles;
  std::vector<int64_t> lengths;
  singles.reserve(utts.size());
  lengths.reserve(utts.size());
  for (const Utterance& u : utts) {
    singles.push_back({u});
    lengths.push_back(static_cast<int64_t>(u.tokens.size()));
  }

  // the sink keeps an aggressive optimizer from deleting the unused decodes
  std::atomic<int64_t> sink{0};
  auto decode_one = [&](size_t i) {
    std::vector<Prediction> out = decode(params, cfg, vocab, singles[i], mode, 1);
    sink.fetch_add(out.empty() ? 0 : out[0].intent_id, std::memory_order_relaxed);
  };
  return time_decoder(decode_one, lengths, mode_name(mode), warmup, repeats, threads);
}

LatencyReport measure_latency(const std::string& checkpoint_path,
                              const std::vector<Utterance>& utts, const std::string& mode,
                              int32_t warmup, int32_t repeats, int32_t threads) {
  ParamStore<float> params = load_checkpoint(checkpoint_path);
  CheckpointMeta meta = load_meta(checkpoint_path);
  RunMode m = mode.empty() ? meta.mode : parse_mode(mode);
  validate_params(params, meta.config, m);
  return measure_latency(params, meta.config, meta.vocab, utts, m, warmup, repeats, threads);
}

std::vector<LatencyReport> speedup_table(const std::vector<LatencyReport>& reports,
                                         const std::string& reference_mode) {
  const LatencyReport* ref = nullptr;
  for (const LatencyReport& r : reports)
    if (r.mode == reference_mode) {
      ref = &r;
      break;
    }
  if (ref == nullptr)
    throw std::invalid_argument("speedup reference mode '" + reference_mode +
                                "' is not among the measured reports");
  std::vector<LatencyReport> rows = reports;
  for (LatencyReport& r : rows) {
    if (!(r.mean_ms > 0))
      throw std::logic_error("latency report for mode '" + r.mode +
                             "' has a non-positive mean; cannot form a speedup");
    r.reference_mode = reference_mode;
    r.speedup = ref->mean_ms / r.mean_ms;
  }
  return rows;
}

std::string speedup_table_text(const std::vector<LatencyReport>& rows) {
  size_t width = 4;  // "mode"
  for (const LatencyReport& r : rows) width = std::max(width, r.mode.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width + 2)) << "mode" << std::right
      << std::setw(12) << "latency ms" << std::setw(10) << "speedup" << "\n";
  out << std::fixed;
  for (const LatencyReport& r : rows) {
    out << std::left << std::setw(static_cast<int>(width + 2)) << r.mode << std::right
        << std::setprecision(3) << std::setw(12) << r.mean_ms << std::setprecision(2)
        << std::setw(9) << r.speedup << "x\n";
  }
  return out.str();
}

std::string speedup_table_csv(const std::vector<LatencyReport>& rows) {
  std::ostringstream out;
  out << "mode,latency_ms,speedup\n";
  out << std::setprecision(10);
  for (const LatencyReport& r : rows) out << r.mode << ',' << r.mean_ms << ',' << r.speedup << "\n";
  return out.str();
}

namespace {

nlohmann::json latency_obj(const LatencyReport& r) {
  nlohmann::json j{{"mode", r.mode},
                   {"mean_ms", r.mean_ms},
                   {"median_ms", r.median_ms},
                   {"p95_ms", r.p95_ms},
                   {"count", r.count},
                   {"hardware", r.hardware}};
  if (r.long_bucket_present)
    j["long_bucket"] = {{"min_length", 12}, {"mean_ms", r.long_mean_ms}, {"count", r.long_count}};
  else
    j["long_bucket"] = nullptr;
  if (r.reference_mode.empty()) {
    j["reference_mode"] = nullptr;
    j["speedup"] = nullptr;
  } else {
    j["reference_mode"] = r.reference_mode;
    j["speedup"] = r.speedup;
  }
  return j;
}

}  // namespace

std::string latency_json(const LatencyReport& report, int indent) {
  std::string s = latency_obj(report).dump(indent);
  if (indent >= 0) s += "\n";
  return s;
}

std::string latency_table_json(const std::vector<LatencyReport>& rows, int indent) {
  nlohmann::json arr = nlohmann::json::array();
  for (const LatencyReport& r : rows) arr.push_back(latency_obj(r));
  std::string s = arr.dump(indent);
  if (indent >= 0) s += "\n";
  return s;
}

}  // namespace slrf
