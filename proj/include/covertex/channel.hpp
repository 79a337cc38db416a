#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "covertex/address_space.hpp"
#include "covertex/error.hpp"
#include "covertex/rng.hpp"
#include "covertex/symbol_codec.hpp"

namespace covertex {

// ---------------------------------------------------------------------------
// Write plans and reports
// ---------------------------------------------------------------------------
struct WriteEntry {
  AddressSpec address;
  Label label = 0;
  std::uint32_t sample_count = 1;

  bool operator==(const WriteEntry&) const = default;
};

struct WriteSet {
  std::vector<WriteEntry> entries;

  std::uint64_t total_samples() const {
    std::uint64_t t = 0;
    for (const auto& e : entries) t += e.sample_count;
    return t;
  }

  void validate(int class_count) const {
    std::unordered_set<AddressSpec, AddressSpecHash> seen;
    seen.reserve(entries.size());
    for (const auto& e : entries) {
      if (e.label >= class_count) throw ConfigError("write label " + std::to_string(e.label) + " >= class count");
      if (e.sample_count == 0) throw ConfigError("sample counts must be positive");
      if (!seen.insert(e.address).second)
        throw ConfigError("duplicate address in write set: " + canonical_string(e.address));
    }
  }

  bool operator==(const WriteSet&) const = default;
};

// Newline-separated "<canonical-address> <label> <count>".
inline void write_writeset(std::ostream& out, const WriteSet& ws) {
  for (const auto& e : ws.entries)
    out << canonical_string(e.address) << ' ' << int(e.label) << ' ' << e.sample_count << '\n';
}

inline WriteEntry parse_write_entry(const std::string& line) {
  std::istringstream ls(line);
  std::string addr;
  int label = -1;
  long long count = 0;
  std::string extra;
  if (!(ls >> addr >> label >> count) || (ls >> extra) || label < 0 || label > 255 || count <= 0 ||
      count > 0xFFFFFFFFll)
    throw FramingError("malformed write entry '" + line + "'");
  return WriteEntry{parse_address(addr), static_cast<Label>(label), static_cast<std::uint32_t>(count)};
}

inline WriteSet read_writeset(std::istream& in) {
  WriteSet ws;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ws.entries.push_back(parse_write_entry(line));
  }
  return ws;
}

struct TrainReport {
  double baseline_accuracy_before = 1.0;
  double baseline_accuracy_after = 1.0;
  int epochs = 0;
  std::uint64_t total_patched_samples = 0;
  // entries that replaced an address written by an earlier call
  std::size_t overwritten = 0;
};

// Per-class read counts for one address. tie_order, when present, is the
// backend's own preference order used to break equal counts; otherwise ties
// go to the smaller label.
struct ReadObservation {
  std::vector<std::uint32_t> counts;
  std::uint32_t n = 0;
  std::vector<Label> tie_order;
};

// ---------------------------------------------------------------------------
// Backend contract
// ---------------------------------------------------------------------------
class Backend {
 public:
  virtual ~Backend() = default;

  virtual int class_count() const = 0;
  virtual TrainReport write(const WriteSet& ws) = 0;
  virtual Label read(const AddressSpec& address) = 0;

  virtual ReadObservation read_counts(const AddressSpec& address, int n) {
    if (n < 1) throw ConfigError("read count must be >= 1");
    ReadObservation obs;
    obs.counts.assign(static_cast<std::size_t>(class_count()), 0);
    for (int i = 0; i < n; ++i) {
      const Label l = read(address);
      if (l >= obs.counts.size()) throw BackendError("backend returned label outside the class space");
      ++obs.counts[l];
    }
    obs.n = static_cast<std::uint32_t>(n);
    return obs;
  }

  virtual bool supports_incremental_write() const { return true; }

  // Training epochs used by subsequent writes, for backends that train.
  virtual void set_epochs(int) {}
};

// ---------------------------------------------------------------------------
// Synthetic rank model: the true label sits at rank r with
//   P(r=1) = p, P(r=k) = (1-p)/2^(k-1) for 2 <= k <= c-1, P(r=c) = (1-p)/2^(c-2).
// ---------------------------------------------------------------------------
inline std::vector<double> rank_distribution(double top1, int class_count) {
  if (!(top1 > 0.0 && top1 <= 1.0)) throw ConfigError("top-1 accuracy must be in (0,1]");
  if (class_count < 2) throw ConfigError("need at least two classes");
  std::vector<double> pr(static_cast<std::size_t>(class_count));
  pr[0] = top1;
  double mass = 1.0 - top1;
  for (int k = 2; k < class_count; ++k) {
    mass *= 0.5;
    pr[static_cast<std::size_t>(k - 1)] = mass;
  }
  pr.back() = class_count == 2 ? 1.0 - top1 : mass;
  return pr;
}

// Samples the 1-based rank of the true label.
inline int synthetic_rank_model(std::span<const double> distribution, Rng& rng) {
  double u = uniform01(rng);
  for (std::size_t k = 0; k + 1 < distribution.size(); ++k) {
    if (u < distribution[k]) return static_cast<int>(k + 1);
    u -= distribution[k];
  }
  return static_cast<int>(distribution.size());
}

inline int synthetic_rank_model(double top1, int class_count, Rng& rng) {
  const auto pr = rank_distribution(top1, class_count);
  return synthetic_rank_model(pr, rng);
}

// Full label ranking with `truth` at 1-based `rank`; the remaining positions
// hold the other labels in uniformly random order.
inline std::vector<Label> latent_ranking(Label truth, int rank, int class_count, Rng& rng) {
  std::vector<Label> others;
  others.reserve(static_cast<std::size_t>(class_count - 1));
  for (int l = 0; l < class_count; ++l)
    if (l != truth) others.push_back(static_cast<Label>(l));
  for (std::size_t i = others.size(); i > 1; --i)
    std::swap(others[i - 1], others[uniform_below(rng, i)]);
  others.insert(others.begin() + (rank - 1), truth);
  return others;
}

// ---------------------------------------------------------------------------
// Neural Channel bookkeeping
// ---------------------------------------------------------------------------
inline bool check_neural_channel(const TrainReport& report, double epsilon,
                                 std::span<const ReceptionReport> receptions) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must be in (0,1)");
  if (report.baseline_accuracy_before - report.baseline_accuracy_after > epsilon) return false;
  return std::all_of(receptions.begin(), receptions.end(), [](const auto& r) { return r.accepted; });
}

// White-box capacity bound: every prunable parameter stores bits_per_param bits.
inline double ncc_upper_bound(double total_params, double prunable_fraction, double bits_per_param) {
  if (!(prunable_fraction >= 0.0 && prunable_fraction <= 1.0))
    throw ConfigError("prunable fraction must be in [0,1]");
  return total_params * prunable_fraction * bits_per_param;
}

// ---------------------------------------------------------------------------
// NoisyChannel: synthetic carrier with a fixed top-1 accuracy.
//
// Every written address gets a latent label ranking drawn from (seed, address,
// label). In rank_assignment mode the true label is placed at a rank drawn
// from the rank model once, and every read returns the top of the ranking.
// In stochastic mode the true label tops the ranking and each read draws a
// fresh rank. Reads of an address are a function of (seed, address, read
// ordinal) only, so interleaving across addresses does not change results.
// ---------------------------------------------------------------------------
enum class NoiseMode { rank_assignment, stochastic };

inline std::string_view to_string(NoiseMode m) {
  return m == NoiseMode::rank_assignment ? "rank-assignment" : "stochastic";
}

inline NoiseMode parse_noise_mode(std::string_view s) {
  if (s == "rank-assignment" || s == "rank_assignment") return NoiseMode::rank_assignment;
  if (s == "stochastic") return NoiseMode::stochastic;
  throw ConfigError("unknown noise mode '" + std::string(s) + "'");
}

struct NoisyChannelParams {
  double top1 = 1.0;
  int class_count = kDefaultClassCount;
  NoiseMode mode = NoiseMode::stochastic;
  std::uint64_t rng_seed = 0;
  // probability that a read repeats the previous outcome for the same address
  double repeat_prob = 0.0;
  double baseline_accuracy = 1.0;
};

class NoisyChannel : public Backend {
 public:
  explicit NoisyChannel(NoisyChannelParams params)
      : params_(params), profile_(rank_distribution(params.top1, params.class_count)) {
    if (params_.repeat_prob < 0.0 || params_.repeat_prob >= 1.0) throw ConfigError("repeat_prob must be in [0,1)");
  }

  const NoisyChannelParams& params() const { return params_; }
  int class_count() const override { return params_.class_count; }

  TrainReport write(const WriteSet& ws) override {
    ws.validate(params_.class_count);
    TrainReport r;
    r.baseline_accuracy_before = r.baseline_accuracy_after = params_.baseline_accuracy;
    for (const auto& e : ws.entries) {
      Cell cell;
      cell.label = e.label;
      cell.samples = e.sample_count;
      Rng rng = make_rng(params_.rng_seed, {AddressSpecHash{}(e.address), e.label, kWriteTag});
      const int rank = params_.mode == NoiseMode::rank_assignment ? synthetic_rank_model(profile_, rng) : 1;
      cell.ranking = latent_ranking(e.label, rank, params_.class_count, rng);
      auto [it, inserted] = cells_.insert_or_assign(e.address, std::move(cell));
      if (!inserted) ++r.overwritten;
    }
    for (const auto& [addr, cell] : cells_) r.total_patched_samples += cell.samples;
    return r;
  }

  Label read(const AddressSpec& a) override {
    const auto it = cells_.find(a);
    if (it == cells_.end()) {
      std::uint64_t& ord = unwritten_reads_[a];
      Rng rng = make_rng(params_.rng_seed, {AddressSpecHash{}(a), ord++, kUnwrittenTag});
      return static_cast<Label>(uniform_below(rng, static_cast<std::uint64_t>(params_.class_count)));
    }
    Cell& cell = it->second;
    if (params_.mode == NoiseMode::rank_assignment) return cell.ranking.front();

    Rng rng = make_rng(params_.rng_seed, {AddressSpecHash{}(a), cell.reads++, kReadTag});
    if (cell.last >= 0 && params_.repeat_prob > 0.0 && uniform01(rng) < params_.repeat_prob)
      return static_cast<Label>(cell.last);
    const Label out = cell.ranking[static_cast<std::size_t>(synthetic_rank_model(profile_, rng) - 1)];
    cell.last = out;
    return out;
  }

  ReadObservation read_counts(const AddressSpec& a, int n) override {
    const auto it = cells_.find(a);
    if (params_.mode != NoiseMode::rank_assignment || it == cells_.end()) return Backend::read_counts(a, n);
    if (n < 1) throw ConfigError("read count must be >= 1");
    ReadObservation obs;
    obs.counts.assign(static_cast<std::size_t>(params_.class_count), 0);
    obs.counts[it->second.ranking.front()] = static_cast<std::uint32_t>(n);
    obs.n = static_cast<std::uint32_t>(n);
    obs.tie_order = it->second.ranking;
    return obs;
  }

  // Latent ranking of a written address (empty if unwritten).
  std::vector<Label> ranking(const AddressSpec& a) const {
    const auto it = cells_.find(a);
    return it == cells_.end() ? std::vector<Label>{} : it->second.ranking;
  }

  std::size_t size() const { return cells_.size(); }

  nlohmann::json save() const {
    nlohmann::json j;
    j["backend"] = "synthetic";
    j["top1"] = params_.top1;
    j["class_count"] = params_.class_count;
    j["mode"] = std::string(to_string(params_.mode));
    j["rng_seed"] = params_.rng_seed;
    j["repeat_prob"] = params_.repeat_prob;
    j["baseline_accuracy"] = params_.baseline_accuracy;
    j["entries"] = sorted_entries();
    return j;
  }

  static NoisyChannel load(const nlohmann::json& j) {
    NoisyChannelParams p;
    p.top1 = j.at("top1").get<double>();
    p.class_count = j.at("class_count").get<int>();
    p.mode = parse_noise_mode(j.at("mode").get<std::string>());
    p.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    p.repeat_prob = j.value("repeat_prob", 0.0);
    p.baseline_accuracy = j.value("baseline_accuracy", 1.0);
    NoisyChannel ch(p);
    ch.write(entries_from_json(j.at("entries")));
    return ch;
  }

  static nlohmann::json entry_to_json(const AddressSpec& a, Label label, std::uint32_t samples) {
    return nlohmann::json::array({canonical_string(a), int(label), samples});
  }

  static WriteSet entries_from_json(const nlohmann::json& arr) {
    WriteSet ws;
    for (const auto& e : arr)
      ws.entries.push_back(WriteEntry{parse_address(e.at(0).get<std::string>()), static_cast<Label>(e.at(1).get<int>()),
                                      e.at(2).get<std::uint32_t>()});
    return ws;
  }

 private:
  static constexpr std::uint64_t kWriteTag = 0x57;
  static constexpr std::uint64_t kReadTag = 0x52;
  static constexpr std::uint64_t kUnwrittenTag = 0x55;

  struct Cell {
    Label label = 0;
    std::uint32_t samples = 0;
    std::vector<Label> ranking;
    std::uint64_t reads = 0;
    int last = -1;
  };

  nlohmann::json sorted_entries() const {
    std::vector<std::pair<AddressSpec, const Cell*>> v;
    v.reserve(cells_.size());
    for (const auto& [a, c] : cells_) v.emplace_back(a, &c);
    std::sort(v.begin(), v.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [a, c] : v) arr.push_back(entry_to_json(a, c->label, c->samples));
    return arr;
  }

  NoisyChannelParams params_;
  std::vector<double> profile_;
  std::unordered_map<AddressSpec, Cell, AddressSpecHash> cells_;
  std::unordered_map<AddressSpec, std::uint64_t, AddressSpecHash> unwritten_reads_;
};

// ---------------------------------------------------------------------------
// LearnableChannel: a stand-in for a trainable carrier model.
//
// Each address a has a difficulty d_a ~ LogNormal(mu, sigma) and a fixed
// uniform threshold u_a. After every write the model "learns" a iff
//   u_a < logistic(beta * s_a / d_a - gamma * L / C)
// where s_a is the address's current sample count and L the total patched
// load. Learned addresses read back their label, others a fixed wrong label.
// Baseline accuracy after training is base * (1 - degradation * L / (L + C)).
// ---------------------------------------------------------------------------
struct LearnableChannelParams {
  double capacity = 1.0e5;
  double mu = 0.5;
  double sigma = 1.0;
  double beta = 1.0;
  double gamma = 2.0;
  double baseline_accuracy = 0.99;
  double degradation = 0.05;
  int class_count = kDefaultClassCount;
  std::uint64_t rng_seed = 0;
  int epochs = 1;
};

class LearnableChannel : public Backend {
 public:
  explicit LearnableChannel(LearnableChannelParams params) : params_(params) {
    if (!(params_.capacity > 0.0)) throw ConfigError("capacity must be positive");
    if (params_.sigma < 0.0) throw ConfigError("sigma must be non-negative");
    if (params_.class_count < 2) throw ConfigError("need at least two classes");
    current_accuracy_ = params_.baseline_accuracy;
  }

  const LearnableChannelParams& params() const { return params_; }
  int class_count() const override { return params_.class_count; }
  void set_epochs(int e) override { params_.epochs = e; }

  TrainReport write(const WriteSet& ws) override {
    ws.validate(params_.class_count);
    TrainReport r;
    r.epochs = params_.epochs;
    r.baseline_accuracy_before = current_accuracy_;
    for (const auto& e : ws.entries) {
      auto it = cells_.find(e.address);
      if (it == cells_.end()) {
        it = cells_.emplace(e.address, make_cell(e.address)).first;
      } else {
        ++r.overwritten;
        load_ -= it->second.samples;
      }
      Cell& c = it->second;
      c.label = e.label;
      c.samples = e.sample_count;
      c.wrong = wrong_label(e.address, e.label);
      load_ += c.samples;
    }
    for (auto& [a, c] : cells_) c.learned = c.threshold < success_probability(c);
    current_accuracy_ = baseline_after(static_cast<double>(load_));
    r.baseline_accuracy_after = current_accuracy_;
    r.total_patched_samples = load_;
    return r;
  }

  Label read(const AddressSpec& a) override {
    const auto it = cells_.find(a);
    if (it == cells_.end()) {
      std::uint64_t& ord = unwritten_reads_[a];
      Rng rng = make_rng(params_.rng_seed, {AddressSpecHash{}(a), ord++, 0x55});
      return static_cast<Label>(uniform_below(rng, static_cast<std::uint64_t>(params_.class_count)));
    }
    return it->second.learned ? it->second.label : it->second.wrong;
  }

  // Current retrieval success probability of a written address.
  double success_probability(const AddressSpec& a) const {
    const auto it = cells_.find(a);
    if (it == cells_.end()) throw ConfigError("address not written");
    return success_probability(it->second);
  }

  double difficulty(const AddressSpec& a) const { return make_cell(a).difficulty; }

  std::uint64_t load() const { return load_; }
  double baseline_accuracy() const { return current_accuracy_; }

  double baseline_after(double load) const {
    return params_.baseline_accuracy * (1.0 - params_.degradation * load / (load + params_.capacity));
  }

  nlohmann::json save() const {
    nlohmann::json j;
    j["backend"] = "learnable";
    j["capacity"] = params_.capacity;
    j["mu"] = params_.mu;
    j["sigma"] = params_.sigma;
    j["beta"] = params_.beta;
    j["gamma"] = params_.gamma;
    j["baseline_accuracy"] = params_.baseline_accuracy;
    j["degradation"] = params_.degradation;
    j["class_count"] = params_.class_count;
    j["rng_seed"] = params_.rng_seed;
    j["epochs"] = params_.epochs;
    std::vector<std::pair<AddressSpec, const Cell*>> v;
    for (const auto& [a, c] : cells_) v.emplace_back(a, &c);
    std::sort(v.begin(), v.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [a, c] : v) arr.push_back(NoisyChannel::entry_to_json(a, c->label, c->samples));
    j["entries"] = std::move(arr);
    return j;
  }

  static LearnableChannel load(const nlohmann::json& j) {
    LearnableChannelParams p;
    p.capacity = j.value("capacity", p.capacity);
    p.mu = j.value("mu", p.mu);
    p.sigma = j.value("sigma", p.sigma);
    p.beta = j.value("beta", p.beta);
    p.gamma = j.value("gamma", p.gamma);
    p.baseline_accuracy = j.value("baseline_accuracy", p.baseline_accuracy);
    p.degradation = j.value("degradation", p.degradation);
    p.class_count = j.value("class_count", p.class_count);
    p.rng_seed = j.value("rng_seed", p.rng_seed);
    p.epochs = j.value("epochs", p.epochs);
    LearnableChannel ch(p);
    ch.write(NoisyChannel::entries_from_json(j.at("entries")));
    return ch;
  }

 private:
  struct Cell {
    Label label = 0;
    Label wrong = 0;
    std::uint32_t samples = 0;
    double difficulty = 1.0;
    double threshold = 0.0;
    bool learned = false;
  };

  Cell make_cell(const AddressSpec& a) const {
    Rng rng = make_rng(params_.rng_seed, {AddressSpecHash{}(a), 0x44});
    Cell c;
    c.difficulty = std::exp(params_.mu + params_.sigma * standard_normal(rng));
    c.threshold = uniform01(rng);
    return c;
  }

  Label wrong_label(const AddressSpec& a, Label truth) const {
    Rng rng = make_rng(params_.rng_seed, {AddressSpecHash{}(a), truth, 0x57});
    const auto k = uniform_below(rng, static_cast<std::uint64_t>(params_.class_count - 1));
    return static_cast<Label>(k >= truth ? k + 1 : k);
  }

  double success_probability(const Cell& c) const {
    const double x = params_.beta * c.samples / c.difficulty -
                     params_.gamma * static_cast<double>(load_) / params_.capacity;
    return 1.0 / (1.0 + std::exp(-x));
  }

  LearnableChannelParams params_;
  std::unordered_map<AddressSpec, Cell, AddressSpecHash> cells_;
  std::unordered_map<AddressSpec, std::uint64_t, AddressSpecHash> unwritten_reads_;
  std::uint64_t load_ = 0;
  double current_accuracy_ = 1.0;
};

// ---------------------------------------------------------------------------
// Replay and recording
// ---------------------------------------------------------------------------
struct TraceRecord {
  AddressSpec address;
  Label label = 0;
};

inline std::vector<TraceRecord> read_trace(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string addr;
    int label = -1;
    std::string extra;
    if (!(ls >> addr >> label) || (ls >> extra) || label < 0 || label > 255)
      throw FramingError("malformed trace record '" + line + "'");
    out.push_back(TraceRecord{parse_address(addr), static_cast<Label>(label)});
  }
  return out;
}

// Serves reads from a recorded trace, in order. Writes are rejected.
class ReplayChannel : public Backend {
 public:
  ReplayChannel(std::vector<TraceRecord> trace, int class_count = kDefaultClassCount)
      : trace_(std::move(trace)), class_count_(class_count) {}

  static ReplayChannel from_file(const std::filesystem::path& path, int class_count = kDefaultClassCount) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return ReplayChannel(read_trace(in), class_count);
  }

  int class_count() const override { return class_count_; }
  bool supports_incremental_write() const override { return false; }

  TrainReport write(const WriteSet&) override { throw BackendError("replay backend is read-only"); }

  Label read(const AddressSpec& a) override {
    if (cursor_ >= trace_.size()) throw BackendError("replay trace exhausted after " + std::to_string(cursor_) + " reads");
    const TraceRecord& r = trace_[cursor_];
    if (!(r.address == a))
      throw BackendError("replay trace diverges at record " + std::to_string(cursor_) + ": expected " +
                         canonical_string(r.address) + ", asked for " + canonical_string(a));
    ++cursor_;
    return r.label;
  }

  std::size_t position() const { return cursor_; }
  std::size_t size() const { return trace_.size(); }

 private:
  std::vector<TraceRecord> trace_;
  int class_count_;
  std::size_t cursor_ = 0;
};

// Forwards to another backend and logs every single read as a trace record.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(Backend& inner, std::ostream& trace) : inner_(inner), trace_(trace) {}

  int class_count() const override { return inner_.class_count(); }
  bool supports_incremental_write() const override { return inner_.supports_incremental_write(); }
  void set_epochs(int e) override { inner_.set_epochs(e); }
  TrainReport write(const WriteSet& ws) override { return inner_.write(ws); }

  Label read(const AddressSpec& a) override {
    const Label l = inner_.read(a);
    trace_ << canonical_string(a) << ' ' << int(l) << '\n';
    return l;
  }

 private:
  Backend& inner_;
  std::ostream& trace_;
};

}  // namespace covertex
