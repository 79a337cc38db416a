// covertex: command-line front end for the covert label-storage pipeline.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "covertex/covertex.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace covertex;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kBackend = 3, kRejected = 4 };

struct RunConfig {
  std::uint64_t seed = 1;
  int class_count = kDefaultClassCount;
  int bits_per_symbol = kDefaultBitsPerSymbol;
  std::string address_kind = "ood";
  int num_patches = 0;

  std::uint32_t samples_per_address = 20;
  bool dynamic = false;
  std::uint32_t initial_samples = 5;
  std::uint32_t increment = 5;
  std::uint32_t max_per_address = 160;
  int plateau_window = 3;
  int epochs = 1;

  std::string backend = "synthetic";
  double top1 = 1.0;
  std::string mode = "stochastic";
  double repeat_prob = 0.0;
  std::uint64_t backend_seed = 0;
  std::string state;
  std::string backend_addr;
  std::string backend_cmd;
  std::string trace;
  double capacity = 1.0e5;
  double mu = 0.5;
  double sigma = 1.0;
  double beta = 1.0;
  double gamma = 2.0;

  bool ecc = true;
  int ecc_block = 0;  // 0: chosen from top1
  int n_reads = 1;
  double smoothing = kDefaultSmoothing;
  double epsilon = 0.01;
  double delta = 0.0;
  std::string metric = "hamming";
};

// Registers a flag that also has a key in the JSON config. File values apply
// only where the flag was not given on the command line.
class Binder {
 public:
  explicit Binder(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* option(const std::string& flags, const std::string& key, T& field, const std::string& help) {
    CLI::Option* opt = app_->add_option(flags, field, help)->capture_default_str();
    keys_.insert(key);
    apply_.push_back([opt, key, &field](const json& j) {
      if (opt->count() == 0 && j.contains(key)) field = j.at(key).get<T>();
    });
    return opt;
  }

  CLI::Option* toggle(const std::string& name, const std::string& key, bool& field, const std::string& help) {
    CLI::Option* opt = app_->add_flag("--" + name + ",!--no-" + name, field, help);
    keys_.insert(key);
    apply_.push_back([opt, key, &field](const json& j) {
      if (opt->count() == 0 && j.contains(key)) field = j.at(key).get<bool>();
    });
    return opt;
  }

  void config_option(std::string& path) {
    app_->add_option("--config", path, "flat JSON run configuration; flags override its values");
  }

  void apply(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
    for (const auto& [k, v] : j.items())
      if (!keys_.count(k)) throw ConfigError("config key '" + k + "' is not used by this command");
    try {
      for (auto& f : apply_) f(j);
    } catch (const json::exception& e) {
      throw ConfigError("config " + path + ": " + e.what());
    }
  }

 private:
  CLI::App* app_;
  std::set<std::string> keys_;
  std::vector<std::function<void(const json&)>> apply_;
};

void bind_symbols(Binder& b, RunConfig& c) {
  b.option("--seed", "seed", c.seed, "shared secret seeding the address sequence");
  b.option("--classes", "class_count", c.class_count, "output classes of the carrier model");
  b.option("--bits", "bits_per_symbol", c.bits_per_symbol, "payload bits per cell");
}

void bind_addresses(Binder& b, RunConfig& c) {
  b.option("--kind", "address_kind", c.address_kind, "address kind: ood or covert")
      ->check(CLI::IsMember({"ood", "covert"}));
  b.option("--patches", "num_patches", c.num_patches, "patches per covert address (1 or 2; 0 for ood)");
}

void bind_backend(Binder& b, RunConfig& c) {
  b.option("--backend", "backend", c.backend, "synthetic, learnable, external or replay")
      ->check(CLI::IsMember({"synthetic", "learnable", "external", "replay"}));
  b.option("--state", "state", c.state, "JSON state file of a synthetic backend");
  b.option("--top1", "top1", c.top1, "synthetic top-1 accuracy");
  b.option("--mode", "mode", c.mode, "synthetic noise mode")->check(CLI::IsMember({"stochastic", "rank-assignment"}));
  b.option("--repeat-prob", "repeat_prob", c.repeat_prob, "probability a read repeats the previous outcome");
  b.option("--backend-seed", "backend_seed", c.backend_seed, "seed of the synthetic backend");
  b.option("--capacity", "capacity", c.capacity, "learnable backend capacity C");
  b.option("--mu", "mu", c.mu, "learnable backend log-difficulty mean");
  b.option("--sigma", "sigma", c.sigma, "learnable backend log-difficulty spread");
  b.option("--beta", "beta", c.beta, "learnable backend steepness");
  b.option("--gamma", "gamma", c.gamma, "learnable backend contention weight");
  b.option("--backend-addr", "backend_addr", c.backend_addr,
           "host:port of an external backend (default $COVERTEX_BACKEND_ADDR)");
  b.option("--backend-cmd", "backend_cmd", c.backend_cmd, "command speaking the backend protocol on stdio");
  b.option("--trace", "trace", c.trace, "replay trace for the replay backend");
}

void bind_addressing(Binder& b, RunConfig& c) {
  bind_symbols(b, c);
  bind_addresses(b, c);
}

int effective_patches(const RunConfig& c) {
  if (c.address_kind == "ood") return 0;
  return c.num_patches == 0 ? 2 : c.num_patches;
}

AddressKind kind_of(const RunConfig& c) { return c.address_kind == "ood" ? AddressKind::ood : AddressKind::covert; }

std::vector<AddressSpec> generated_addresses(const RunConfig& c, std::uint64_t count) {
  return address_sequence(kind_of(c), c.seed, count, effective_patches(c));
}

struct OpenBackend {
  std::unique_ptr<Backend> backend;
  std::function<void()> save;  // persists synthetic state, no-op otherwise
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FramingError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(1) << '\n';
}

OpenBackend open_backend(const RunConfig& c) {
  OpenBackend ob;
  ob.save = [] {};
  const bool have_state = !c.state.empty() && fs::exists(c.state);
  if (c.backend == "synthetic") {
    std::unique_ptr<NoisyChannel> ch;
    if (have_state) {
      const json j = read_json_file(c.state);
      if (j.value("backend", "") != "synthetic") throw ConfigError(c.state + " is not a synthetic backend state");
      ch = std::make_unique<NoisyChannel>(NoisyChannel::load(j));
    } else {
      NoisyChannelParams p;
      p.top1 = c.top1;
      p.class_count = c.class_count;
      p.mode = parse_noise_mode(c.mode);
      p.rng_seed = c.backend_seed;
      p.repeat_prob = c.repeat_prob;
      ch = std::make_unique<NoisyChannel>(p);
    }
    NoisyChannel* raw = ch.get();
    if (!c.state.empty()) ob.save = [raw, path = c.state] { write_json_file(path, raw->save()); };
    ob.backend = std::move(ch);
  } else if (c.backend == "learnable") {
    std::unique_ptr<LearnableChannel> ch;
    if (have_state) {
      const json j = read_json_file(c.state);
      if (j.value("backend", "") != "learnable") throw ConfigError(c.state + " is not a learnable backend state");
      ch = std::make_unique<LearnableChannel>(LearnableChannel::load(j));
    } else {
      LearnableChannelParams p;
      p.capacity = c.capacity;
      p.mu = c.mu;
      p.sigma = c.sigma;
      p.beta = c.beta;
      p.gamma = c.gamma;
      p.class_count = c.class_count;
      p.rng_seed = c.backend_seed;
      p.epochs = c.epochs;
      ch = std::make_unique<LearnableChannel>(p);
    }
    LearnableChannel* raw = ch.get();
    if (!c.state.empty()) ob.save = [raw, path = c.state] { write_json_file(path, raw->save()); };
    ob.backend = std::move(ch);
  } else if (c.backend == "external") {
    if (!c.backend_cmd.empty())
      ob.backend = std::make_unique<ExternalBackend>(ExternalBackend::spawn(c.backend_cmd, c.class_count));
    else if (!c.backend_addr.empty())
      ob.backend = std::make_unique<ExternalBackend>(ExternalBackend::connect(c.backend_addr, c.class_count));
    else
      ob.backend = std::make_unique<ExternalBackend>(ExternalBackend::from_env(c.class_count));
  } else {
    if (c.trace.empty()) throw ConfigError("replay backend needs --trace");
    ob.backend = std::make_unique<ReplayChannel>(ReplayChannel::from_file(c.trace, c.class_count));
  }
  return ob;
}

bool has_image_extension(const std::string& path) {
  const auto ext = fs::path(path).extension().string();
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

json train_json(const TrainReport& r) {
  return json{{"baseline_accuracy_before", r.baseline_accuracy_before},
              {"baseline_accuracy_after", r.baseline_accuracy_after},
              {"epochs", r.epochs},
              {"total_patched_samples", r.total_patched_samples},
              {"overwritten", r.overwritten}};
}

json header_json(const FrameHeader& h) {
  return json{{"payload_bits", h.payload_bits}, {"bits_per_symbol", h.bits_per_symbol}, {"ecc_block", h.ecc_block}};
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------
struct AddrgenArgs {
  std::uint64_t count = 0;
  std::uint64_t first = 0;
  std::string out;
};

int run_addrgen(const RunConfig& c, const AddrgenArgs& a) {
  const auto addrs = address_sequence(kind_of(c), c.seed, a.count, effective_patches(c), a.first);
  if (a.out.empty() || a.out == "-") {
    write_address_list(std::cout, addrs);
  } else {
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write " + a.out);
    write_address_list(out, addrs);
  }
  return kOk;
}

struct EncodeArgs {
  std::string in;
  std::string out;
  bool image = false;
};

int run_encode(const RunConfig& c, const EncodeArgs& a) {
  std::vector<std::uint8_t> payload;
  if (a.image || has_image_extension(a.in)) {
    if (c.bits_per_symbol != kPixelSymbolBits) throw ConfigError("image payloads use 3 bits per cell");
    payload = image_payload(read_pnm(a.in));
  } else {
    payload = read_file_bytes(a.in);
  }
  TransmitOptions to;
  to.class_count = c.class_count;
  to.bits_per_symbol = c.bits_per_symbol;
  to.ecc_block = c.ecc ? (c.ecc_block > 0 ? c.ecc_block : select_config(c.top1).data_cells) : 0;
  const Transmission tx = build_transmission(payload, to);
  write_stream_file(a.out, StreamFile{c.class_count, tx.header, tx.cells});
  std::cout << json{{"payload_bytes", payload.size()},
                    {"header", header_json(tx.header)},
                    {"header_cells", header_cell_count(c.class_count)},
                    {"data_cells", tx.data.size()},
                    {"cells", tx.cells.size()}}
                   .dump()
            << '\n';
  return kOk;
}

struct StoreArgs {
  std::string message;
  std::string addresses;
  std::string writeset_out;
};

std::vector<AddressSpec> addresses_for(const RunConfig& c, const std::string& file, std::size_t needed) {
  if (!file.empty()) {
    auto list = read_address_list(fs::path(file));
    if (list.size() < needed)
      throw ConfigError(file + " holds " + std::to_string(list.size()) + " addresses, " + std::to_string(needed) +
                        " needed");
    return list;
  }
  return generated_addresses(c, needed);
}

int run_store(const RunConfig& c, const StoreArgs& a) {
  const StreamFile sf = read_stream_file(a.message);
  if (sf.class_count != c.class_count) throw ConfigError("stream was encoded for a different class count");
  const auto addrs = addresses_for(c, a.addresses, sf.cells.size());
  OpenBackend ob = open_backend(c);
  ob.backend->set_epochs(c.epochs);

  json out;
  WriteSet final_set;
  if (c.dynamic) {
    DynamicPolicy pol;
    pol.initial_samples = c.initial_samples;
    pol.increment = c.increment;
    pol.max_per_address = c.max_per_address;
    pol.plateau_window = c.plateau_window;
    pol.round_epochs = c.epochs;
    const DynamicResult r = write_dynamic(*ob.backend, sf.cells, addrs, pol);
    json rounds = json::array();
    for (const auto& h : r.history)
      rounds.push_back(json{{"round", h.round},
                            {"total_samples", h.total_samples},
                            {"written_entries", h.written_entries},
                            {"failing", h.failing},
                            {"accuracy", h.accuracy},
                            {"train", train_json(h.train)}});
    out["rounds"] = std::move(rounds);
    out["stop"] = std::string(to_string(r.stop));
    out["unresolved"] = r.unresolved;
    out["train"] = r.history.empty() ? json{} : train_json(r.history.back().train);
    final_set = r.final_set;
  } else {
    final_set = plan_static(sf.cells, addrs, StaticPolicy{c.samples_per_address});
    const TrainReport tr = ob.backend->write(final_set);
    out["train"] = train_json(tr);
    out["neural_channel"] = (tr.baseline_accuracy_before - tr.baseline_accuracy_after) <= c.epsilon;
  }
  out["cells"] = sf.cells.size();
  out["total_samples"] = final_set.total_samples();
  if (!a.writeset_out.empty()) {
    std::ofstream ws(a.writeset_out);
    if (!ws) throw IoError("cannot write " + a.writeset_out);
    write_writeset(ws, final_set);
  }
  ob.save();
  std::cout << out.dump() << '\n';
  return kOk;
}

struct FetchArgs {
  std::string addresses;
  std::string out;
  std::string expect;
  std::string record;
  bool strict = false;
};

// Data symbols a reference file stands for: a stream file, an image or raw bytes.
SymbolStream expected_symbols(const RunConfig& c, const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 4 && bytes[0] == 'C' && bytes[1] == 'V' && bytes[2] == 'T' && bytes[3] == 'X') {
    const StreamFile sf = parse_stream(bytes);
    ReceiveOptions ro;
    ro.class_count = sf.class_count;
    ro.use_cec = false;
    return recover(std::span<const Label>(sf.cells), ro).data;
  }
  const std::vector<std::uint8_t> payload = has_image_extension(path) ? image_payload(read_pnm(path)) : bytes;
  return encode_bits(payload, c.bits_per_symbol, c.class_count).payload;
}

int run_fetch(const RunConfig& c, const FetchArgs& a) {
  OpenBackend ob = open_backend(c);
  std::ofstream trace_out;
  std::unique_ptr<RecordingBackend> rec;
  Backend* backend = ob.backend.get();
  if (!a.record.empty()) {
    trace_out.open(a.record);
    if (!trace_out) throw IoError("cannot write " + a.record);
    rec = std::make_unique<RecordingBackend>(*backend, trace_out);
    backend = rec.get();
  }

  const CecConfig sel = select_config(c.top1);
  ReceiveOptions ro;
  ro.class_count = c.class_count;
  ro.use_cec = c.ecc;
  ro.top_k = sel.top_k;
  ro.depth_limit = sel.depth_limit;

  ro.smoothing = c.smoothing;

  AddressSource source;
  if (!a.addresses.empty()) {
    auto list = std::make_shared<std::vector<AddressSpec>>(read_address_list(fs::path(a.addresses)));
    source = [list](std::size_t n) {
      return std::vector<AddressSpec>(list->begin(), list->begin() + static_cast<std::ptrdiff_t>(std::min(n, list->size())));
    };
  } else {
    source = [&c](std::size_t n) { return generated_addresses(c, n); };
  }
  Reception rx;
  try {
    rx = receive(*backend, source, c.n_reads, ro);
  } catch (const FramingError& e) {
    if (!a.strict) throw;
    // nothing decodable came back: a rejected reception
    ob.save();
    std::cout << json{{"accepted", false}, {"error", e.what()}}.dump() << '\n';
    return kRejected;
  }
  ob.save();

  if (!a.out.empty()) {
    const auto img = has_image_extension(a.out) ? payload_image(rx.bytes) : std::nullopt;
    if (img) write_pnm(a.out, *img);
    else write_file_bytes(a.out, rx.bytes);
  }

  json out{{"header", header_json(rx.header)},
           {"data_cells", rx.data.size()},
           {"payload_bytes", rx.bytes.size()},
           {"reserved_replaced", rx.reserved_replaced}};
  bool accepted = true;
  if (rx.correction) {
    out["blocks"] = rx.correction->permutations.size();
    out["verified_blocks"] = rx.correction->verified();
    out["mean_permutations"] = rx.correction->mean_permutations();
  }
  if (!a.expect.empty()) {
    const SymbolStream sent = expected_symbols(c, a.expect);
    if (sent.size() != rx.data.size()) {
      out["reception"] = json{{"metric", c.metric}, {"error", "length mismatch"}};
      accepted = false;
    } else {
      const ReceptionReport rr = reception_check(sent, rx.data, c.metric, c.delta);
      out["reception"] = json{{"metric", std::string(to_string(rr.metric))},
                              {"distance", rr.distance},
                              {"threshold", rr.threshold},
                              {"accepted", rr.accepted},
                              {"ser", symbol_error_rate(sent, rx.data)}};
      accepted = rr.accepted;
    }
  } else if (rx.correction) {
    accepted = rx.correction->verified() == rx.correction->permutations.size();
  }
  out["accepted"] = accepted;
  std::cout << out.dump() << '\n';
  return (a.strict && !accepted) ? kRejected : kOk;
}

struct SimulateArgs {
  std::string scenario;
  std::string out;
  int trials = 8;
  unsigned threads = 0;
  std::size_t cells = 10000;
  int k = 4;
  std::vector<double> levels = {0.95, 0.90, 0.85, 0.80};
  double p = 0.6;
  std::string distractors = "uniform";
  std::vector<int> n_values = {1, 3, 10, 20, 50};
  std::size_t mc_trials = 100000;
  std::string e2e_backend = "noisy";
  std::vector<std::size_t> sizes = {10000};
};

int run_simulate(const RunConfig& c, const SimulateArgs& a) {
  std::ostringstream csv;
  if (a.scenario == "cec-vs-rs") {
    CecVsRsParams p;
    p.top1_levels = a.levels;
    p.message_cells = a.cells;
    p.data_cells = a.k;
    p.trials = a.trials;
    p.seed = c.seed;
    p.threads = a.threads;
    write_csv(csv, bench_cec_vs_rs(p));
  } else if (a.scenario == "multiread") {
    MultireadParams p;
    p.top1 = a.p;
    p.model = parse_distractor_model(a.distractors);
    p.n_values = a.n_values;
    p.trials = a.mc_trials;
    p.seed = c.seed;
    p.class_count = c.class_count;
    p.threads = a.threads;
    write_csv(csv, mc_multiread(p));
  } else {
    EndToEndParams p;
    p.backend = parse_synthetic_kind(a.e2e_backend);
    p.noisy.top1 = c.top1;
    p.noisy.mode = parse_noise_mode(c.mode);
    p.noisy.class_count = c.class_count;
    p.noisy.repeat_prob = c.repeat_prob;
    p.learnable.capacity = c.capacity;
    p.learnable.mu = c.mu;
    p.learnable.sigma = c.sigma;
    p.learnable.beta = c.beta;
    p.learnable.gamma = c.gamma;
    p.learnable.class_count = c.class_count;
    p.message_cells = a.sizes;
    p.n_reads = c.n_reads;
    p.cec = c.ecc;
    p.smoothing = c.smoothing;
    p.samples_per_address = c.samples_per_address;
    p.seed = c.seed;
    p.threads = a.threads;
    write_csv(csv, bench_end_to_end(p));
  }
  if (a.out.empty() || a.out == "-") {
    std::cout << csv.str();
  } else {
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write " + a.out);
    out << csv.str();
  }
  return kOk;
}

struct ReportArgs {
  bool ncc = false;
  double params = 0;
  double prunable = 0.5;
  double bits = 32;
};

int run_report(const RunConfig& c, const ReportArgs& a) {
  json out;
  if (a.ncc) {
    out["ncc_upper_bound_bits"] = ncc_upper_bound(a.params, a.prunable, a.bits);
    out["params"] = a.params;
    out["prunable_fraction"] = a.prunable;
    out["bits_per_param"] = a.bits;
  }
  const CecConfig cfg = select_config(c.top1);
  out["cec"] = json{{"top1", c.top1},
                    {"data_cells", cfg.data_cells},
                    {"crc_bits", cfg.crc_bits},
                    {"top_k", cfg.top_k},
                    {"depth_limit", cfg.depth_limit},
                    {"aliasing_probability", aliasing_probability(cfg.crc_bits)},
                    {"rate", static_cast<double>(cfg.data_cells) / cfg.block_cells()}};
  std::cout << out.dump() << '\n';
  return kOk;
}

struct RenderArgs {
  std::string address;
  std::string shape = "28x28x1";
  std::string background;
  std::uint64_t background_seed = 0;
  std::string out;
};

ImageShape parse_shape(const std::string& s) {
  ImageShape sh;
  char x1 = 0, x2 = 0;
  std::istringstream in(s);
  if (!(in >> sh.width >> x1 >> sh.height) || x1 != 'x') throw ConfigError("shape must be WxH or WxHxC");
  if (in >> x2) {
    if (x2 != 'x' || !(in >> sh.channels)) throw ConfigError("shape must be WxH or WxHxC");
  }
  if (sh.width <= 0 || sh.height <= 0 || (sh.channels != 1 && sh.channels != 3))
    throw ConfigError("bad image shape " + s);
  return sh;
}

int run_render(const RenderArgs& a) {
  const AddressSpec spec = parse_address(a.address);
  ImageShape shape = parse_shape(a.shape);
  ImageBuffer img;
  if (spec.kind == AddressKind::ood) {
    img = render(spec, shape);
  } else if (!a.background.empty()) {
    ImageBuffer bg = read_pnm(a.background);
    shape = bg.shape();
    img = render(spec, shape, LabeledImage{std::move(bg), covert_pattern(spec).background_class});
  } else {
    img = render(spec, shape, background_for(spec, shape, a.background_seed));
  }
  write_pnm(a.out, img);
  return kOk;
}

struct ServeArgs {
  std::string listen;
};

int run_serve(const RunConfig& c, const ServeArgs& a) {
  OpenBackend ob = open_backend(c);
  if (c.backend == "external") throw ConfigError("serve needs a local backend");
  ServeHooks hooks;
  if (c.backend == "synthetic" || c.backend == "learnable") {
    hooks.reset = [&] {
      RunConfig fresh = c;
      fresh.state.clear();
      ob.backend = open_backend(fresh).backend;
    };
  }
  struct Proxy : Backend {
    std::unique_ptr<Backend>& b;
    explicit Proxy(std::unique_ptr<Backend>& x) : b(x) {}
    int class_count() const override { return b->class_count(); }
    TrainReport write(const WriteSet& ws) override { return b->write(ws); }
    Label read(const AddressSpec& addr) override { return b->read(addr); }
    ReadObservation read_counts(const AddressSpec& addr, int n) override { return b->read_counts(addr, n); }
    void set_epochs(int e) override { b->set_epochs(e); }
  } proxy(ob.backend);

  if (a.listen.empty()) {
    FdLineStream io(0, 1, false);
    serve_protocol(proxy, io, hooks);
    return kOk;
  }
  const auto colon = a.listen.rfind(':');
  if (colon == std::string::npos) throw ConfigError("--listen expects host:port");
  const int port = std::stoi(a.listen.substr(colon + 1));
  const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  if (srv < 0) throw IoError("socket failed");
  int one = 1;
  ::setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  const std::string host = a.listen.substr(0, colon);
  if (::inet_pton(AF_INET, host.empty() ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1)
    throw ConfigError("--listen host must be an IPv4 address");
  if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(srv, 1) != 0) {
    ::close(srv);
    throw IoError("cannot listen on " + a.listen);
  }
  std::cerr << "listening on " << a.listen << '\n';
  for (;;) {
    const int fd = ::accept(srv, nullptr, nullptr);
    if (fd < 0) continue;
    FdLineStream io(fd, fd);
    serve_protocol(proxy, io, hooks);
    ob.save();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covertex: store and recover payloads in the label space of a classifier"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  RunConfig cfg;
  std::string config_path;
  std::vector<std::unique_ptr<Binder>> binders;
  auto binder_for = [&](CLI::App* sub) {
    binders.push_back(std::make_unique<Binder>(sub));
    binders.back()->config_option(config_path);
    return binders.back().get();
  };
  std::function<int()> action;

  AddrgenArgs addrgen;
  {
    auto* sub = app.add_subcommand("addrgen", "write the canonical address list");
    Binder* b = binder_for(sub);
    bind_addressing(*b, cfg);
    sub->add_option("--count", addrgen.count, "number of addresses")->required();
    sub->add_option("--first", addrgen.first, "index of the first address")->capture_default_str();
    sub->add_option("--out", addrgen.out, "output file (default stdout)");
    sub->callback([&, b] {
      b->apply(config_path);
      action = [&] { return run_addrgen(cfg, addrgen); };
    });
  }

  EncodeArgs encode;
  {
    auto* sub = app.add_subcommand("encode", "turn a payload file into a symbol stream file");
    Binder* b = binder_for(sub);
    bind_symbols(*b, cfg);
    sub->add_option("--in", encode.in, "payload: any file, or a PGM/PPM image")->required();
    sub->add_option("--out", encode.out, "symbol stream file")->required();
    sub->add_flag("--image", encode.image, "treat the input as a PGM/PPM image (default by extension)");
    b->toggle("ecc", "ecc", cfg.ecc, "CRC-framed blocks for combinatorial correction");
    b->option("--ecc-block", "ecc_block", cfg.ecc_block, "data cells per CRC block (0: chosen from --top1)");
    b->option("--top1", "top1", cfg.top1, "expected channel top-1 accuracy");
    sub->callback([&, b] {
      b->apply(config_path);
      action = [&] { return run_encode(cfg, encode); };
    });
  }

  StoreArgs store;
  {
    auto* sub = app.add_subcommand("store", "write a symbol stream into a backend");
    Binder* b = binder_for(sub);
    bind_addressing(*b, cfg);
    bind_backend(*b, cfg);
    sub->add_option("--message", store.message, "symbol stream file from encode")->required();
    sub->add_option("--addresses", store.addresses, "address list (default: generated from --seed)");
    sub->add_option("--writeset-out", store.writeset_out, "save the final write set");
    b->option("--samples", "samples_per_address", cfg.samples_per_address, "static samples per address");
    b->toggle("dynamic", "dynamic", cfg.dynamic, "incremental per-address allocation");
    b->option("--s0", "initial_samples", cfg.initial_samples, "dynamic: initial samples per address");
    b->option("--increment", "increment", cfg.increment, "dynamic: samples added per failing address");
    b->option("--max-per-address", "max_per_address", cfg.max_per_address, "dynamic: per-address cap");
    b->option("--plateau-window", "plateau_window", cfg.plateau_window, "dynamic: rounds without improvement");
    b->option("--epochs", "epochs", cfg.epochs, "training epochs per write");
    b->option("--epsilon", "epsilon", cfg.epsilon, "allowed baseline accuracy drop");
    sub->callback([&, b] {
      b->apply(config_path);
      action = [&] { return run_store(cfg, store); };
    });
  }

  FetchArgs fetch;
  {
    auto* sub = app.add_subcommand("fetch", "read a message back from a backend");
    Binder* b = binder_for(sub);
    bind_addressing(*b, cfg);
    bind_backend(*b, cfg);
    sub->add_option("--addresses", fetch.addresses, "address list (default: generated from --seed)");
    sub->add_option("--out", fetch.out, "recovered payload (PGM/PPM extension writes the image)");
    sub->add_option("--expect", fetch.expect, "reference: stream file, image or raw payload");
    sub->add_option("--record", fetch.record, "write every single read as a replay trace");
    sub->add_flag("--strict", fetch.strict, "exit 4 when the reception is rejected");
    b->option("--n-reads", "n_reads", cfg.n_reads, "reads per address");
    b->toggle("cec", "ecc", cfg.ecc, "combinatorial error correction on CRC-framed streams");
    b->option("--smoothing", "smoothing", cfg.smoothing, "additive smoothing of read counts");
    b->option("--metric", "metric", cfg.metric, "reception metric")->check(CLI::IsMember({"hamming", "mape"}));
    b->option("--delta", "delta", cfg.delta, "reception threshold");
    sub->callback([&, b] {
      b->apply(config_path);
      action = [&] { return run_fetch(cfg, fetch); };
    });
  }

  SimulateArgs sim;
  {
    auto* sub = app.add_subcommand("simulate", "Monte Carlo scenarios, CSV output");
    Binder* b = binder_for(sub);
    b->option("--seed", "seed", cfg.seed, "simulation seed");
    b->option("--classes", "class_count", cfg.class_count, "output classes");
    sub->add_option("--scenario", sim.scenario, "cec-vs-rs, multiread or end-to-end")
        ->required()
        ->check(CLI::IsMember({"cec-vs-rs", "multiread", "end-to-end"}));
    sub->add_option("--out", sim.out, "CSV file (default stdout)");
    sub->add_option("--threads", sim.threads, "worker threads (0: all cores)")->capture_default_str();
    sub->add_option("--trials", sim.trials, "cec-vs-rs: trials per level")->capture_default_str();
    sub->add_option("--cells", sim.cells, "cec-vs-rs: data cells per trial")->capture_default_str();
    sub->add_option("--k", sim.k, "cec-vs-rs: data cells per CRC block")->capture_default_str();
    sub->add_option("--levels", sim.levels, "cec-vs-rs: top-1 levels")->capture_default_str();
    sub->add_option("--p", sim.p, "multiread: true-label probability")->capture_default_str();
    sub->add_option("--distractors", sim.distractors, "multiread: uniform or geometric")
        ->check(CLI::IsMember({"uniform", "geometric"}))
        ->capture_default_str();
    sub->add_option("--n-values", sim.n_values, "multiread: read counts")->capture_default_str();
    sub->add_option("--mc-trials", sim.mc_trials, "multiread: trials per read count")->capture_default_str();
    sub->add_option("--e2e-backend", sim.e2e_backend, "end-to-end: noisy or learnable")
        ->check(CLI::IsMember({"noisy", "learnable"}))
        ->capture_default_str();
    sub->add_option("--sizes", sim.sizes, "end-to-end: message sizes in cells")->capture_default_str();
    b->option("--top1", "top1", cfg.top1, "end-to-end: synthetic top-1 accuracy");
    b->option("--mode", "mode", cfg.mode, "end-to-end: noise mode")->check(CLI::IsMember({"stochastic", "rank-assignment"}));
    b->option("--repeat-prob", "repeat_prob", cfg.repeat_prob, "end-to-end: read repetition probability");
    b->option("--n-reads", "n_reads", cfg.n_reads, "end-to-end: reads per address");
    b->toggle("cec", "ecc", cfg.ecc, "end-to-end: CRC framing and correction");
    b->option("--samples", "samples_per_address", cfg.samples_per_address, "end-to-end: samples per address");
    b->option("--capacity", "capacity", cfg.capacity, "end-to-end learnable: capacity C");
    b->option("--mu", "mu", cfg.mu, "end-to-end learnable: log-difficulty mean");
    b->option("--sigma", "sigma", cfg.sigma, "end-to-end learnable: log-difficulty spread");
    b->option("--beta", "beta", cfg.beta, "end-to-end learnable: steepness");
    b->option("--gamma", "gamma", cfg.gamma, "end-to-end learnable: contention weight");
    sub->callback([&, b] {
      b->apply(config_path);
      action = [&] { return run_simulate(cfg, sim); };
    });
  }

  ReportArgs report;
  {
    auto* sub = app.add_subcommand("report", "capacity and coding numbers");
    Binder* b = binder_for(sub);
    sub->add_flag("--ncc", report.ncc, "white-box capacity upper bound");
    sub->add_option("--params", report.params, "total model parameters")->capture_default_str();
    sub->add_option("--prunable", report.prunable, "prunable fraction of parameters")->capture_default_str();
    sub->add_option("--bits-per-param", report.bits, "bits stored per spare parameter")->capture_default_str();
    b->option("--top1", "top1", cfg.top1, "channel top-1 accuracy for the CEC configuration");
    sub->callback([&, b] {
      b->apply(config_path);
      action = [&] { return run_report(cfg, report); };
    });
  }

  RenderArgs rend;
  {
    auto* sub = app.add_subcommand("render", "render one address to a PGM/PPM image");
    sub->add_option("--address", rend.address, "canonical address")->required();
    sub->add_option("--shape", rend.shape, "WxH or WxHxC")->capture_default_str();
    sub->add_option("--background", rend.background, "background image for covert addresses");
    sub->add_option("--background-seed", rend.background_seed, "seed of the generated background")
        ->capture_default_str();
    sub->add_option("--out", rend.out, "output image")->required();
    sub->callback([&] { action = [&] { return run_render(rend); }; });
  }

  ServeArgs serve;
  {
    auto* sub = app.add_subcommand("serve", "expose a local backend over the line protocol");
    Binder* b = binder_for(sub);
    bind_symbols(*b, cfg);
    bind_backend(*b, cfg);
    sub->add_option("--listen", serve.listen, "host:port (default: stdin/stdout)");
    sub->callback([&, b] {
      b->apply(config_path);
      action = [&] { return run_serve(cfg, serve); };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const FramingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << '\n';
    return kBackend;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
}
