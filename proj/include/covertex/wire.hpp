#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "covertex/address_space.hpp"
#include "covertex/channel.hpp"
#include "covertex/error.hpp"

namespace covertex {

// ---------------------------------------------------------------------------
// Line transport
// ---------------------------------------------------------------------------
class LineStream {
 public:
  virtual ~LineStream() = default;
  // false on end of stream
  virtual bool read_line(std::string& line) = 0;
  virtual void write_line(std::string_view line) = 0;
};

class FdLineStream : public LineStream {
 public:
  FdLineStream(int in_fd, int out_fd, bool owns = true) : in_(in_fd), out_(out_fd), owns_(owns) {}
  FdLineStream(const FdLineStream&) = delete;
  FdLineStream& operator=(const FdLineStream&) = delete;
  ~FdLineStream() override {
    if (!owns_) return;
    ::close(in_);
    if (out_ != in_) ::close(out_);
  }

  bool read_line(std::string& line) override {
    line.clear();
    for (;;) {
      const auto nl = buf_.find('\n', pos_);
      if (nl != std::string::npos) {
        line.assign(buf_, pos_, nl - pos_);
        pos_ = nl + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
      }
      buf_.erase(0, pos_);
      pos_ = 0;
      char chunk[4096];
      const ssize_t got = ::read(in_, chunk, sizeof chunk);
      if (got < 0 && errno == EINTR) continue;
      if (got < 0) throw BackendError(std::string("read from backend failed: ") + std::strerror(errno));
      if (got == 0) {
        if (buf_.empty()) return false;
        line.swap(buf_);
        return true;
      }
      buf_.append(chunk, static_cast<std::size_t>(got));
    }
  }

  void write_line(std::string_view line) override {
    std::string data(line);
    data.push_back('\n');
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(out_, data.data() + off, data.size() - off);
      if (n < 0 && errno == EINTR) continue;
      if (n < 0) throw BackendError(std::string("write to backend failed: ") + std::strerror(errno));
      off += static_cast<std::size_t>(n);
    }
  }

 private:
  int in_;
  int out_;
  bool owns_;
  std::string buf_;
  std::size_t pos_ = 0;
};

// "host:port" -> connected socket
inline int connect_tcp(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size())
    throw ConfigError("backend address must be host:port, got '" + spec + "'");
  const std::string host = spec.substr(0, colon), port = spec.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw BackendError("cannot resolve " + spec + ": " + ::gai_strerror(rc));
  int fd = -1;
  for (addrinfo* p = res; p; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw BackendError("cannot connect to " + spec);
  return fd;
}

// Runs `command` through /bin/sh with its stdin/stdout connected to the
// returned stream.
class ChildProcessStream : public LineStream {
 public:
  explicit ChildProcessStream(const std::string& command) {
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw BackendError("pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw BackendError("pipe failed");
    }
    pid_ = ::fork();
    if (pid_ < 0) throw BackendError("fork failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], 0);
      ::dup2(from_child[1], 1);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::signal(SIGPIPE, SIG_IGN);
    io_ = std::make_unique<FdLineStream>(from_child[0], to_child[1]);
  }

  ~ChildProcessStream() override {
    io_.reset();  // closes the child's stdin
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }

  bool read_line(std::string& line) override { return io_->read_line(line); }
  void write_line(std::string_view line) override { io_->write_line(line); }

 private:
  pid_t pid_ = -1;
  std::unique_ptr<FdLineStream> io_;
};

inline std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------
inline constexpr int kProtocolVersion = 1;

class ExternalBackend : public Backend {
 public:
  explicit ExternalBackend(std::unique_ptr<LineStream> io, int class_count = kDefaultClassCount)
      : io_(std::move(io)), class_count_(class_count) {
    const auto w = request("HELLO " + std::to_string(kProtocolVersion));
    if (w.size() != 2 || w[0] != "OK" || w[1] != std::to_string(kProtocolVersion))
      throw BackendError("backend does not speak protocol version " + std::to_string(kProtocolVersion));
  }

  static ExternalBackend connect(const std::string& host_port, int class_count = kDefaultClassCount) {
    const int fd = connect_tcp(host_port);
    return ExternalBackend(std::make_unique<FdLineStream>(fd, fd), class_count);
  }

  static ExternalBackend spawn(const std::string& command, int class_count = kDefaultClassCount) {
    return ExternalBackend(std::make_unique<ChildProcessStream>(command), class_count);
  }

  // Address from COVERTEX_BACKEND_ADDR.
  static ExternalBackend from_env(int class_count = kDefaultClassCount) {
    const char* v = std::getenv("COVERTEX_BACKEND_ADDR");
    if (!v || !*v) throw ConfigError("COVERTEX_BACKEND_ADDR is not set");
    return connect(v, class_count);
  }

  int class_count() const override { return class_count_; }
  void set_epochs(int e) override { epochs_ = e; }

  void reset() { expect_ok(request("RESET"), "RESET"); }

  TrainReport write(const WriteSet& ws) override {
    ws.validate(class_count_);
    io_->write_line("WRITE " + std::to_string(ws.entries.size()));
    for (const auto& e : ws.entries)
      io_->write_line("S " + canonical_string(e.address) + ' ' + std::to_string(e.label) + ' ' +
                      std::to_string(e.sample_count));
    TrainReport r = parse_trained(request("TRAIN " + std::to_string(epochs_)));
    r.epochs = epochs_;
    r.total_patched_samples = ws.total_samples();
    return r;
  }

  Label read(const AddressSpec& a) override {
    const auto w = request("READ " + canonical_string(a));
    if (w.size() != 2 || w[0] != "LABEL") throw BackendError("unexpected reply to READ");
    return parse_label(w[1]);
  }

  ReadObservation read_counts(const AddressSpec& a, int n) override {
    if (n < 1) throw ConfigError("read count must be >= 1");
    const auto w = request("READN " + canonical_string(a) + ' ' + std::to_string(n));
    if (w.empty() || w[0] != "COUNTS" || w.size() != static_cast<std::size_t>(class_count_) + 1)
      throw BackendError("unexpected reply to READN");
    ReadObservation obs;
    obs.n = static_cast<std::uint32_t>(n);
    std::uint64_t sum = 0;
    for (std::size_t i = 1; i < w.size(); ++i) {
      obs.counts.push_back(static_cast<std::uint32_t>(parse_uint(w[i])));
      sum += obs.counts.back();
    }
    if (sum != static_cast<std::uint64_t>(n)) throw BackendError("READN counts do not sum to n");
    return obs;
  }

  TrainReport finetune(double fraction, int epochs) {
    return parse_trained(request("FINETUNE " + format_double(fraction) + ' ' + std::to_string(epochs)));
  }

  void prune(double fraction) { expect_ok(request("PRUNE " + format_double(fraction)), "PRUNE"); }

 private:
  std::vector<std::string> request(const std::string& line) {
    io_->write_line(line);
    std::string reply;
    if (!io_->read_line(reply)) throw BackendError("backend closed the connection");
    auto w = split_words(reply);
    if (!w.empty() && w[0] == "ERR") {
      const auto sp = reply.find(' ');
      throw BackendError("backend error: " + (sp == std::string::npos ? std::string("(no message)") : reply.substr(sp + 1)));
    }
    return w;
  }

  static void expect_ok(const std::vector<std::string>& w, const char* what) {
    if (w.size() != 1 || w[0] != "OK") throw BackendError(std::string("unexpected reply to ") + what);
  }

  static TrainReport parse_trained(const std::vector<std::string>& w) {
    if (w.size() != 3 || w[0] != "TRAINED") throw BackendError("unexpected reply to TRAIN");
    TrainReport r;
    try {
      r.baseline_accuracy_before = std::stod(w[1]);
      r.baseline_accuracy_after = std::stod(w[2]);
    } catch (const std::exception&) {
      throw BackendError("malformed TRAINED reply");
    }
    return r;
  }

  static std::uint64_t parse_uint(const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw BackendError("expected a non-negative integer, got '" + s + "'");
    return std::stoull(s);
  }

  Label parse_label(const std::string& s) const {
    const auto v = parse_uint(s);
    if (v >= static_cast<std::uint64_t>(class_count_)) throw BackendError("label outside the class space");
    return static_cast<Label>(v);
  }

  static std::string format_double(double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
  }

  std::unique_ptr<LineStream> io_;
  int class_count_;
  int epochs_ = 1;
};

// ---------------------------------------------------------------------------
// Server side: exposes any Backend over the line protocol until EOF.
// ---------------------------------------------------------------------------
struct ServeHooks {
  std::function<void()> reset;  // RESET unsupported when empty
};

inline void serve_protocol(Backend& backend, LineStream& io, const ServeHooks& hooks = {}) {
  std::string line;
  auto err = [&](const std::string& msg) { io.write_line("ERR " + msg); };
  auto fmt = [](double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
  };
  while (io.read_line(line)) {
    const auto w = split_words(line);
    if (w.empty()) continue;
    const std::string& cmd = w[0];
    try {
      if (cmd == "HELLO") {
        if (w.size() != 2 || w[1] != std::to_string(kProtocolVersion)) err("unsupported protocol version");
        else io.write_line("OK " + std::to_string(kProtocolVersion));
      } else if (cmd == "RESET") {
        if (!hooks.reset) err("RESET not supported");
        else {
          hooks.reset();
          io.write_line("OK");
        }
      } else if (cmd == "WRITE") {
        if (w.size() != 2) {
          err("usage: WRITE <n>");
          continue;
        }
        const long long n = std::stoll(w[1]);
        WriteSet ws;
        std::string bad;
        for (long long i = 0; i < n; ++i) {
          if (!io.read_line(line)) return;
          if (line.rfind("S ", 0) != 0) {
            bad = "expected S line";
            continue;
          }
          try {
            ws.entries.push_back(parse_write_entry(line.substr(2)));
          } catch (const std::exception& e) {
            bad = e.what();
          }
        }
        if (!io.read_line(line)) return;
        const auto t = split_words(line);
        if (t.size() != 2 || t[0] != "TRAIN") err("expected TRAIN <epochs>");
        else if (!bad.empty()) err(bad);
        else {
          backend.set_epochs(std::stoi(t[1]));
          const TrainReport r = backend.write(ws);
          io.write_line("TRAINED " + fmt(r.baseline_accuracy_before) + ' ' + fmt(r.baseline_accuracy_after));
        }
      } else if (cmd == "READ") {
        if (w.size() != 2) err("usage: READ <address>");
        else io.write_line("LABEL " + std::to_string(backend.read(parse_address(w[1]))));
      } else if (cmd == "READN") {
        if (w.size() != 3) {
          err("usage: READN <address> <n>");
          continue;
        }
        const ReadObservation obs = backend.read_counts(parse_address(w[1]), std::stoi(w[2]));
        std::string out = "COUNTS";
        for (auto c : obs.counts) out += ' ' + std::to_string(c);
        io.write_line(out);
      } else if (cmd == "FINETUNE" || cmd == "PRUNE") {
        err(cmd + " not supported by this backend");
      } else {
        err("unknown command " + cmd);
      }
    } catch (const std::exception& e) {
      err(e.what());
    }
  }
}

}  // namespace covertex
