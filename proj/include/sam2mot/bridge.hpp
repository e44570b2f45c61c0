#pragma once

// Line-delimited JSON protocol for driving an out-of-process segmenter.
//
// Requests (one object per line, "v" first):
//   {"v":1,"op":"init","frame":F,"handle":H,"box":[x,y,w,h]}
//   {"v":1,"op":"propagate","frame":F}
//   {"v":1,"op":"purge","frame":F,"handle":H}
//   {"v":1,"op":"recondition","frame":F,"handle":H,"box":[x,y,w,h]}
//   {"v":1,"op":"drop","handle":H}
//   {"v":1,"op":"shutdown"}
// Replies:
//   {"ok":true,"results":[{"handle":H,"rle":"w h r0 r1 ...","logits":L}, ...]}
//   {"ok":false,"error":"..."}
// Handles are allocated by the client and mirrored by the responder.

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "sam2mot/backend.hpp"
#include "sam2mot/error.hpp"
#include "sam2mot/io.hpp"
#include "sam2mot/mask.hpp"

extern char** environ;

namespace sam2mot::bridge {

inline constexpr int kProtocolVersion = 1;

enum class Op { init, propagate, purge, recondition, drop, shutdown };

inline std::string_view to_string(Op op) {
  switch (op) {
    case Op::init: return "init";
    case Op::propagate: return "propagate";
    case Op::purge: return "purge";
    case Op::recondition: return "recondition";
    case Op::drop: return "drop";
    case Op::shutdown: return "shutdown";
  }
  return "shutdown";
}

inline Op parse_op(std::string_view s) {
  for (Op op : {Op::init, Op::propagate, Op::purge, Op::recondition, Op::drop, Op::shutdown}) {
    if (to_string(op) == s) return op;
  }
  throw InputError("unknown op '" + std::string(s) + "'");
}

struct Request {
  Op op = Op::propagate;
  std::optional<long> frame;
  std::optional<Handle> handle;
  std::optional<Box> box;

  friend bool operator==(const Request&, const Request&) = default;
};

struct Reply {
  bool ok = true;
  std::string error;
  std::map<Handle, Propagation> results;
};

inline std::string encode_request(const Request& r) {
  Json j{{"v", kProtocolVersion}, {"op", std::string(to_string(r.op))}};
  if (r.frame) j["frame"] = *r.frame;
  if (r.handle) j["handle"] = *r.handle;
  if (r.box) j["box"] = detail::box_json(*r.box);
  return j.dump();
}

inline Request decode_request(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw InputError("request is not valid JSON");
  }
  sam2mot::detail::reject_unknown_keys(j, {"v", "op", "frame", "handle", "box"}, "request");
  try {
    if (j.value("v", kProtocolVersion) != kProtocolVersion) {
      throw InputError("unsupported protocol version");
    }
    Request r;
    r.op = parse_op(j.at("op").get<std::string>());
    if (j.contains("frame")) r.frame = j["frame"].get<long>();
    if (j.contains("handle")) r.handle = j["handle"].get<Handle>();
    if (j.contains("box")) r.box = sam2mot::detail::box_from_json(j["box"]);
    const bool needs_frame = r.op != Op::drop && r.op != Op::shutdown;
    const bool needs_handle = r.op != Op::propagate && r.op != Op::shutdown;
    const bool needs_box = r.op == Op::init || r.op == Op::recondition;
    if ((needs_frame && !r.frame) || (needs_handle && !r.handle) || (needs_box && !r.box)) {
      throw InputError("request for '" + std::string(to_string(r.op)) + "' is missing a field");
    }
    return r;
  } catch (const nlohmann::json::exception&) {
    throw InputError("request has a field of the wrong type");
  }
}

inline std::string encode_reply(const Reply& r) {
  if (!r.ok) return Json{{"ok", false}, {"error", r.error}}.dump();
  Json results = Json::array();
  for (const auto& [h, p] : r.results) {
    results.push_back({{"handle", h}, {"rle", to_rle_text(p.mask)}, {"logits", p.logits}});
  }
  return Json{{"ok", true}, {"results", std::move(results)}}.dump();
}

inline Reply decode_reply(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw Error("bridge reply is not valid JSON");
  }
  try {
    Reply r;
    r.ok = j.at("ok").get<bool>();
    if (!r.ok) {
      r.error = j.value("error", std::string("unspecified bridge error"));
      return r;
    }
    for (const Json& item : j.value("results", Json::array())) {
      const Handle h = item.at("handle").get<Handle>();
      const double logits = item.at("logits").get<double>();
      if (!r.results.emplace(h, Propagation{parse_rle_text(item.at("rle").get<std::string>()), logits})
               .second) {
        throw Error("bridge reply lists handle " + std::to_string(h) + " twice");
      }
    }
    return r;
  } catch (const nlohmann::json::exception&) {
    throw Error("bridge reply has an unexpected shape");
  }
}

/// Carries one request line and returns the reply line.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string exchange(const std::string& request_line) = 0;
};

/// Child process speaking the protocol on its stdin/stdout. The command runs
/// under /bin/sh -c; stderr is inherited.
class SubprocessTransport : public Transport {
 public:
  explicit SubprocessTransport(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0) throw Error("pipe failed: " + std::string(std::strerror(errno)));
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw Error("pipe failed: " + std::string(std::strerror(errno)));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, to_child[1]);
    posix_spawn_file_actions_addclose(&actions, from_child[0]);
    const char* argv[] = {"sh", "-c", command.c_str(), nullptr};
    const int rc = posix_spawn(&pid_, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv),
                               environ);
    posix_spawn_file_actions_destroy(&actions);
    close(to_child[0]);
    close(from_child[1]);
    if (rc != 0) {
      close(to_child[1]);
      close(from_child[0]);
      throw Error("cannot start bridge '" + command + "': " + std::strerror(rc));
    }
    // A responder that dies must surface as an error, not a SIGPIPE.
    std::signal(SIGPIPE, SIG_IGN);
    in_ = fdopen(to_child[1], "w");
    out_ = fdopen(from_child[0], "r");
    if (in_ == nullptr || out_ == nullptr) throw Error("fdopen failed");
  }

  SubprocessTransport(const SubprocessTransport&) = delete;
  SubprocessTransport& operator=(const SubprocessTransport&) = delete;

  ~SubprocessTransport() override {
    if (in_ != nullptr) std::fclose(in_);
    if (out_ != nullptr) std::fclose(out_);
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
    }
  }

  std::string exchange(const std::string& request_line) override {
    if (std::fputs(request_line.c_str(), in_) < 0 || std::fputc('\n', in_) == EOF ||
        std::fflush(in_) != 0) {
      throw Error("bridge process is not accepting requests");
    }
    std::string line;
    int c;
    while ((c = std::fgetc(out_)) != EOF && c != '\n') line.push_back(static_cast<char>(c));
    if (c == EOF && line.empty()) throw Error("bridge process closed its output");
    return line;
  }

  /// Closes the request pipe and waits; returns the child's exit status.
  int finish() {
    if (in_ != nullptr) {
      std::fclose(in_);
      in_ = nullptr;
    }
    int status = 0;
    if (pid_ > 0 && waitpid(pid_, &status, 0) == pid_) {
      pid_ = -1;
      return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    return -1;
  }

 private:
  pid_t pid_ = -1;
  FILE* in_ = nullptr;
  FILE* out_ = nullptr;
};

/// SegmentationBackend that forwards every call over a Transport.
class BridgeBackend : public SegmentationBackend {
 public:
  explicit BridgeBackend(std::unique_ptr<Transport> transport) : transport_(std::move(transport)) {}

  BridgeBackend(const BridgeBackend&) = delete;
  BridgeBackend& operator=(const BridgeBackend&) = delete;

  ~BridgeBackend() override {
    try {
      shutdown();
    } catch (...) {
    }
  }

  Handle init_object(const Box& prompt, long frame) override {
    const Handle h = next_handle_++;
    call({Op::init, frame, h, prompt});
    return h;
  }

  std::map<Handle, Propagation> propagate(long frame) override {
    return call({Op::propagate, frame, std::nullopt, std::nullopt});
  }

  void purge_memory(Handle handle, long frame) override {
    call({Op::purge, frame, handle, std::nullopt});
  }

  void recondition(Handle handle, const Box& prompt, long frame) override {
    call({Op::recondition, frame, handle, prompt});
  }

  void drop_object(Handle handle) override { call({Op::drop, std::nullopt, handle, std::nullopt}); }

  void shutdown() {
    if (!transport_ || closed_) return;
    closed_ = true;
    call({Op::shutdown, std::nullopt, std::nullopt, std::nullopt});
  }

 private:
  std::map<Handle, Propagation> call(const Request& request) {
    Reply reply = decode_reply(transport_->exchange(encode_request(request)));
    if (!reply.ok) throw Error("bridge: " + reply.error);
    return std::move(reply.results);
  }

  std::unique_ptr<Transport> transport_;
  Handle next_handle_ = 1;
  bool closed_ = false;
};

/// Reference responder: serves the protocol on top of any in-process
/// backend. Malformed requests get an error reply and the session goes on.
class Responder {
 public:
  explicit Responder(SegmentationBackend& backend) : backend_(backend) {}

  /// Reply line for one request line.
  std::string handle_line(std::string_view line) {
    Reply reply;
    try {
      const Request req = decode_request(line);
      switch (req.op) {
        case Op::init: {
          if (handles_.contains(*req.handle)) throw InputError("handle already in use");
          handles_.emplace(*req.handle, backend_.init_object(*req.box, *req.frame));
          break;
        }
        case Op::propagate: {
          auto inner = backend_.propagate(*req.frame);
          for (const auto& [outer, mine] : handles_) {
            const auto it = inner.find(mine);
            if (it == inner.end()) throw Error("backend omitted a live object");
            reply.results.emplace(outer, std::move(it->second));
          }
          break;
        }
        case Op::purge: backend_.purge_memory(mapped(*req.handle), *req.frame); break;
        case Op::recondition: backend_.recondition(mapped(*req.handle), *req.box, *req.frame); break;
        case Op::drop: {
          backend_.drop_object(mapped(*req.handle));
          handles_.erase(*req.handle);
          break;
        }
        case Op::shutdown: done_ = true; break;
      }
    } catch (const std::exception& e) {
      reply = Reply{false, e.what(), {}};
    }
    return encode_reply(reply);
  }

  /// Serves until shutdown or end of input.
  void serve(std::istream& in, std::ostream& out) {
    std::string line;
    while (!done_ && std::getline(in, line)) {
      if (line.empty()) continue;
      out << handle_line(line) << '\n' << std::flush;
    }
  }

  bool done() const { return done_; }

 private:
  Handle mapped(Handle outer) const {
    const auto it = handles_.find(outer);
    if (it == handles_.end()) throw InputError("unknown handle " + std::to_string(outer));
    return it->second;
  }

  SegmentationBackend& backend_;
  std::map<Handle, Handle> handles_;
  bool done_ = false;
};

/// Transport that talks to an in-process Responder.
class LoopbackTransport : public Transport {
 public:
  explicit LoopbackTransport(Responder& responder) : responder_(responder) {}
  std::string exchange(const std::string& request_line) override {
    return responder_.handle_line(request_line);
  }

 private:
  Responder& responder_;
};

/// True when two reply lines carry the same outcome: equal error flag,
/// handles and masks, and logits within `logits_tolerance`.
inline bool replies_match(std::string_view expected, std::string_view actual,
                          double logits_tolerance = 1e-6) {
  Reply a, b;
  try {
    a = decode_reply(expected);
    b = decode_reply(actual);
  } catch (const std::exception&) {
    return false;
  }
  if (a.ok != b.ok || a.results.size() != b.results.size()) return false;
  if (!a.ok) return true;
  for (const auto& [h, p] : a.results) {
    const auto it = b.results.find(h);
    if (it == b.results.end() || !(it->second.mask == p.mask)) return false;
    if (!(std::abs(it->second.logits - p.logits) <= logits_tolerance)) return false;
  }
  return true;
}

/// Replays `requests` over `transport` and compares each reply with the
/// recorded one. Returns the 1-based index of the first divergent pair, or
/// nothing when the transcript conforms.
inline std::optional<std::size_t> check_transcript(const std::vector<std::string>& requests,
                                                   const std::vector<std::string>& replies,
                                                   Transport& transport) {
  if (requests.size() != replies.size()) {
    throw InputError("transcript has " + std::to_string(requests.size()) + " requests but " +
                     std::to_string(replies.size()) + " replies");
  }
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (!replies_match(replies[i], transport.exchange(requests[i]))) return i + 1;
  }
  return std::nullopt;
}

}  // namespace sam2mot::bridge
