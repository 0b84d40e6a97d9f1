// Copyright 2026 The llmctl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "llmctl/sim/types.h"

namespace llmctl::sim {

enum class EventKind {
  kRequestArrival,
  kLoadDone,
  kResumeDone,
  kHandoff,
  kHandoffDone,
  kCompletion,
  kFailure,
  kTimeout,
  kKeepAliveExpiry,
  kSchedulerCrash,
  kCustom,
};

const char* EventKindName(EventKind kind);

struct EventHandle {
  uint64_t seq = 0;
  bool valid() const { return seq != 0; }
};

// One line of the run trace: a fired event, or a note emitted by a module
// while handling one (notes carry the seq of the event being handled).
struct TraceRecord {
  SimTime at;
  uint64_t seq;
  std::string kind;
  nlohmann::ordered_json fields;
};

// Single-threaded discrete-event loop. Events fire in (fire_at, seq) order,
// seq being the insertion counter.
class EventLoop {
 public:
  using Callback = std::function<void()>;

  EventHandle Schedule(SimTime at, EventKind kind, Callback cb, nlohmann::ordered_json fields = {});
  EventHandle ScheduleAfter(SimTime delay, EventKind kind, Callback cb,
                            nlohmann::ordered_json fields = {});
  // False if the event already fired, was cancelled or never existed.
  bool Cancel(EventHandle handle);
  bool IsPending(EventHandle handle) const;

  // Fires every event with fire_at <= t, then advances the clock to t.
  size_t RunUntil(SimTime t);
  // Fires events until none remain (or `max_events` fired).
  size_t RunUntilQuiescent(size_t max_events = SIZE_MAX);

  void Note(const std::string& kind, nlohmann::ordered_json fields);

  SimTime now() const { return now_; }
  size_t pending() const { return callbacks_.size(); }
  const std::vector<TraceRecord>& trace() const { return trace_; }
  void set_tracing(bool on) { tracing_ = on; }
  std::string TraceJsonLines() const;

 private:
  struct Entry {
    SimTime at;
    uint64_t seq;
    bool operator>(const Entry& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };
  struct Pending {
    EventKind kind;
    Callback cb;
    nlohmann::ordered_json fields;
  };

  bool FireNext(SimTime limit);

  SimTime now_{0};
  uint64_t next_seq_ = 1;
  uint64_t current_seq_ = 0;
  bool tracing_ = true;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue_;
  std::unordered_map<uint64_t, Pending> callbacks_;
  std::vector<TraceRecord> trace_;
};

}  // namespace llmctl::sim
