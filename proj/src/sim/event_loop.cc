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

#include "llmctl/sim/event_loop.h"

#include "llmctl/common/error.h"

namespace llmctl::sim {

const char* EventKindName(EventKind kind) {
  switch (kind) {
    case EventKind::kRequestArrival:
      return "RequestArrival";
    case EventKind::kLoadDone:
      return "LoadDone";
    case EventKind::kResumeDone:
      return "ResumeDone";
    case EventKind::kHandoff:
      return "Handoff";
    case EventKind::kHandoffDone:
      return "HandoffDone";
    case EventKind::kCompletion:
      return "Completion";
    case EventKind::kFailure:
      return "Failure";
    case EventKind::kTimeout:
      return "Timeout";
    case EventKind::kKeepAliveExpiry:
      return "KeepAliveExpiry";
    case EventKind::kSchedulerCrash:
      return "SchedulerCrash";
    case EventKind::kCustom:
      return "Custom";
  }
  return "?";
}

EventHandle EventLoop::Schedule(SimTime at, EventKind kind, Callback cb,
                                nlohmann::ordered_json fields) {
  if (at < now_) {
    throw SchedulingError("event scheduled at " + std::to_string(at.count()) +
                          " ns, before now = " + std::to_string(now_.count()) + " ns");
  }
  uint64_t seq = next_seq_++;
  queue_.push({at, seq});
  callbacks_.emplace(seq, Pending{kind, std::move(cb), std::move(fields)});
  return {seq};
}

EventHandle EventLoop::ScheduleAfter(SimTime delay, EventKind kind, Callback cb,
                                     nlohmann::ordered_json fields) {
  return Schedule(now_ + delay, kind, std::move(cb), std::move(fields));
}

bool EventLoop::Cancel(EventHandle handle) { return callbacks_.erase(handle.seq) != 0; }

bool EventLoop::IsPending(EventHandle handle) const {
  return callbacks_.count(handle.seq) != 0;
}

bool EventLoop::FireNext(SimTime limit) {
  while (!queue_.empty()) {
    Entry top = queue_.top();
    auto it = callbacks_.find(top.seq);
    if (it == callbacks_.end()) {
      queue_.pop();
      continue;
    }
    if (top.at > limit) return false;
    queue_.pop();
    Pending p = std::move(it->second);
    callbacks_.erase(it);
    now_ = top.at;
    current_seq_ = top.seq;
    if (tracing_) trace_.push_back({now_, top.seq, EventKindName(p.kind), std::move(p.fields)});
    if (p.cb) p.cb();
    return true;
  }
  return false;
}

size_t EventLoop::RunUntil(SimTime t) {
  size_t fired = 0;
  while (FireNext(t)) ++fired;
  if (t > now_) now_ = t;
  return fired;
}

size_t EventLoop::RunUntilQuiescent(size_t max_events) {
  size_t fired = 0;
  while (fired < max_events && FireNext(SimTime::max())) ++fired;
  return fired;
}

void EventLoop::Note(const std::string& kind, nlohmann::ordered_json fields) {
  if (tracing_) trace_.push_back({now_, current_seq_, kind, std::move(fields)});
}

std::string EventLoop::TraceJsonLines() const {
  std::string out;
  for (const TraceRecord& r : trace_) {
    nlohmann::ordered_json line;
    line["t_ns"] = r.at.count();
    line["seq"] = r.seq;
    line["event"] = r.kind;
    if (!r.fields.is_null()) line["fields"] = r.fields;
    out += line.dump();
    out += '\n';
  }
  return out;
}

}  // namespace llmctl::sim
