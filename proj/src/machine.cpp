#include "ichsim/machine.hpp"

#include <algorithm>

namespace ichsim {

Machine::Machine(const PmuParams& pmu, const CoreParams& core) : pmu_(pmu) {
  CoreClock clk;
  clk.mhz = pmu_.freq_mhz();
  for (int c = 0; c < pmu.cores; ++c) cores_.emplace_back(c, clk, core);
}

void Machine::load_program(int core, int thread, std::vector<Op> program) {
  cores_.at(core).load_program(thread, std::move(program));
}

void Machine::schedule(Nanos at, StallEvent e) {
  if (at < now_) throw ModelError("cannot schedule an event in the past");
  external_.emplace(at, e);
}

void Machine::schedule(Nanos at, InjectEvent e) {
  if (at < now_) throw ModelError("cannot schedule an event in the past");
  external_.emplace(at, std::move(e));
}

bool Machine::idle() const {
  return std::all_of(cores_.begin(), cores_.end(),
                     [](const Core& c) { return c.idle(); });
}

void Machine::apply(const PmuActions& a) {
  if (a.retune_mhz) {
    for (auto& c : cores_) c.retune(*a.retune_mhz);
  }
  for (const auto& [core, on] : a.throttle) cores_[core].set_throttle(on);
}

void Machine::sample_limits() {
  double vcc = 0.0;
  for (int c = 0; c < cores(); ++c) vcc = std::max(vcc, pmu_.vcc_at(c, now_));
  const double icc = pmu_.icc_at(now_);
  monitor_.max_vcc_mv = std::max(monitor_.max_vcc_mv, vcc);
  monitor_.max_icc_a = std::max(monitor_.max_icc_a, icc);
  ++monitor_.samples;
  const auto& lim = pmu_.params().limits;
  if (vcc > lim.vcc_max_mv + 1e-6 || icc > lim.icc_max_a + 1e-6) {
    ++monitor_.violations;
  }
}

void Machine::settle() {
  for (;;) {
    bool progressed = false;
    apply(pmu_.advance(now_));
    while (!external_.empty() && external_.begin()->first <= now_) {
      auto node = external_.extract(external_.begin());
      if (const auto* s = std::get_if<StallEvent>(&node.mapped())) {
        cores_.at(s->core).stall(s->thread, now_ + s->latency);
      } else {
        const auto& inj = std::get<InjectEvent>(node.mapped());
        cores_.at(inj.core).inject(inj.thread, inj.op);
      }
      progressed = true;
    }
    for (auto& core : cores_) {
      if (core.next_event_cycle() != core.cycle() ||
          core.clock().time_of(core.cycle()) > now_) {
        continue;
      }
      for (const auto& ev : core.at_boundary()) {
        apply(ev.kind == CoreEventKind::PhiStart
                  ? pmu_.on_phi_start(ev.core, ev.cls, now_)
                  : pmu_.on_phi_end(ev.core, now_));
      }
      progressed = true;
    }
    if (!progressed) break;
  }
  sample_limits();
}

bool Machine::step_once(Nanos end) {
  Nanos t = end;
  if (auto p = pmu_.next_event_time()) t = std::min(t, *p);
  if (!external_.empty()) t = std::min(t, external_.begin()->first);
  for (const auto& c : cores_) {
    const Cycles n = c.next_event_cycle();
    if (n != kNever) t = std::min(t, c.clock().time_of(n));
  }
  t = std::max(t, now_);
  for (auto& c : cores_) {
    const Cycles n = c.next_event_cycle();
    const Cycles target = (n != kNever && c.clock().time_of(n) <= t)
                              ? n
                              : c.clock().first_cycle_at_or_after(t);
    c.advance(target);
  }
  now_ = t;
  settle();
  return now_ < end;
}

void Machine::run_until(Nanos end) {
  settle();
  while (now_ < end) step_once(end);
}

bool Machine::run_until_idle(Nanos limit) {
  settle();
  while (!idle()) {
    if (now_ >= limit) return false;
    step_once(limit);
  }
  return true;
}

}  // namespace ichsim
