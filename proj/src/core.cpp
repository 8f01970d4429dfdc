#include "ichsim/core.hpp"

#include <algorithm>

namespace ichsim {

Nanos CoreClock::time_of(Cycles c) const {
  return epoch_ns + (c - epoch_cycle) * 1000 / mhz;
}

Cycles CoreClock::first_cycle_at_or_after(Nanos t) const {
  const Nanos d = t - epoch_ns;
  if (d <= 0) return epoch_cycle;
  return epoch_cycle + (d * mhz + 999) / 1000;
}

void CoreClock::retune(int new_mhz, Cycles at) {
  if (new_mhz <= 0) throw ModelError("clock frequency must be > 0");
  epoch_ns = time_of(at);
  epoch_cycle = at;
  mhz = new_mhz;
}

Cycles LoopMeasurement::throttled_cycles() const {
  Cycles tp = 0;
  for (std::size_t i = 1; i < iter_end_tsc.size(); ++i) {
    const Cycles d = delta(i);
    if (d >= 2 * nominal_cycles) tp += d;
  }
  return tp;
}

Core::Core(int id, CoreClock clock, CoreParams params)
    : id_(id), clock_(clock), params_(params) {
  for (int t = 0; t < kThreads; ++t) threads_[t].id = t;
  gates_[0].unit = PowerGatedUnit::Avx256;
  gates_[1].unit = PowerGatedUnit::Avx512;
  cycle_ = clock_.epoch_cycle;
}

void Core::load_program(int thread, std::vector<Op> program) {
  auto& t = threads_.at(thread);
  t.program = std::move(program);
  t.pc = 0;
  t.open_measurement.reset();
}

void Core::inject(int thread, Op op) {
  auto& t = threads_.at(thread);
  t.program.insert(t.program.begin() + static_cast<std::ptrdiff_t>(t.pc),
                   std::move(op));
}

void Core::stall(int thread, Nanos until) {
  auto& t = threads_.at(thread);
  t.stall_until = std::max(t.stall_until, clock_.first_cycle_at_or_after(until));
}

const PowerGate& Core::gate(PowerGatedUnit u) const {
  return gates_[u == PowerGatedUnit::Avx512 ? 1 : 0];
}

Cycles Core::wake_cycles() const {
  return (params_.wake_latency_ns * clock_.mhz + 999) / 1000;
}

bool Core::gated(const LoopOp& op) const {
  if (!throttle_) return false;
  return params_.mode == ThrottleMode::EntireCore || is_phi(op.cls);
}

Cycles Core::delivery_cycle(Cycles from, std::int64_t k, bool gated) const {
  if (!gated) return from + k - 1;
  const Cycles m0 = (from + 3) / 4 * 4;
  return m0 + 4 * (k - 1);
}

Core::ThreadState Core::state_of(const HardwareThread& t) const {
  if (t.finished()) return ThreadState::Finished;
  if (t.stall_until > cycle_) return ThreadState::Stalled;
  const Op& op = t.program[t.pc];
  if (const auto* w = std::get_if<WaitUntilOp>(&op)) {
    return clock_.time_of(cycle_) >= w->until ? ThreadState::Boundary
                                              : ThreadState::Waiting;
  }
  const auto& loop = std::get<LoopOp>(op);
  if (!loop.started || !loop.issued) return ThreadState::Boundary;
  if (loop.uops_done >= loop.iterations * loop.uops_per_iteration) {
    return ThreadState::Boundary;
  }
  return ThreadState::Running;
}

Cycles Core::next_event_cycle() const {
  Cycles next = kNever;
  for (const auto& t : threads_) {
    switch (state_of(t)) {
      case ThreadState::Finished:
        break;
      case ThreadState::Boundary:
        next = std::min(next, cycle_);
        break;
      case ThreadState::Stalled:
        next = std::min(next, t.stall_until);
        break;
      case ThreadState::Waiting:
        next = std::min(next, clock_.first_cycle_at_or_after(
                                  std::get<WaitUntilOp>(t.program[t.pc]).until));
        break;
      case ThreadState::Running: {
        const auto& loop = std::get<LoopOp>(t.program[t.pc]);
        const std::int64_t remaining =
            loop.iterations * loop.uops_per_iteration - loop.uops_done;
        const int ipc = base_ipc(loop.cls);
        const std::int64_t k = (remaining + ipc - 1) / ipc;
        next = std::min(next, delivery_cycle(cycle_, k, gated(loop)) + 1);
        break;
      }
    }
  }
  return next;
}

std::vector<CoreEvent> Core::at_boundary() {
  std::vector<CoreEvent> events;
  const Nanos now = clock_.time_of(cycle_);
  for (auto& t : threads_) {
    while (state_of(t) == ThreadState::Boundary) {
      Op& op = t.program[t.pc];
      if (std::holds_alternative<WaitUntilOp>(op)) {
        ++t.pc;
        continue;
      }
      auto& loop = std::get<LoopOp>(op);
      const std::int64_t total = loop.iterations * loop.uops_per_iteration;
      if (!loop.started) {
        loop.started = true;
        if (total <= 0) {
          ++t.pc;
          continue;
        }
        if (loop.measure) {
          LoopMeasurement m;
          m.tag = loop.tag;
          m.cls = loop.cls;
          m.nominal_cycles = std::max(1, loop.uops_per_iteration / base_ipc(loop.cls));
          m.start_tsc = cycle_;
          m.start_ns = now;
          m.iter_end_tsc.reserve(static_cast<std::size_t>(loop.iterations));
          t.measurements.push_back(std::move(m));
          t.open_measurement = t.measurements.size() - 1;
        }
        const PowerGatedUnit unit = unit_of(loop.cls);
        if (unit != PowerGatedUnit::None) {
          auto& g = gates_[unit == PowerGatedUnit::Avx512 ? 1 : 0];
          if (!g.is_open(now, params_.gate_close_ns)) {
            const Cycles w = wake_cycles();
            t.stall_until = std::max(t.stall_until, cycle_ + w);
            stats_.gate_stall_cycles += w;
            stats_.gate_stall_ns += params_.wake_latency_ns;
            ++stats_.gate_wakes;
            g.ever_opened = true;
            g.last_use = now + params_.wake_latency_ns;
          }
        }
        continue;
      }
      if (!loop.issued) {
        loop.issued = true;
        if (is_phi(loop.cls)) {
          events.push_back({CoreEventKind::PhiStart, id_, t.id, loop.cls});
          const PowerGatedUnit unit = unit_of(loop.cls);
          if (unit != PowerGatedUnit::None) {
            gates_[unit == PowerGatedUnit::Avx512 ? 1 : 0].last_use = now;
          }
        }
        continue;
      }
      // Loop complete.
      if (is_phi(loop.cls)) {
        events.push_back({CoreEventKind::PhiEnd, id_, t.id, loop.cls});
        const PowerGatedUnit unit = unit_of(loop.cls);
        if (unit != PowerGatedUnit::None) {
          gates_[unit == PowerGatedUnit::Avx512 ? 1 : 0].last_use = now;
        }
      }
      if (loop.measure) t.open_measurement.reset();
      ++t.pc;
    }
  }
  return events;
}

std::array<std::int64_t, Core::kThreads> Core::advance(Cycles to) {
  std::array<std::int64_t, kThreads> retired{};
  if (to <= cycle_) return retired;
  bool any_ungated = false;
  bool any_gated = false;
  for (auto& t : threads_) {
    if (state_of(t) != ThreadState::Running) continue;
    auto& loop = std::get<LoopOp>(t.program[t.pc]);
    const bool g = gated(loop);
    (g ? any_gated : any_ungated) = true;
    const Cycles slots = g ? count_multiples_of_4(cycle_, to) : to - cycle_;
    const int ipc = base_ipc(loop.cls);
    const std::int64_t total = loop.iterations * loop.uops_per_iteration;
    const std::int64_t uops = std::min(total - loop.uops_done, slots * ipc);
    if (uops <= 0) continue;
    if (loop.measure && t.open_measurement) {
      auto& m = t.measurements[*t.open_measurement];
      const std::int64_t upi = loop.uops_per_iteration;
      const std::int64_t first = loop.uops_done / upi;
      const std::int64_t last = (loop.uops_done + uops) / upi;
      for (std::int64_t j = first; j < last; ++j) {
        const std::int64_t need = (j + 1) * upi - loop.uops_done;
        const std::int64_t k = (need + ipc - 1) / ipc;
        m.iter_end_tsc.push_back(delivery_cycle(cycle_, k, g) + 1);
      }
    }
    loop.uops_done += uops;
    t.retired_uops += uops;
    retired[t.id] = uops;
  }
  if (throttle_) {
    stats_.throttled_cycles += to - cycle_;
    if (any_ungated) {
      stats_.throttled_delivery_cycles += to - cycle_;
    } else if (any_gated) {
      stats_.throttled_delivery_cycles += count_multiples_of_4(cycle_, to);
    }
  }
  cycle_ = to;
  return retired;
}

std::array<std::int64_t, Core::kThreads> Core::step_cycle(
    std::vector<CoreEvent>* events) {
  auto append = [&](std::vector<CoreEvent> ev) {
    if (events) events->insert(events->end(), ev.begin(), ev.end());
  };
  if (next_event_cycle() == cycle_) append(at_boundary());
  auto r = advance(cycle_ + 1);
  append(at_boundary());
  return r;
}

bool Core::idle() const {
  return std::all_of(threads_.begin(), threads_.end(),
                     [](const HardwareThread& t) { return t.finished(); });
}

bool Core::running_phi() const {
  for (const auto& t : threads_) {
    if (t.finished()) continue;
    const auto* loop = std::get_if<LoopOp>(&t.program[t.pc]);
    if (loop && loop->issued && is_phi(loop->cls)) return true;
  }
  return false;
}

}  // namespace ichsim
