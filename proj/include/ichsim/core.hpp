#pragma once

#include <array>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "ichsim/instruction.hpp"

namespace ichsim {

inline constexpr Cycles kNever = std::numeric_limits<Cycles>::max();

/// Frequency plus the anchor used to map cycles to wall time. A frequency
/// change re-anchors at the current cycle so the counter stays continuous.
struct CoreClock {
  int mhz = 1000;
  Nanos epoch_ns = 0;
  Cycles epoch_cycle = 0;

  Nanos time_of(Cycles c) const;
  Cycles first_cycle_at_or_after(Nanos t) const;
  double ghz() const { return mhz / 1000.0; }
  void retune(int new_mhz, Cycles at);
};

/// `iterations` repetitions of `uops_per_iteration` uops of one class. With
/// `measure` set the thread records an rdtsc value after every iteration.
struct LoopOp {
  InstructionClass cls = InstructionClass::Scalar64b;
  std::int64_t iterations = 1;
  int uops_per_iteration = 1;
  bool measure = false;
  int tag = -1;

  // Progress; carried inside the op so a preempted loop resumes in place.
  std::int64_t uops_done = 0;
  bool started = false;
  bool issued = false;
};

/// Spin on rdtsc until wall time `until`.
struct WaitUntilOp {
  Nanos until = 0;
};

using Op = std::variant<LoopOp, WaitUntilOp>;

struct LoopMeasurement {
  int tag = -1;
  InstructionClass cls = InstructionClass::Scalar64b;
  int nominal_cycles = 1;  ///< unthrottled cycles per iteration
  Cycles start_tsc = 0;
  Nanos start_ns = 0;
  std::vector<Cycles> iter_end_tsc;

  Cycles delta(std::size_t i) const {
    return iter_end_tsc[i] - (i == 0 ? start_tsc : iter_end_tsc[i - 1]);
  }
  /// Sum of deltas of iterations that took >= 2x nominal. The first
  /// iteration is a warm-up and is excluded.
  Cycles throttled_cycles() const;
};

enum class ThrottleMode { EntireCore, PerThreadImproved };

/// Returns true when cycle `c` is a delivery slot of an active 1-in-4 gate.
constexpr bool gate_open_cycle(Cycles c) { return c % 4 == 0; }

/// Number of cycles in [a, b) that are multiples of 4 (a, b >= 0).
constexpr Cycles count_multiples_of_4(Cycles a, Cycles b) {
  return b <= a ? 0 : (b + 3) / 4 - (a + 3) / 4;
}

struct PowerGate {
  PowerGatedUnit unit = PowerGatedUnit::None;
  bool ever_opened = false;
  Nanos last_use = 0;

  bool is_open(Nanos now, Nanos close_after) const {
    return ever_opened && now - last_use < close_after;
  }
};

struct HardwareThread {
  int id = 0;
  std::vector<Op> program;
  std::size_t pc = 0;
  Cycles stall_until = 0;
  std::int64_t retired_uops = 0;
  std::vector<LoopMeasurement> measurements;
  std::optional<std::size_t> open_measurement;

  bool finished() const { return pc >= program.size(); }
};

enum class CoreEventKind { PhiStart, PhiEnd };

struct CoreEvent {
  CoreEventKind kind;
  int core;
  int thread;
  InstructionClass cls;
};

struct CoreParams {
  ThrottleMode mode = ThrottleMode::EntireCore;
  Nanos wake_latency_ns = 12;
  Nanos gate_close_ns = 650 * kNsPerUs;
};

struct CoreStats {
  Cycles throttled_cycles = 0;
  Cycles throttled_delivery_cycles = 0;  ///< cycles with >= 1 uop while gated
  Cycles gate_stall_cycles = 0;
  Nanos gate_stall_ns = 0;
  int gate_wakes = 0;
};

/// One physical core with two SMT threads sharing the IDQ throttle gate.
class Core {
 public:
  static constexpr int kThreads = 2;

  Core(int id, CoreClock clock, CoreParams params);

  int id() const { return id_; }
  const CoreClock& clock() const { return clock_; }
  void retune(int mhz) { clock_.retune(mhz, cycle_); }

  void load_program(int thread, std::vector<Op> program);
  /// Preempts `thread`: `op` runs before whatever the thread was doing.
  void inject(int thread, Op op);
  /// Thread makes no progress before wall time `until` (tsc keeps running).
  void stall(int thread, Nanos until);

  /// Next cycle to execute; equal to the timestamp counter.
  Cycles cycle() const { return cycle_; }
  Cycles read_tsc(int /*thread*/) const { return cycle_; }

  bool throttled() const { return throttle_; }
  /// Takes effect from the current cycle boundary.
  void set_throttle(bool active) { throttle_ = active; }

  /// Earliest cycle at which some thread changes state. Equal to cycle()
  /// when at_boundary() has pending work.
  Cycles next_event_cycle() const;
  /// Applies state changes due at the current cycle and reports PHI phases.
  std::vector<CoreEvent> at_boundary();
  /// Executes cycles [cycle(), to). Requires to <= next_event_cycle().
  /// Returns uops retired per thread.
  std::array<std::int64_t, kThreads> advance(Cycles to);
  /// advance(cycle()+1) followed by at_boundary().
  std::array<std::int64_t, kThreads> step_cycle(std::vector<CoreEvent>* events);

  const HardwareThread& thread(int t) const { return threads_[t]; }
  HardwareThread& thread(int t) { return threads_[t]; }
  const CoreStats& stats() const { return stats_; }
  const PowerGate& gate(PowerGatedUnit u) const;
  bool idle() const;
  /// True while some thread sits inside a PHI loop.
  bool running_phi() const;

 private:
  enum class ThreadState { Finished, Waiting, Stalled, Running, Boundary };
  ThreadState state_of(const HardwareThread& t) const;
  bool gated(const LoopOp& op) const;
  Cycles delivery_cycle(Cycles from, std::int64_t k, bool gated) const;
  Cycles wake_cycles() const;

  int id_;
  CoreClock clock_;
  CoreParams params_;
  Cycles cycle_ = 0;
  bool throttle_ = false;
  std::array<HardwareThread, kThreads> threads_{};
  std::array<PowerGate, 2> gates_{};
  CoreStats stats_{};
};

}  // namespace ichsim
