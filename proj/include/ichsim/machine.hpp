#pragma once

#include <map>
#include <variant>
#include <vector>

#include "ichsim/core.hpp"
#include "ichsim/pmu.hpp"

namespace ichsim {

/// Thread `thread` of core `core` makes no progress for `latency` ns.
struct StallEvent {
  int core = 0;
  int thread = 0;
  Nanos latency = 0;
};

/// `op` preempts thread `thread` of core `core`.
struct InjectEvent {
  int core = 0;
  int thread = 0;
  LoopOp op;
};

struct LimitMonitor {
  double max_vcc_mv = 0.0;
  double max_icc_a = 0.0;
  std::int64_t samples = 0;
  std::int64_t violations = 0;
};

/// Event-driven scheduler owning the cores and the PMU. Time advances in
/// bulk between events: external events, VR completions, hysteresis
/// deadlines and per-thread state changes.
class Machine {
 public:
  Machine(const PmuParams& pmu, const CoreParams& core);

  int cores() const { return static_cast<int>(cores_.size()); }
  Core& core(int i) { return cores_.at(i); }
  const Core& core(int i) const { return cores_.at(i); }
  Pmu& pmu() { return pmu_; }
  const Pmu& pmu() const { return pmu_; }
  Nanos now() const { return now_; }

  void load_program(int core, int thread, std::vector<Op> program);
  void schedule(Nanos at, StallEvent e);
  void schedule(Nanos at, InjectEvent e);

  void run_until(Nanos end);
  /// Runs until every thread has finished its program or `limit` is hit.
  /// Returns false on timeout.
  bool run_until_idle(Nanos limit);

  bool idle() const;
  const LimitMonitor& limit_monitor() const { return monitor_; }

 private:
  void settle();
  bool step_once(Nanos end);
  void apply(const PmuActions& a);
  void sample_limits();

  std::vector<Core> cores_;
  Pmu pmu_;
  Nanos now_ = 0;
  std::multimap<Nanos, std::variant<StallEvent, InjectEvent>> external_;
  LimitMonitor monitor_;
};

}  // namespace ichsim
