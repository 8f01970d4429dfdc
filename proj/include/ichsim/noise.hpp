#pragma once

#include <cstdint>
#include <vector>

#include "ichsim/config.hpp"
#include "ichsim/machine.hpp"

namespace ichsim {

struct NoiseEvent {
  Nanos time = 0;
  NoiseKind kind = NoiseKind::Interrupt;
  Nanos latency = 0;
  int core = 0;
  int thread = 0;
};

struct AppPhiBurst {
  Nanos time = 0;
  InstructionClass cls = InstructionClass::L128b_Heavy;
};

/// Poisson arrivals at cfg.event_rate_hz over [0, horizon) with latencies
/// uniform in cfg.latency_range(). Sorted by time; a pure function of seed.
std::vector<NoiseEvent> schedule_events(const NoiseParams& cfg, Nanos horizon,
                                        std::uint64_t seed, int core, int thread);

/// Poisson App-PHI burst times with a level drawn uniformly from L1..L4.
std::vector<AppPhiBurst> schedule_app_phis(const NoiseParams& cfg, Nanos horizon,
                                           std::uint64_t seed);

LoopOp app_phi_op(const NoiseParams& cfg, InstructionClass cls);

/// Queues the stall on the machine; it fires at event.time.
void apply_event(Machine& m, const NoiseEvent& e);

}  // namespace ichsim
