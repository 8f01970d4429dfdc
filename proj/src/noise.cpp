#include "ichsim/noise.hpp"

#include <cmath>
#include <random>

namespace ichsim {

namespace {

// Decorrelates the two generator streams drawn from one user seed.
constexpr std::uint64_t kAppStreamSalt = 0x9e3779b97f4a7c15ULL;

template <typename F>
void poisson_times(double rate_hz, Nanos horizon, std::mt19937_64& rng, F&& emit) {
  if (rate_hz <= 0.0 || horizon <= 0) return;
  std::exponential_distribution<double> gap(rate_hz / 1e9);
  double t = 0.0;
  for (;;) {
    t += gap(rng);
    if (t >= static_cast<double>(horizon)) break;
    emit(static_cast<Nanos>(t));
  }
}

}  // namespace

std::vector<NoiseEvent> schedule_events(const NoiseParams& cfg, Nanos horizon,
                                        std::uint64_t seed, int core, int thread) {
  if (horizon <= 0) throw ModelError("noise horizon must be > 0");
  cfg.validate();
  std::mt19937_64 rng(seed);
  const auto [lo, hi] = cfg.latency_range();
  std::uniform_int_distribution<Nanos> latency(lo, hi);
  std::vector<NoiseEvent> out;
  poisson_times(cfg.event_rate_hz, horizon, rng, [&](Nanos t) {
    out.push_back({t, cfg.kind, latency(rng), core, thread});
  });
  return out;
}

std::vector<AppPhiBurst> schedule_app_phis(const NoiseParams& cfg, Nanos horizon,
                                           std::uint64_t seed) {
  if (horizon <= 0) throw ModelError("noise horizon must be > 0");
  cfg.validate();
  std::mt19937_64 rng(seed ^ kAppStreamSalt);
  std::uniform_int_distribution<std::size_t> level(0, kLevelClasses.size() - 1);
  std::vector<AppPhiBurst> out;
  poisson_times(cfg.app_phi_rate_hz, horizon, rng, [&](Nanos t) {
    out.push_back({t, kLevelClasses[level(rng)]});
  });
  return out;
}

LoopOp app_phi_op(const NoiseParams& cfg, InstructionClass cls) {
  LoopOp op;
  op.cls = cls;
  op.iterations = cfg.app_phi_iterations;
  op.uops_per_iteration = cfg.app_phi_uops_per_iteration;
  op.tag = -2;
  return op;
}

void apply_event(Machine& m, const NoiseEvent& e) {
  m.schedule(e.time, StallEvent{e.core, e.thread, e.latency});
}

}  // namespace ichsim
