#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "ichsim/pdn.hpp"

namespace ichsim {

struct LimitsConfig {
  double icc_max_a = 100.0;
  double vcc_max_mv = 1270.0;
  double vcc_min_mv = 550.0;
  double tj_max_c = 100.0;  ///< carried for completeness; no thermal model

  void validate() const;
};

/// Baseline voltage as a piecewise-linear function of frequency. Outside
/// the table the nearest segment is extrapolated.
class VfTable {
 public:
  VfTable() = default;
  explicit VfTable(std::vector<std::pair<double, double>> ghz_mv);

  double at(double ghz) const;
  const std::vector<std::pair<double, double>>& points() const { return pts_; }

 private:
  std::vector<std::pair<double, double>> pts_;
};

struct PmuParams {
  int cores = 2;
  VRKind vr_kind = VRKind::SharedMotherboard;
  double slew_mv_per_us = 1.0;
  bool vr_merge = false;
  LoadLineParams ll{};
  IccModel icc{};
  VfTable vf{};
  CdynTable cdyn{};
  double secondary_core_weight = 1.0;
  LimitsConfig limits{};
  Nanos hysteresis_ns = 650 * kNsPerUs;
  int nominal_mhz = 1000;
  int freq_step_mhz = 100;
  int min_freq_mhz = 800;
  bool secure_mode = false;
};

struct PmuActions {
  std::vector<std::pair<int, bool>> throttle;  ///< (core, active)
  std::optional<int> retune_mhz;

  void merge(const PmuActions& o);
};

struct ThrottleInterval {
  int core = 0;
  InstructionClass cls = InstructionClass::Scalar64b;
  Nanos start = 0;
  Nanos end = -1;  ///< -1 while still throttled
};

struct LimitPoint {
  double vcc_mv = 0.0;
  double icc_a = 0.0;
};

/// Central power-management unit. Driven by the scheduler through PHI
/// start/end notifications and advance(); never looks at the clock itself.
class Pmu {
 public:
  explicit Pmu(PmuParams params);

  PmuActions on_phi_start(int core, InstructionClass cls, Nanos now);
  PmuActions on_phi_end(int core, Nanos now);
  /// Completes VR transitions and expires hysteresis timers due by `now`.
  PmuActions advance(Nanos now);
  std::optional<Nanos> next_event_time() const;

  /// Voltage needed for the current demand at the current frequency.
  double target_for_vr(std::size_t vr) const;
  double domain_target() const { return target_for_vr(0); }
  double target_at(int mhz, const std::vector<InstructionClass>& levels,
                   std::size_t vr) const;
  LimitPoint operating_point(int mhz,
                             const std::vector<InstructionClass>& levels) const;
  /// Highest ladder frequency <= nominal that satisfies both limits.
  int enforce_limits(int nominal_mhz,
                     const std::vector<InstructionClass>& levels) const;

  double guardband(InstructionClass cls, int mhz) const;
  double vcc_at(int core, Nanos now) const;
  /// Current drawn by the granted levels at the present VR voltage.
  double icc_at(Nanos now) const;

  int freq_mhz() const { return freq_mhz_; }
  int nominal_mhz() const { return params_.nominal_mhz; }
  InstructionClass granted(int core) const { return granted_[core]; }
  InstructionClass demanded(int core) const { return demanded_[core]; }
  bool throttling(int core) const { return throttling_[core]; }
  std::optional<Nanos> hysteresis_deadline(int core) const { return deadline_[core]; }

  std::size_t vr_count() const { return vrs_.size(); }
  std::size_t vr_of(int core) const;
  const VoltageRegulator& vr(std::size_t i) const { return vrs_[i]; }
  const std::vector<ThrottleInterval>& throttle_log() const { return log_; }
  const PmuParams& params() const { return params_; }

 private:
  std::vector<InstructionClass> levels() const;
  void request_all(int requester, Nanos now);
  void release_settled(std::size_t vr, Nanos now, PmuActions& out);
  void set_throttle(int core, bool on, Nanos now, PmuActions& out);
  void apply_limits(PmuActions& out);

  PmuParams params_;
  int freq_mhz_;
  std::vector<VoltageRegulator> vrs_;
  std::vector<InstructionClass> granted_;
  std::vector<InstructionClass> demanded_;
  std::vector<bool> throttling_;
  std::vector<int> active_phi_;
  std::vector<std::optional<Nanos>> deadline_;
  std::vector<ThrottleInterval> log_;
  std::vector<std::size_t> open_log_;
};

}  // namespace ichsim
