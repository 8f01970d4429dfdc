#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ichsim/config.hpp"

namespace ichsim {

struct TpTarget {
  InstructionClass cls = InstructionClass::Scalar64b;
  double freq_ghz = 1.0;
  int cores = 1;
  double tp_us = 0.0;
  double weight = 1.0;
};

/// CSV with header `class,freq_GHz,cores,tp_us[,weight]`; '#' starts a comment.
std::vector<TpTarget> parse_targets(const std::string& text);
std::vector<TpTarget> load_targets(const std::string& path);

struct TpMeasurement {
  Nanos tp_ns = 0;          ///< throttled time of core 0 for the measured loop
  int transitions = 0;      ///< VR transitions started while throttled
  Nanos gate_stall_ns = 0;  ///< power-gate wake stall charged to core 0
  int admitted_mhz = 0;
};

/// Runs `cls` from reset on the first `cores` cores (thread 0 each), all
/// starting together, optionally preceded on core 0 by a `prewarm` loop.
TpMeasurement measure_tp(const MachineConfig& cfg, InstructionClass cls, int mhz,
                         int cores, std::optional<InstructionClass> prewarm = std::nullopt);

/// Closed-form TP in ns: serialized guardband ramps for `cores` cores that
/// request `cls` at the same instant, divided by the slew.
double analytic_tp_ns(const MachineConfig& cfg, InstructionClass cls, int mhz, int cores);

struct PointCheck {
  TpTarget target;
  double fitted_us = 0.0;
  double simulated_us = 0.0;
  double analytic_us = 0.0;
  int transitions = 0;
  double residual = 0.0;  ///< |simulated - target| / target
  bool oracle_ok = true;
};

struct CalibratedParams {
  CdynTable cdyn{};
  std::array<double, 3> slew{};  ///< indexed by VRKind
  double secondary_core_weight = 1.0;
  std::array<double, kNumClasses> ramp_per_x{};  ///< fitted delta-cdyn / slew
  double full_ramp_mbvr_us = 0.0;
  double full_ramp_ivr_us = 0.0;
  double full_ramp_ldo_us = 0.0;
  std::vector<PointCheck> points;
  bool oracle_ok = true;
};

/// Weighted least-squares fit of the cdyn table, slews and the secondary
/// core weight to the TP targets, followed by a simulated cross-check of
/// every point. Throws CalibrationError on a non-monotone table, a full
/// ramp outside the configured band, or an anchor residual over tolerance.
CalibratedParams calibrate_model(const MachineConfig& cfg, const std::vector<TpTarget>& targets);
CalibratedParams calibrate_model(const MachineConfig& cfg);

MachineConfig apply_calibration(MachineConfig cfg, const CalibratedParams& p);
/// Returns cfg unchanged when fully specified, else calibrated.
MachineConfig resolve_calibration(const MachineConfig& cfg);

}  // namespace ichsim
