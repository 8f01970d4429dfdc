#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "ichsim/instruction.hpp"

namespace ichsim {

/// Amperes drawn per (cdyn weight x mV x GHz). Fixes the scale of the
/// dimensionless cdyn weights (Scalar64b == 1.0).
inline constexpr double kAmpsPerCdynMvGhz = 0.003;

struct LoadLineParams {
  double r_ll_mohm = 2.0;  ///< load-line resistance, milliohms

  void validate() const;
};

/// Supply current as a function of switched capacitance, voltage and clock.
struct IccModel {
  double icc_lkg_a = 0.0;  ///< leakage floor, amperes

  double icc(double cdyn, double vcc_mv, double freq_ghz) const;
};

enum class VRKind { SharedMotherboard, Integrated, PerCoreLDO };

std::string_view to_string(VRKind k);
std::optional<VRKind> parse_vr_kind(std::string_view s);

/// PerCoreLDO regulators serve a single core; the other kinds serve the
/// whole compute domain.
constexpr bool is_per_core(VRKind k) { return k == VRKind::PerCoreLDO; }

/// Voltage at the load after the load-line drop. Milliohm x ampere is
/// millivolt, so no unit conversion is needed.
double load_voltage(double vcc_mv, double icc_a, const LoadLineParams& ll);

/// Guardband step between two power-virus levels:
/// (cdyn_to - cdyn_from) * vcc1 * F * R_LL * k.
double guardband_delta(double cdyn_from, double cdyn_to, double vcc1_mv,
                       double freq_ghz, const LoadLineParams& ll);

/// Nanoseconds for a ramp of |delta_mv| at the given slew, rounded up to
/// the next tick.
Nanos transition_duration(double delta_mv, double slew_mv_per_us);

struct VRTransition {
  int requester = -1;
  double start_mv = 0.0;
  double target_mv = 0.0;
  Nanos start = 0;
  Nanos end = 0;
};

struct VRAck {
  Nanos completion = 0;
  bool queued = false;
};

/// A voltage regulator with serialized transitions. At most one transition
/// is in flight; later requests wait in FIFO order and start from wherever
/// the previous one ended.
class VoltageRegulator {
 public:
  VoltageRegulator(double initial_mv, double slew_mv_per_us, double vcc_min_mv,
                   double vcc_max_mv, bool merge_requests = false);

  /// Requests a ramp to target_mv. Throws ModelError when the target lies
  /// outside [vcc_min, vcc_max].
  VRAck request(int core, double target_mv, Nanos now);

  /// Advances to `now`, completing every transition whose end <= now and
  /// starting queued ones back to back. Time regression throws ModelError.
  std::vector<VRTransition> step(Nanos now);

  double voltage_at(Nanos now) const;
  double current_vcc() const { return current_mv_; }
  double slew() const { return slew_; }

  bool busy() const { return in_flight_.has_value(); }
  /// End of the in-flight transition, if any.
  std::optional<Nanos> next_completion() const;
  /// Voltage once every queued transition has completed.
  double settled_target() const;
  std::size_t pending() const { return queue_.size(); }

  const std::vector<VRTransition>& history() const { return history_; }

 private:
  struct Pending {
    int core;
    double target_mv;
    Nanos requested;
  };

  void start_next(Nanos at);
  Nanos chain_end() const;

  double current_mv_;
  double slew_;
  double vmin_;
  double vmax_;
  bool merge_;
  Nanos last_step_ = 0;
  std::optional<VRTransition> in_flight_;
  std::deque<Pending> queue_;
  std::vector<VRTransition> history_;
};

}  // namespace ichsim
