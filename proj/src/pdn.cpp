#include "ichsim/pdn.hpp"

#include <cmath>
#include <string>

namespace ichsim {

namespace {
constexpr double kMvEpsilon = 1e-9;
}

void LoadLineParams::validate() const {
  if (!(r_ll_mohm > 0.0)) throw ConfigError("load-line resistance must be > 0");
}

double IccModel::icc(double cdyn, double vcc_mv, double freq_ghz) const {
  return cdyn * vcc_mv * freq_ghz * kAmpsPerCdynMvGhz + icc_lkg_a;
}

std::string_view to_string(VRKind k) {
  switch (k) {
    case VRKind::SharedMotherboard:
      return "SharedMotherboard";
    case VRKind::Integrated:
      return "Integrated";
    case VRKind::PerCoreLDO:
      return "PerCoreLDO";
  }
  return "?";
}

std::optional<VRKind> parse_vr_kind(std::string_view s) {
  if (s == "SharedMotherboard" || s == "MBVR") return VRKind::SharedMotherboard;
  if (s == "Integrated" || s == "IVR") return VRKind::Integrated;
  if (s == "PerCoreLDO" || s == "LDO") return VRKind::PerCoreLDO;
  return std::nullopt;
}

double load_voltage(double vcc_mv, double icc_a, const LoadLineParams& ll) {
  if (icc_a < 0.0) throw ModelError("load_voltage: negative current");
  return vcc_mv - ll.r_ll_mohm * icc_a;
}

double guardband_delta(double cdyn_from, double cdyn_to, double vcc1_mv,
                       double freq_ghz, const LoadLineParams& ll) {
  return (cdyn_to - cdyn_from) * vcc1_mv * freq_ghz * ll.r_ll_mohm *
         kAmpsPerCdynMvGhz;
}

Nanos transition_duration(double delta_mv, double slew_mv_per_us) {
  if (!(slew_mv_per_us > 0.0)) throw ModelError("slew rate must be > 0");
  const double ns = std::abs(delta_mv) * 1000.0 / slew_mv_per_us;
  return static_cast<Nanos>(std::ceil(ns - 1e-6));
}

VoltageRegulator::VoltageRegulator(double initial_mv, double slew_mv_per_us,
                                   double vcc_min_mv, double vcc_max_mv,
                                   bool merge_requests)
    : current_mv_(initial_mv),
      slew_(slew_mv_per_us),
      vmin_(vcc_min_mv),
      vmax_(vcc_max_mv),
      merge_(merge_requests) {
  if (!(slew_ > 0.0)) throw ModelError("slew rate must be > 0");
}

Nanos VoltageRegulator::chain_end() const {
  if (!in_flight_) return last_step_;
  Nanos t = in_flight_->end;
  double v = in_flight_->target_mv;
  for (const auto& p : queue_) {
    t += transition_duration(p.target_mv - v, slew_);
    v = p.target_mv;
  }
  return t;
}

double VoltageRegulator::settled_target() const {
  if (!queue_.empty()) return queue_.back().target_mv;
  if (in_flight_) return in_flight_->target_mv;
  return current_mv_;
}

std::optional<Nanos> VoltageRegulator::next_completion() const {
  if (!in_flight_) return std::nullopt;
  return in_flight_->end;
}

VRAck VoltageRegulator::request(int core, double target_mv, Nanos now) {
  if (target_mv > vmax_ + kMvEpsilon || target_mv < vmin_ - kMvEpsilon) {
    throw ModelError("VR target " + std::to_string(target_mv) +
                     " mV outside [" + std::to_string(vmin_) + ", " +
                     std::to_string(vmax_) + "]");
  }
  if (now < last_step_) throw ModelError("VR request in the past");

  if (!in_flight_) {
    if (std::abs(target_mv - current_mv_) < kMvEpsilon) return {now, false};
    in_flight_ = VRTransition{core, current_mv_, target_mv, now,
                              now + transition_duration(target_mv - current_mv_, slew_)};
    return {in_flight_->end, false};
  }

  if (merge_) {
    const double v = voltage_at(now);
    queue_.clear();
    in_flight_ = VRTransition{core, v, target_mv, now,
                              now + transition_duration(target_mv - v, slew_)};
    return {in_flight_->end, false};
  }

  // Drop queued step-downs that a higher request would immediately undo.
  double prev = in_flight_->target_mv;
  std::deque<Pending> kept;
  for (const auto& p : queue_) {
    const bool step_down = p.target_mv < prev;
    if (!(step_down && p.target_mv < target_mv)) kept.push_back(p);
    prev = p.target_mv;
  }
  queue_ = std::move(kept);
  queue_.push_back(Pending{core, target_mv, now});
  return {chain_end(), true};
}

void VoltageRegulator::start_next(Nanos at) {
  while (!queue_.empty()) {
    Pending p = queue_.front();
    queue_.pop_front();
    if (std::abs(p.target_mv - current_mv_) < kMvEpsilon) continue;
    in_flight_ = VRTransition{p.core, current_mv_, p.target_mv, at,
                              at + transition_duration(p.target_mv - current_mv_, slew_)};
    return;
  }
}

std::vector<VRTransition> VoltageRegulator::step(Nanos now) {
  if (now < last_step_) throw ModelError("VR step: time regression");
  std::vector<VRTransition> done;
  while (in_flight_ && in_flight_->end <= now) {
    VRTransition t = *in_flight_;
    in_flight_.reset();
    current_mv_ = t.target_mv;
    history_.push_back(t);
    done.push_back(t);
    start_next(t.end);
  }
  last_step_ = now;
  return done;
}

double VoltageRegulator::voltage_at(Nanos now) const {
  if (!in_flight_) return current_mv_;
  const auto& t = *in_flight_;
  if (now <= t.start) return t.start_mv;
  if (now >= t.end) return t.target_mv;
  const double frac = static_cast<double>(now - t.start) /
                      static_cast<double>(t.end - t.start);
  return t.start_mv + (t.target_mv - t.start_mv) * frac;
}

}  // namespace ichsim
