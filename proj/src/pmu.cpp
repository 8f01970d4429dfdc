#include "ichsim/pmu.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace ichsim {

namespace {
constexpr double kEps = 1e-6;
}

void LimitsConfig::validate() const {
  if (!(vcc_min_mv < vcc_max_mv)) throw ConfigError("limits: vcc_min must be < vcc_max");
  if (!(icc_max_a > 0.0)) throw ConfigError("limits: icc_max must be > 0");
}

VfTable::VfTable(std::vector<std::pair<double, double>> ghz_mv)
    : pts_(std::move(ghz_mv)) {
  std::sort(pts_.begin(), pts_.end());
  if (pts_.empty()) throw ConfigError("V/f table is empty");
  for (std::size_t i = 1; i < pts_.size(); ++i) {
    if (pts_[i].first == pts_[i - 1].first) {
      throw ConfigError("V/f table has duplicate frequency");
    }
  }
}

double VfTable::at(double ghz) const {
  if (pts_.empty()) throw ConfigError("V/f table is empty");
  if (pts_.size() == 1) return pts_.front().second;
  std::size_t i = 1;
  while (i + 1 < pts_.size() && ghz > pts_[i].first) ++i;
  const auto& [f0, v0] = pts_[i - 1];
  const auto& [f1, v1] = pts_[i];
  return v0 + (v1 - v0) * (ghz - f0) / (f1 - f0);
}

void PmuActions::merge(const PmuActions& o) {
  throttle.insert(throttle.end(), o.throttle.begin(), o.throttle.end());
  if (o.retune_mhz) retune_mhz = o.retune_mhz;
}

Pmu::Pmu(PmuParams params) : params_(std::move(params)) {
  const int n = params_.cores;
  if (n <= 0) throw ConfigError("core count must be > 0");
  params_.limits.validate();
  params_.ll.validate();
  const InstructionClass base = params_.secure_mode
                                    ? InstructionClass::L512b_Heavy
                                    : InstructionClass::Scalar64b;
  granted_.assign(n, base);
  demanded_.assign(n, base);
  throttling_.assign(n, false);
  active_phi_.assign(n, 0);
  deadline_.assign(n, std::nullopt);
  open_log_.assign(n, 0);

  freq_mhz_ = enforce_limits(params_.nominal_mhz, levels());
  const std::size_t nvr = is_per_core(params_.vr_kind) ? n : 1;
  for (std::size_t i = 0; i < nvr; ++i) {
    vrs_.emplace_back(target_at(freq_mhz_, levels(), i), params_.slew_mv_per_us,
                      params_.limits.vcc_min_mv, params_.limits.vcc_max_mv,
                      params_.vr_merge);
  }
}

std::size_t Pmu::vr_of(int core) const {
  return is_per_core(params_.vr_kind) ? static_cast<std::size_t>(core) : 0;
}

std::vector<InstructionClass> Pmu::levels() const {
  std::vector<InstructionClass> out(granted_.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(granted_[i], demanded_[i]);
  }
  return out;
}

double Pmu::guardband(InstructionClass cls, int mhz) const {
  const double f = mhz / 1000.0;
  return guardband_delta(params_.cdyn[InstructionClass::Scalar64b],
                         params_.cdyn[cls], params_.vf.at(f), f, params_.ll);
}

double Pmu::target_at(int mhz, const std::vector<InstructionClass>& lv,
                      std::size_t vr) const {
  const double base = params_.vf.at(mhz / 1000.0);
  if (is_per_core(params_.vr_kind)) return base + guardband(lv[vr], mhz);
  std::vector<double> g;
  g.reserve(lv.size());
  for (auto c : lv) g.push_back(guardband(c, mhz));
  std::sort(g.begin(), g.end(), std::greater<>());
  double sum = g.front();
  for (std::size_t i = 1; i < g.size(); ++i) {
    sum += params_.secondary_core_weight * g[i];
  }
  return base + sum;
}

double Pmu::target_for_vr(std::size_t vr) const {
  return target_at(freq_mhz_, levels(), vr);
}

LimitPoint Pmu::operating_point(int mhz,
                                const std::vector<InstructionClass>& lv) const {
  LimitPoint p;
  const double f = mhz / 1000.0;
  p.icc_a = params_.icc.icc_lkg_a;
  for (std::size_t c = 0; c < lv.size(); ++c) {
    const double v = target_at(mhz, lv, is_per_core(params_.vr_kind) ? c : 0);
    p.vcc_mv = std::max(p.vcc_mv, v);
    p.icc_a += params_.cdyn[lv[c]] * v * f * kAmpsPerCdynMvGhz;
  }
  return p;
}

int Pmu::enforce_limits(int nominal_mhz,
                        const std::vector<InstructionClass>& lv) const {
  for (int mhz = nominal_mhz; mhz >= params_.min_freq_mhz;
       mhz -= params_.freq_step_mhz) {
    const LimitPoint p = operating_point(mhz, lv);
    if (p.vcc_mv <= params_.limits.vcc_max_mv + kEps &&
        p.icc_a <= params_.limits.icc_max_a + kEps) {
      return mhz;
    }
  }
  throw ConfigError("no frequency at or above the minimum bin satisfies the "
                    "Icc/Vcc limits");
}

void Pmu::set_throttle(int core, bool on, Nanos now, PmuActions& out) {
  if (throttling_[core] == on) return;
  throttling_[core] = on;
  if (on) {
    open_log_[core] = log_.size();
    log_.push_back({core, demanded_[core], now, -1});
  } else {
    log_[open_log_[core]].end = now;
  }
  out.throttle.emplace_back(core, on);
}

void Pmu::apply_limits(PmuActions& out) {
  const int mhz = enforce_limits(params_.nominal_mhz, levels());
  if (mhz != freq_mhz_) {
    freq_mhz_ = mhz;
    out.retune_mhz = mhz;
  }
}

void Pmu::request_all(int requester, Nanos now) {
  for (std::size_t i = 0; i < vrs_.size(); ++i) {
    const double t = target_for_vr(i);
    if (std::abs(vrs_[i].settled_target() - t) > kEps) {
      vrs_[i].request(requester, t, now);
    }
  }
}

void Pmu::release_settled(std::size_t vr, Nanos now, PmuActions& out) {
  const auto& r = vrs_[vr];
  if (r.busy() || r.pending() > 0) return;
  if (std::abs(r.current_vcc() - target_for_vr(vr)) > kEps) return;
  for (int c = 0; c < params_.cores; ++c) {
    if (vr_of(c) != vr || !(demanded_[c] > granted_[c])) continue;
    granted_[c] = demanded_[c];
    set_throttle(c, false, now, out);
  }
}

PmuActions Pmu::on_phi_start(int core, InstructionClass cls, Nanos now) {
  PmuActions out;
  ++active_phi_[core];
  if (params_.secure_mode) return out;
  deadline_[core] = now + params_.hysteresis_ns;
  if (!(cls > demanded_[core])) return out;
  demanded_[core] = cls;
  apply_limits(out);
  request_all(core, now);
  const std::size_t v = vr_of(core);
  const auto& r = vrs_[v];
  if (!r.busy() && r.pending() == 0 &&
      std::abs(r.current_vcc() - target_for_vr(v)) <= kEps) {
    granted_[core] = demanded_[core];
    return out;
  }
  set_throttle(core, true, now, out);
  return out;
}

PmuActions Pmu::on_phi_end(int core, Nanos now) {
  if (active_phi_[core] > 0) --active_phi_[core];
  if (!params_.secure_mode) deadline_[core] = now + params_.hysteresis_ns;
  return {};
}

PmuActions Pmu::advance(Nanos now) {
  PmuActions out;
  for (std::size_t i = 0; i < vrs_.size(); ++i) {
    if (!vrs_[i].step(now).empty()) release_settled(i, now, out);
  }
  bool changed = false;
  int requester = -1;
  for (int c = 0; c < params_.cores; ++c) {
    if (!deadline_[c] || *deadline_[c] > now) continue;
    if (active_phi_[c] > 0) {
      deadline_[c] = now + params_.hysteresis_ns;
      continue;
    }
    deadline_[c].reset();
    if (granted_[c] == InstructionClass::Scalar64b &&
        demanded_[c] == InstructionClass::Scalar64b) {
      continue;
    }
    granted_[c] = demanded_[c] = InstructionClass::Scalar64b;
    set_throttle(c, false, now, out);
    changed = true;
    requester = c;
  }
  if (changed) {
    apply_limits(out);
    request_all(requester, now);
  }
  return out;
}

std::optional<Nanos> Pmu::next_event_time() const {
  std::optional<Nanos> t;
  auto consider = [&](std::optional<Nanos> x) {
    if (x && (!t || *x < *t)) t = x;
  };
  for (const auto& r : vrs_) consider(r.next_completion());
  for (const auto& d : deadline_) consider(d);
  return t;
}

double Pmu::vcc_at(int core, Nanos now) const {
  return vrs_[vr_of(core)].voltage_at(now);
}

double Pmu::icc_at(Nanos now) const {
  const double f = freq_mhz_ / 1000.0;
  double icc = params_.icc.icc_lkg_a;
  for (int c = 0; c < params_.cores; ++c) {
    icc += params_.cdyn[granted_[c]] * vcc_at(c, now) * f * kAmpsPerCdynMvGhz;
  }
  return icc;
}

}  // namespace ichsim
