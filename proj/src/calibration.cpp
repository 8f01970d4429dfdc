#include "ichsim/calibration.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ichsim/machine.hpp"

namespace ichsim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double field_number(const std::string& s, int line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("targets line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

// Guardband in mV per unit of delta-cdyn at frequency f.
double x_of(const MachineConfig& cfg, double ghz) {
  return cfg.vf.at(ghz) * ghz * cfg.ll.r_ll_mohm * kAmpsPerCdynMvGhz;
}

double core_multiplier(double w2, int cores) { return 1.0 + w2 * (cores - 1); }

}  // namespace

std::vector<TpTarget> parse_targets(const std::string& text) {
  std::vector<TpTarget> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(trim(cell));
    if (header) {
      header = false;
      if (f.size() < 4 || f[0] != "class") {
        throw ConfigError("targets: expected header class,freq_GHz,cores,tp_us[,weight]");
      }
      continue;
    }
    if (f.size() != 4 && f.size() != 5) {
      throw ConfigError("targets line " + std::to_string(lineno) + ": expected 4 or 5 fields");
    }
    TpTarget t;
    auto cls = parse_class(f[0]);
    if (!cls) throw ConfigError("targets line " + std::to_string(lineno) + ": unknown class");
    t.cls = *cls;
    t.freq_ghz = field_number(f[1], lineno);
    t.cores = static_cast<int>(field_number(f[2], lineno));
    t.tp_us = field_number(f[3], lineno);
    if (f.size() == 5) t.weight = field_number(f[4], lineno);
    if (t.freq_ghz <= 0 || t.cores < 1 || t.tp_us < 0 || t.weight <= 0) {
      throw ConfigError("targets line " + std::to_string(lineno) + ": value out of range");
    }
    out.push_back(t);
  }
  if (out.empty()) throw ConfigError("targets file has no rows");
  return out;
}

std::vector<TpTarget> load_targets(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open targets file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_targets(ss.str());
}

TpMeasurement measure_tp(const MachineConfig& cfg, InstructionClass cls, int mhz,
                         int cores, std::optional<InstructionClass> prewarm) {
  if (cores < 1 || cores > cfg.cores) throw ConfigError("measure_tp: bad core count");
  Machine m(cfg.pmu_params(mhz), cfg.core_params());
  for (int c = 0; c < cores; ++c) {
    std::vector<Op> prog;
    if (c == 0 && prewarm) {
      LoopOp warm;
      warm.cls = *prewarm;
      warm.iterations = cfg.covert.sender_iterations;
      warm.uops_per_iteration = cfg.covert.sender_uops_per_iteration;
      prog.push_back(warm);
    }
    LoopOp loop;
    loop.cls = cls;
    loop.iterations = 100000;
    loop.uops_per_iteration = 1;
    loop.measure = c == 0;
    prog.push_back(loop);
    m.load_program(c, 0, std::move(prog));
  }
  if (!m.run_until_idle(100 * kNsPerMs)) throw ModelError("measure_tp: timeout");

  TpMeasurement out;
  out.admitted_mhz = m.pmu().freq_mhz();
  out.gate_stall_ns = m.core(0).stats().gate_stall_ns;
  const auto& vr = m.pmu().vr(m.pmu().vr_of(0));
  const Nanos loop_start = m.core(0).thread(0).measurements.at(0).start_ns;
  for (const auto& iv : m.pmu().throttle_log()) {
    if (iv.core != 0 || iv.cls != cls || iv.end < 0 || iv.start < loop_start) continue;
    out.tp_ns += iv.end - iv.start;
    for (const auto& t : vr.history()) {
      if (t.start >= iv.start && t.start < iv.end) ++out.transitions;
    }
  }
  return out;
}

double analytic_tp_ns(const MachineConfig& cfg, InstructionClass cls, int mhz, int cores) {
  const VRKind kind = cfg.effective_vr_kind();
  const double slew = *cfg.slew[static_cast<int>(kind)];
  const double ghz = mhz / 1000.0;
  const double g = ((*cfg.cdyn)[cls] - (*cfg.cdyn)[InstructionClass::Scalar64b]) * x_of(cfg, ghz);
  const double mv = is_per_core(kind) ? g : g * core_multiplier(*cfg.secondary_core_weight, cores);
  return mv / slew * 1000.0;
}

CalibratedParams calibrate_model(const MachineConfig& cfg, const std::vector<TpTarget>& targets) {
  const auto& cal = cfg.calibration;
  CalibratedParams p;
  for (const auto& t : targets) {
    if (t.cores > cfg.cores) throw ConfigError("target needs more cores than configured");
  }

  // Alternating weighted least squares on TP = a_c * x(f) * (1 + w2*(n-1)).
  const bool fit_w2 = !cfg.secondary_core_weight.has_value();
  double w2 = fit_w2 ? 1.0 : *cfg.secondary_core_weight;
  std::array<double, kNumClasses> a{};
  for (int iter = 0; iter < 200; ++iter) {
    for (std::size_t c = 1; c < kNumClasses; ++c) {
      double num = 0, den = 0;
      for (const auto& t : targets) {
        if (index_of(t.cls) != c) continue;
        const double u = x_of(cfg, t.freq_ghz) * core_multiplier(w2, t.cores);
        num += t.weight * t.tp_us * u;
        den += t.weight * u * u;
      }
      if (den == 0) {
        throw CalibrationError("no targets for class " + std::string(to_string(kAllClasses[c])));
      }
      a[c] = num / den;
    }
    if (!fit_w2) break;
    double num = 0, den = 0;
    for (const auto& t : targets) {
      if (t.cores < 2) continue;
      const double base = a[index_of(t.cls)] * x_of(cfg, t.freq_ghz);
      const double u = base * (t.cores - 1);
      num += t.weight * (t.tp_us - base) * u;
      den += t.weight * u * u;
    }
    if (den == 0) throw CalibrationError("no multi-core targets to fit the secondary weight");
    const double next = num / den;
    const bool converged = std::abs(next - w2) < 1e-12;
    w2 = next;
    if (converged) break;
  }
  p.ramp_per_x = a;
  p.secondary_core_weight = w2;

  // Gauge: the absolute delta-cdyn of L256b_Heavy comes from a measured
  // guardband step; the slew then follows from its fitted ramp time.
  const auto mb = static_cast<int>(VRKind::SharedMotherboard);
  const auto gauge = InstructionClass::L256b_Heavy;
  if (cfg.slew[mb]) {
    p.slew[mb] = *cfg.slew[mb];
  } else {
    const double dw = cal.gauge_mv / (cal.gauge_vcc_mv * cal.gauge_freq_ghz *
                                       cal.gauge_r_ll_mohm * kAmpsPerCdynMvGhz);
    p.slew[mb] = dw / a[index_of(gauge)];
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) p.cdyn.weight[c] = 1.0 + a[c] * p.slew[mb];
  if (!p.cdyn.strictly_increasing()) {
    throw CalibrationError("fitted cdyn table is not strictly increasing");
  }

  const double full_mv = (p.cdyn[InstructionClass::L512b_Heavy] - p.cdyn[InstructionClass::Scalar64b]) *
                         x_of(cfg, cal.ramp_freq_ghz);
  const auto ivr = static_cast<int>(VRKind::Integrated);
  const auto ldo = static_cast<int>(VRKind::PerCoreLDO);
  p.slew[ivr] = cfg.slew[ivr] ? *cfg.slew[ivr] : full_mv / cal.ivr_ramp_us;
  p.slew[ldo] = cfg.slew[ldo] ? *cfg.slew[ldo] : full_mv / cal.ldo_ramp_us;
  p.full_ramp_mbvr_us = full_mv / p.slew[mb];
  p.full_ramp_ivr_us = full_mv / p.slew[ivr];
  p.full_ramp_ldo_us = full_mv / p.slew[ldo];
  if (p.full_ramp_mbvr_us < cal.mbvr_ramp_us.first - 1e-9 ||
      p.full_ramp_mbvr_us > cal.mbvr_ramp_us.second + 1e-9) {
    throw CalibrationError("full-ramp TP on the shared VR is " + std::to_string(p.full_ramp_mbvr_us) +
                           " us, outside the configured band");
  }

  // Cross-check every point by simulation on the shared-VR machine.
  MachineConfig sim = apply_calibration(cfg, p);
  sim.mitigation = Mitigations{};
  sim.vr_kind = VRKind::SharedMotherboard;
  for (const auto& t : targets) {
    PointCheck pc;
    pc.target = t;
    pc.fitted_us = a[index_of(t.cls)] * x_of(cfg, t.freq_ghz) * core_multiplier(w2, t.cores);
    const int mhz = static_cast<int>(std::lround(t.freq_ghz * 1000));
    const TpMeasurement m = measure_tp(sim, t.cls, mhz, t.cores);
    pc.simulated_us = m.tp_ns / 1000.0;
    pc.transitions = m.transitions;
    pc.analytic_us = analytic_tp_ns(sim, t.cls, mhz, t.cores) / 1000.0;
    const double cycle_ns = 1000.0 / mhz;
    pc.oracle_ok = std::abs(m.tp_ns - pc.analytic_us * 1000.0) <= m.transitions * 1.0 + cycle_ns;
    pc.residual = t.tp_us > 0 ? std::abs(pc.simulated_us - t.tp_us) / t.tp_us
                              : std::abs(pc.simulated_us);
    if (t.weight > 1.0 && pc.residual > cal.tolerance) {
      throw CalibrationError("anchor " + std::string(to_string(t.cls)) + " residual " +
                             std::to_string(pc.residual) + " exceeds tolerance");
    }
    p.oracle_ok = p.oracle_ok && pc.oracle_ok;
    p.points.push_back(pc);
  }
  return p;
}

CalibratedParams calibrate_model(const MachineConfig& cfg) {
  std::string path = cfg.calibration.targets_path;
  if (!path.empty() && path.front() != '/') path = cfg.base_dir + "/" + path;
  return calibrate_model(cfg, load_targets(path));
}

MachineConfig apply_calibration(MachineConfig cfg, const CalibratedParams& p) {
  cfg.cdyn = p.cdyn;
  for (int i = 0; i < 3; ++i) cfg.slew[i] = p.slew[i];
  cfg.secondary_core_weight = p.secondary_core_weight;
  return cfg;
}

MachineConfig resolve_calibration(const MachineConfig& cfg) {
  if (!cfg.needs_calibration()) return cfg;
  return apply_calibration(cfg, calibrate_model(cfg));
}

}  // namespace ichsim
