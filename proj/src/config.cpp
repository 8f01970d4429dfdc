#include "ichsim/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ichsim {

namespace {

enum class Kind {
  Int,
  Num,
  Bool,
  Str,
  NumList,
  Pairs,    // a:b, c:d
  Range,    // a:b
  Triples,  // a:b:c, ...
  NumOrCalibrate,
  ListOrCalibrate,
  Class,
  VrKind,
  NoiseKindT,
};

struct KeySpec {
  Kind kind;
  const char* def;
};

const std::map<std::string, KeySpec>& schema() {
  static const std::map<std::string, KeySpec> s{
      {"machine.cores", {Kind::Int, "2"}},
      {"machine.freq_ghz", {Kind::NumList, "1.0, 1.2, 1.4"}},
      {"seed", {Kind::Int, "1"}},
      {"pdn.vr_kind", {Kind::VrKind, "SharedMotherboard"}},
      {"pdn.r_ll_mohm", {Kind::Num, "2.4"}},
      {"pdn.icc_lkg_a", {Kind::Num, "4.0"}},
      {"pdn.vr_merge", {Kind::Bool, "false"}},
      {"pdn.slew_mbvr", {Kind::NumOrCalibrate, "calibrate"}},
      {"pdn.slew_ivr", {Kind::NumOrCalibrate, "calibrate"}},
      {"pdn.slew_ldo", {Kind::NumOrCalibrate, "calibrate"}},
      {"vf.table", {Kind::Pairs, "1.0:650, 1.2:700, 1.4:750, 2.2:850, 3.1:1000"}},
      {"model.cdyn", {Kind::ListOrCalibrate, "calibrate"}},
      {"pmu.secondary_core_weight", {Kind::NumOrCalibrate, "calibrate"}},
      {"pmu.hysteresis_us", {Kind::Num, "650"}},
      {"pmu.freq_step_mhz", {Kind::Int, "100"}},
      {"pmu.min_freq_ghz", {Kind::Num, "0.8"}},
      {"limits.icc_max_a", {Kind::Num, "29"}},
      {"limits.vcc_max_mv", {Kind::Num, "1150"}},
      {"limits.vcc_min_mv", {Kind::Num, "550"}},
      {"limits.tj_max_c", {Kind::Num, "100"}},
      {"core.wake_latency_ns", {Kind::Int, "12"}},
      {"core.gate_close_us", {Kind::Num, "650"}},
      {"mitigation.per_core_vr", {Kind::Bool, "false"}},
      {"mitigation.improved_throttling", {Kind::Bool, "false"}},
      {"mitigation.secure_mode", {Kind::Bool, "false"}},
      {"covert.epoch_us", {Kind::Num, "690"}},
      {"covert.sender_iterations", {Kind::Int, "3000"}},
      {"covert.sender_uops", {Kind::Int, "2"}},
      {"covert.receiver_uops", {Kind::Int, "8"}},
      {"covert.receiver_iterations", {Kind::NumList, "1000, 1500, 750"}},
      {"covert.crosscore_offset_ns", {Kind::Int, "100"}},
      {"covert.calibration_repeats", {Kind::Int, "50"}},
      {"covert.min_gap_cycles", {Kind::Int, "2000"}},
      {"covert.bits", {Kind::Int, "1000"}},
      {"noise.event_rate_hz", {Kind::Num, "0"}},
      {"noise.kind", {Kind::NoiseKindT, "interrupt"}},
      {"noise.interrupt_latency_us", {Kind::Range, "2:10"}},
      {"noise.context_switch_latency_us", {Kind::Range, "10:30"}},
      {"noise.app_phi_rate_hz", {Kind::Num, "0"}},
      {"noise.app_phi_iterations", {Kind::Int, "1000"}},
      {"sweep.seeds", {Kind::Int, "20"}},
      {"sweep.bits", {Kind::Int, "200"}},
      {"sweep.event_rates", {Kind::NumList, "0, 100, 500, 1000, 2000, 5000"}},
      {"sweep.app_rates", {Kind::NumList, "10, 100, 1000, 10000"}},
      {"calibration.targets", {Kind::Str, "tp_targets.csv"}},
      {"calibration.gauge_mv", {Kind::Num, "8.5"}},
      {"calibration.gauge_vcc_mv", {Kind::Num, "788"}},
      {"calibration.gauge_freq_ghz", {Kind::Num, "2.0"}},
      {"calibration.gauge_r_ll_mohm", {Kind::Num, "1.6"}},
      {"calibration.mbvr_ramp_us", {Kind::Range, "12:15"}},
      {"calibration.ivr_ramp_us", {Kind::Num, "9"}},
      {"calibration.ldo_ramp_us", {Kind::Num, "0.4"}},
      {"calibration.ramp_freq_ghz", {Kind::Num, "1.4"}},
      {"calibration.tolerance", {Kind::Num, "0.01"}},
      {"guardband.phases", {Kind::Triples, "0:0.4:2.0, 1:0.8:2.1"}},
      {"guardband.class", {Kind::Class, "L256b_Heavy"}},
      {"guardband.sample_ms", {Kind::Num, "10"}},
      {"guardband.duration_s", {Kind::Num, "2.5"}},
      {"guardband.freq_ghz", {Kind::Num, "2.0"}},
      {"limits_demo.nominal_ghz", {Kind::Num, "3.1"}},
      {"limits_demo.cores", {Kind::Int, "2"}},
      {"limits_demo.class", {Kind::Class, "L256b_Heavy"}},
  };
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double to_number(const std::string& key, const std::string& tok) {
  if (tok.empty()) throw ConfigError(key + ": empty number");
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || !std::isfinite(v)) {
    throw ConfigError(key + ": not a number: '" + tok + "'");
  }
  return v;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string norm_tuple(const std::string& key, const std::string& tok, std::size_t arity) {
  auto fields = split(tok, ':');
  if (fields.size() != arity) {
    throw ConfigError(key + ": expected " + std::to_string(arity) +
                      " ':'-separated fields in '" + tok + "'");
  }
  for (auto& f : fields) f = fmt(to_number(key, f));
  return join(fields, ":");
}

std::string normalize(const std::string& key, Kind kind, const std::string& raw) {
  const std::string v = trim(raw);
  switch (kind) {
    case Kind::Int: {
      const double d = to_number(key, v);
      if (d != std::floor(d)) throw ConfigError(key + ": expected an integer");
      return fmt(d);
    }
    case Kind::Num:
      return fmt(to_number(key, v));
    case Kind::Bool:
      if (v == "true" || v == "yes" || v == "on" || v == "1") return "true";
      if (v == "false" || v == "no" || v == "off" || v == "0") return "false";
      throw ConfigError(key + ": expected a boolean");
    case Kind::Str:
      if (v.empty()) throw ConfigError(key + ": empty value");
      return v;
    case Kind::NumList: {
      auto parts = split(v, ',');
      if (parts.empty()) throw ConfigError(key + ": empty list");
      for (auto& p : parts) p = fmt(to_number(key, p));
      return join(parts, ", ");
    }
    case Kind::Pairs:
    case Kind::Triples: {
      auto parts = split(v, ',');
      if (parts.empty()) throw ConfigError(key + ": empty list");
      for (auto& p : parts) p = norm_tuple(key, p, kind == Kind::Pairs ? 2 : 3);
      return join(parts, ", ");
    }
    case Kind::Range: {
      auto r = norm_tuple(key, v, 2);
      const auto f = split(r, ':');
      if (!(to_number(key, f[0]) <= to_number(key, f[1]))) {
        throw ConfigError(key + ": range must be ordered");
      }
      return r;
    }
    case Kind::NumOrCalibrate:
      if (v == "calibrate") return v;
      return fmt(to_number(key, v));
    case Kind::ListOrCalibrate: {
      if (v == "calibrate") return v;
      auto parts = split(v, ',');
      if (parts.size() != kNumClasses) {
        throw ConfigError(key + ": expected " + std::to_string(kNumClasses) + " values");
      }
      for (auto& p : parts) p = fmt(to_number(key, p));
      return join(parts, ", ");
    }
    case Kind::Class: {
      auto c = parse_class(v);
      if (!c) throw ConfigError(key + ": unknown instruction class '" + v + "'");
      return std::string(to_string(*c));
    }
    case Kind::VrKind: {
      auto k = parse_vr_kind(v);
      if (!k) throw ConfigError(key + ": unknown VR kind '" + v + "'");
      return std::string(to_string(*k));
    }
    case Kind::NoiseKindT:
      if (v == "interrupt") return v;
      if (v == "context_switch") return v;
      throw ConfigError(key + ": expected interrupt or context_switch");
  }
  return v;
}

Nanos us_to_ns(double us) { return static_cast<Nanos>(std::llround(us * 1000.0)); }
int ghz_to_mhz(double ghz) { return static_cast<int>(std::lround(ghz * 1000.0)); }

}  // namespace

std::string_view to_string(NoiseKind k) {
  return k == NoiseKind::Interrupt ? "interrupt" : "context_switch";
}

void NoiseParams::validate() const {
  if (event_rate_hz < 0 || app_phi_rate_hz < 0) {
    throw ConfigError("noise rates must be >= 0");
  }
  for (auto r : {interrupt_latency, context_switch_latency}) {
    if (r.first <= 0 || r.first > r.second) {
      throw ConfigError("noise latency ranges must be positive and ordered");
    }
  }
}

std::vector<double> parse_number_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& p : split(s, ',')) out.push_back(to_number("list", p));
  return out;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

MachineConfig::MachineConfig() {
  for (const auto& [k, spec] : schema()) values_[k] = normalize(k, spec.kind, spec.def);
  derive();
}

void MachineConfig::assign(const std::string& key, const std::string& value) {
  const auto it = schema().find(key);
  if (it == schema().end()) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = normalize(key, it->second.kind, value);
}

void MachineConfig::set(const std::string& key, const std::string& value) {
  assign(key, value);
  derive();
}

bool MachineConfig::needs_calibration() const {
  if (!cdyn || !secondary_core_weight) return true;
  for (const auto& s : slew) {
    if (!s) return true;
  }
  return false;
}

void MachineConfig::derive() {
  auto num = [&](const char* k) { return to_number(k, values_.at(k)); };
  auto integer = [&](const char* k) { return static_cast<std::int64_t>(num(k)); };
  auto flag = [&](const char* k) { return values_.at(k) == "true"; };
  auto range = [&](const char* k) {
    const auto f = split(values_.at(k), ':');
    return std::pair<double, double>{to_number(k, f[0]), to_number(k, f[1])};
  };
  auto maybe = [&](const char* k, std::optional<double>& dst) {
    if (values_.at(k) != "calibrate") dst = num(k);
  };

  cores = static_cast<int>(integer("machine.cores"));
  if (cores < 1 || cores > 64) throw ConfigError("machine.cores out of range");
  freqs_mhz.clear();
  for (double g : parse_number_list(values_.at("machine.freq_ghz"))) {
    if (!(g > 0)) throw ConfigError("machine.freq_ghz must be > 0");
    freqs_mhz.push_back(ghz_to_mhz(g));
  }
  seed = static_cast<std::uint64_t>(integer("seed"));
  vr_kind = *parse_vr_kind(values_.at("pdn.vr_kind"));
  vr_merge = flag("pdn.vr_merge");
  ll.r_ll_mohm = num("pdn.r_ll_mohm");
  ll.validate();
  icc.icc_lkg_a = num("pdn.icc_lkg_a");
  if (icc.icc_lkg_a < 0) throw ConfigError("pdn.icc_lkg_a must be >= 0");
  maybe("pdn.slew_mbvr", slew[static_cast<int>(VRKind::SharedMotherboard)]);
  maybe("pdn.slew_ivr", slew[static_cast<int>(VRKind::Integrated)]);
  maybe("pdn.slew_ldo", slew[static_cast<int>(VRKind::PerCoreLDO)]);
  for (const auto& s : slew) {
    if (s && !(*s > 0)) throw ConfigError("slew rates must be > 0");
  }
  {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : split(values_.at("vf.table"), ',')) {
      const auto f = split(p, ':');
      pts.emplace_back(to_number("vf.table", f[0]), to_number("vf.table", f[1]));
    }
    vf = VfTable(std::move(pts));
  }
  if (values_.at("model.cdyn") != "calibrate") {
    CdynTable t;
    const auto v = parse_number_list(values_.at("model.cdyn"));
    for (std::size_t i = 0; i < kNumClasses; ++i) t.weight[i] = v[i];
    if (!t.strictly_increasing()) {
      throw ConfigError("model.cdyn must be positive and strictly increasing");
    }
    cdyn = t;
  }
  maybe("pmu.secondary_core_weight", secondary_core_weight);
  if (secondary_core_weight && *secondary_core_weight < 0) {
    throw ConfigError("pmu.secondary_core_weight must be >= 0");
  }
  hysteresis_ns = us_to_ns(num("pmu.hysteresis_us"));
  freq_step_mhz = static_cast<int>(integer("pmu.freq_step_mhz"));
  min_freq_mhz = ghz_to_mhz(num("pmu.min_freq_ghz"));
  if (freq_step_mhz <= 0) throw ConfigError("pmu.freq_step_mhz must be > 0");
  limits.icc_max_a = num("limits.icc_max_a");
  limits.vcc_max_mv = num("limits.vcc_max_mv");
  limits.vcc_min_mv = num("limits.vcc_min_mv");
  limits.tj_max_c = num("limits.tj_max_c");
  limits.validate();
  wake_latency_ns = integer("core.wake_latency_ns");
  if (wake_latency_ns < 0) throw ConfigError("core.wake_latency_ns must be >= 0");
  gate_close_ns = us_to_ns(num("core.gate_close_us"));
  mitigation.per_core_vr = flag("mitigation.per_core_vr");
  mitigation.improved_throttling = flag("mitigation.improved_throttling");
  mitigation.secure_mode = flag("mitigation.secure_mode");

  covert.epoch_ns = us_to_ns(num("covert.epoch_us"));
  covert.sender_iterations = integer("covert.sender_iterations");
  covert.sender_uops_per_iteration = static_cast<int>(integer("covert.sender_uops"));
  covert.receiver_uops_per_iteration = static_cast<int>(integer("covert.receiver_uops"));
  {
    const auto r = parse_number_list(values_.at("covert.receiver_iterations"));
    if (r.size() != 3) throw ConfigError("covert.receiver_iterations needs 3 values");
    for (int i = 0; i < 3; ++i) covert.receiver_iterations[i] = static_cast<std::int64_t>(r[i]);
  }
  covert.crosscore_receiver_offset_ns = integer("covert.crosscore_offset_ns");
  covert.calibration_repeats = static_cast<int>(integer("covert.calibration_repeats"));
  covert.min_level_gap_cycles = integer("covert.min_gap_cycles");
  covert.transcript_bits = static_cast<int>(integer("covert.bits"));
  if (covert.epoch_ns <= 0 || covert.sender_iterations <= 0 ||
      covert.calibration_repeats <= 0 || covert.transcript_bits % 2 != 0) {
    throw ConfigError("covert parameters out of range");
  }

  noise.event_rate_hz = num("noise.event_rate_hz");
  noise.kind = values_.at("noise.kind") == "interrupt" ? NoiseKind::Interrupt
                                                       : NoiseKind::ContextSwitch;
  {
    const auto a = range("noise.interrupt_latency_us");
    const auto b = range("noise.context_switch_latency_us");
    noise.interrupt_latency = {us_to_ns(a.first), us_to_ns(a.second)};
    noise.context_switch_latency = {us_to_ns(b.first), us_to_ns(b.second)};
  }
  noise.app_phi_rate_hz = num("noise.app_phi_rate_hz");
  noise.app_phi_iterations = integer("noise.app_phi_iterations");
  noise.validate();

  sweep.seeds = static_cast<int>(integer("sweep.seeds"));
  sweep.bits = static_cast<int>(integer("sweep.bits"));
  sweep.event_rates = parse_number_list(values_.at("sweep.event_rates"));
  sweep.app_rates = parse_number_list(values_.at("sweep.app_rates"));
  if (sweep.seeds <= 0 || sweep.bits <= 0 || sweep.bits % 2 != 0) {
    throw ConfigError("sweep.seeds must be > 0 and sweep.bits even");
  }

  calibration.targets_path = values_.at("calibration.targets");
  calibration.gauge_mv = num("calibration.gauge_mv");
  calibration.gauge_vcc_mv = num("calibration.gauge_vcc_mv");
  calibration.gauge_freq_ghz = num("calibration.gauge_freq_ghz");
  calibration.gauge_r_ll_mohm = num("calibration.gauge_r_ll_mohm");
  calibration.mbvr_ramp_us = range("calibration.mbvr_ramp_us");
  calibration.ivr_ramp_us = num("calibration.ivr_ramp_us");
  calibration.ldo_ramp_us = num("calibration.ldo_ramp_us");
  calibration.ramp_freq_ghz = num("calibration.ramp_freq_ghz");
  calibration.tolerance = num("calibration.tolerance");

  guardband.phases.clear();
  for (const auto& p : split(values_.at("guardband.phases"), ',')) {
    const auto f = split(p, ':');
    GuardbandPhase ph;
    ph.core = static_cast<int>(to_number("guardband.phases", f[0]));
    ph.start = us_to_ns(to_number("guardband.phases", f[1]) * 1e6);
    ph.end = us_to_ns(to_number("guardband.phases", f[2]) * 1e6);
    if (ph.core < 0 || ph.core >= cores || ph.end <= ph.start || ph.start < 0) {
      throw ConfigError("guardband.phases: bad phase '" + p + "'");
    }
    guardband.phases.push_back(ph);
  }
  guardband.cls = *parse_class(values_.at("guardband.class"));
  guardband.sample_ns = us_to_ns(num("guardband.sample_ms") * 1000.0);
  guardband.duration_ns = us_to_ns(num("guardband.duration_s") * 1e6);
  guardband.freq_mhz = ghz_to_mhz(num("guardband.freq_ghz"));
  if (guardband.sample_ns <= 0) throw ConfigError("guardband.sample_ms must be > 0");

  limits_demo.nominal_mhz = ghz_to_mhz(num("limits_demo.nominal_ghz"));
  limits_demo.active_cores = static_cast<int>(integer("limits_demo.cores"));
  limits_demo.cls = *parse_class(values_.at("limits_demo.class"));
  if (limits_demo.active_cores < 1 || limits_demo.active_cores > cores) {
    throw ConfigError("limits_demo.cores out of range");
  }
}

VRKind MachineConfig::effective_vr_kind() const {
  return mitigation.per_core_vr ? VRKind::PerCoreLDO : vr_kind;
}

PmuParams MachineConfig::pmu_params(int nominal_mhz) const {
  if (needs_calibration()) {
    throw ConfigError("configuration has uncalibrated parameters");
  }
  PmuParams p;
  p.cores = cores;
  p.vr_kind = effective_vr_kind();
  p.slew_mv_per_us = *slew[static_cast<int>(p.vr_kind)];
  p.vr_merge = vr_merge;
  p.ll = ll;
  p.icc = icc;
  p.vf = vf;
  p.cdyn = *cdyn;
  p.secondary_core_weight = *secondary_core_weight;
  p.limits = limits;
  p.hysteresis_ns = hysteresis_ns;
  p.nominal_mhz = nominal_mhz;
  p.freq_step_mhz = freq_step_mhz;
  p.min_freq_mhz = min_freq_mhz;
  p.secure_mode = mitigation.secure_mode;
  return p;
}

CoreParams MachineConfig::core_params() const {
  CoreParams c;
  c.mode = mitigation.improved_throttling ? ThrottleMode::PerThreadImproved
                                          : ThrottleMode::EntireCore;
  c.wake_latency_ns = wake_latency_ns;
  c.gate_close_ns = gate_close_ns;
  return c;
}

std::string MachineConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t MachineConfig::hash() const { return fnv1a64(dump()); }

std::string MachineConfig::hash_hex() const {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

MachineConfig parse_config(const std::string& text, const std::string& base_dir) {
  MachineConfig cfg;
  cfg.base_dir = base_dir;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (seen.count(key)) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    seen[key] = lineno;
    try {
      cfg.assign(key, t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.commit();
  return cfg;
}

MachineConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  std::string dir = ".";
  const auto slash = path.find_last_of('/');
  if (slash != std::string::npos) dir = path.substr(0, slash == 0 ? 1 : slash);
  return parse_config(ss.str(), dir);
}

}  // namespace ichsim
