#include "ichsim/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <thread>

#include "ichsim/machine.hpp"

namespace ichsim {

namespace {

using json = nlohmann::ordered_json;

// Runs fn(0..n-1) on a fixed pool; results land by index so the output
// order never depends on scheduling.
template <typename T>
std::vector<T> parallel_map(std::size_t n, unsigned threads,
                            const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(n);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::string ghz_str(int mhz) { return fmt(mhz / 1000.0, 1); }
std::string b(bool v) { return v ? "true" : "false"; }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double round_to(double v, int digits) {
  const double s = std::pow(10.0, digits);
  return std::round(v * s) / s;
}

std::string bits_str(int symbol) {
  if (symbol == kErasure) return "--";
  return std::string{static_cast<char>('0' + (symbol >> 1)), static_cast<char>('0' + (symbol & 1))};
}

ExperimentReport make_report(const MachineConfig& cfg, const std::string& id) {
  ExperimentReport r;
  r.experiment = id;
  r.config_hash = cfg.hash_hex();
  r.seed = cfg.seed;
  return r;
}

// ---------------------------------------------------------------- TP

ExperimentReport tp_characterization(const MachineConfig& cfg, const ExperimentOptions& opt) {
  auto r = make_report(cfg, "tp_characterization");
  const int max_cores = std::min(cfg.cores, 2);
  struct Job {
    InstructionClass cls;
    int mhz;
    int cores;
  };
  std::vector<Job> jobs;
  for (int mhz : cfg.freqs_mhz) {
    for (int n = 1; n <= max_cores; ++n) {
      for (auto cls : kAllClasses) jobs.push_back({cls, mhz, n});
    }
  }
  auto res = parallel_map<TpMeasurement>(jobs.size(), opt.threads, [&](std::size_t i) {
    return measure_tp(cfg, jobs[i].cls, jobs[i].mhz, jobs[i].cores);
  });

  Table t{"tp", {"class", "freq_ghz", "cores", "tp_us", "analytic_us", "transitions",
                 "gate_stall_ns", "gate_stall_fraction", "oracle_ok"}, {}};
  std::map<std::pair<int, int>, std::vector<double>> series;  // (mhz, cores) -> TP by class
  std::map<std::pair<int, std::size_t>, std::array<double, 3>> by_cores;
  bool oracle_ok = true;
  double max_gate_fraction = 0.0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& j = jobs[i];
    const auto& m = res[i];
    const double analytic = analytic_tp_ns(cfg, j.cls, j.mhz, j.cores);
    const bool ok = std::abs(m.tp_ns - analytic) <= m.transitions * 1.0 + 1000.0 / j.mhz;
    oracle_ok = oracle_ok && ok;
    const double frac = m.tp_ns > 0 ? static_cast<double>(m.gate_stall_ns) / m.tp_ns : 0.0;
    if (m.tp_ns >= 8 * kNsPerUs) max_gate_fraction = std::max(max_gate_fraction, frac);
    series[{j.mhz, j.cores}].push_back(m.tp_ns / 1000.0);
    by_cores[{j.mhz, index_of(j.cls)}][j.cores] = m.tp_ns / 1000.0;
    t.add({std::string(to_string(j.cls)), ghz_str(j.mhz), fmt(j.cores), fmt(m.tp_ns / 1000.0, 3),
           fmt(analytic / 1000.0, 3), fmt(m.transitions), fmt(m.gate_stall_ns), fmt(frac, 6), b(ok)});
  }
  r.tables.push_back(std::move(t));

  bool class_monotone = true;
  for (const auto& [key, v] : series) {
    for (std::size_t c = 1; c < v.size(); ++c) class_monotone = class_monotone && v[c] > v[c - 1];
  }
  bool cores_monotone = true;
  if (max_cores >= 2) {
    for (const auto& [key, v] : by_cores) {
      if (key.second == 0) continue;
      cores_monotone = cores_monotone && v[2] > v[1];
    }
  }

  // Full ramp from scalar to the heaviest class on each regulator kind.
  const int ramp_mhz = static_cast<int>(std::lround(cfg.calibration.ramp_freq_ghz * 1000));
  Table ramps{"full_ramp", {"vr_kind", "freq_ghz", "tp_us"}, {}};
  json ramp_json = json::object();
  for (auto kind : {VRKind::SharedMotherboard, VRKind::Integrated, VRKind::PerCoreLDO}) {
    MachineConfig c = cfg;
    c.vr_kind = kind;
    c.mitigation = Mitigations{};
    const double us = measure_tp(c, InstructionClass::L512b_Heavy, ramp_mhz, 1).tp_ns / 1000.0;
    ramps.add({std::string(to_string(kind)), ghz_str(ramp_mhz), fmt(us, 3)});
    ramp_json[std::string(to_string(kind))] = round_to(us, 3);
  }
  r.tables.push_back(std::move(ramps));

  const auto anchor = [&](int cores) {
    auto it = by_cores.find({1000, index_of(InstructionClass::L256b_Heavy)});
    return it == by_cores.end() ? -1.0 : round_to(it->second[cores], 3);
  };
  r.summary["tp_256h_1ghz_1core_us"] = anchor(1);
  if (max_cores >= 2) r.summary["tp_256h_1ghz_2core_us"] = anchor(2);
  r.summary["monotone_in_class"] = class_monotone;
  r.summary["monotone_in_cores"] = cores_monotone;
  r.summary["full_ramp_us"] = ramp_json;
  r.summary["max_gate_stall_fraction_tp_ge_8us"] = round_to(max_gate_fraction, 6);
  r.summary["oracle_ok"] = oracle_ok;
  return r;
}

ExperimentReport tp_prewarm(const MachineConfig& cfg, const ExperimentOptions& opt) {
  auto r = make_report(cfg, "tp_prewarm");
  const int mhz = cfg.freqs_mhz.front();
  auto res = parallel_map<TpMeasurement>(kNumClasses, opt.threads, [&](std::size_t i) {
    return measure_tp(cfg, InstructionClass::L512b_Heavy, mhz, 1, kAllClasses[i]);
  });
  Table t{"tp", {"preceding_class", "freq_ghz", "tp_us"}, {}};
  std::vector<double> tps;
  bool decreasing = true;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    const double us = res[i].tp_ns / 1000.0;
    if (!tps.empty()) decreasing = decreasing && us < tps.back();
    tps.push_back(us);
    t.add({std::string(to_string(kAllClasses[i])), ghz_str(mhz), fmt(us, 3)});
  }
  r.tables.push_back(std::move(t));
  r.summary["strictly_decreasing"] = decreasing;
  r.summary["plateaus"] = count_plateaus(tps, 0.05);
  return r;
}


// ---------------------------------------------------------------- covert

std::vector<DecodeThresholds> baseline_thresholds(const MachineConfig& cfg, unsigned threads) {
  MachineConfig quiet = cfg;
  quiet.mitigation = Mitigations{};
  auto cals = parallel_map<ChannelCalibration>(kAllChannels.size(), threads, [&](std::size_t i) {
    return calibrate_thresholds(quiet, kAllChannels[i]);
  });
  std::vector<DecodeThresholds> out;
  for (std::size_t i = 0; i < cals.size(); ++i) {
    if (!cals[i].ok) {
      throw CalibrationError(std::string(to_string(kAllChannels[i])) +
                             " threshold calibration failed: " + cals[i].reason);
    }
    out.push_back(cals[i].thresholds);
  }
  return out;
}

ExperimentReport throughput(const MachineConfig& cfg, const ExperimentOptions& opt) {
  auto r = make_report(cfg, "throughput");
  const auto thr = baseline_thresholds(cfg, opt.threads);
  const auto bits = random_bits(static_cast<std::size_t>(cfg.covert.transcript_bits), cfg.seed);
  auto res = parallel_map<TranscriptResult>(kAllChannels.size(), opt.threads, [&](std::size_t i) {
    RunOptions ro;
    ro.use_noise = false;
    ro.seed = cfg.seed;
    return run_transcript(cfg, kAllChannels[i], bits, thr[i], ro);
  });
  const std::array<double, 3> baselines{20.0, 61.0, 122.0};
  Table t{"channels", {"channel", "bits", "ber", "erasures", "throughput_bps", "ratio_vs_20bps",
                       "ratio_vs_61bps", "ratio_vs_122bps"}, {}};
  json per = json::object();
  for (std::size_t i = 0; i < res.size(); ++i) {
    const auto& x = res[i];
    std::vector<std::string> row{std::string(to_string(x.kind)), fmt(static_cast<int>(x.bits_sent.size())),
                                 fmt(x.ber, 6), fmt(x.erasures), fmt(x.throughput_bps, 2)};
    json ratios = json::object();
    for (double base : baselines) {
      row.push_back(fmt(x.throughput_bps / base, 2));
      ratios[fmt(base, 0) + "bps"] = round_to(x.throughput_bps / base, 2);
    }
    t.add(std::move(row));
    per[std::string(to_string(x.kind))] = {{"ber", round_to(x.ber, 6)},
                                          {"throughput_bps", round_to(x.throughput_bps, 2)},
                                          {"ratios", ratios}};
  }
  r.tables.push_back(std::move(t));
  r.summary["bits"] = static_cast<int>(bits.size());
  r.summary["throughput_bps"] = round_to(res[0].throughput_bps, 2);
  r.summary["channels"] = per;
  // Four levels carry two bits per reset-limited transaction; a two-level
  // channel with the same transaction time carries one.
  r.summary["bits_per_transaction"] = 2;
  r.summary["ratio_vs_one_bit_per_transaction"] = 2.0;
  return r;
}

struct SweepRun {
  double ber = 0.0;
  int erasures = 0;
};

struct SweepPoint {
  std::string label;  // event kind or "app_phi"
  double rate = 0.0;
  std::size_t channel = 0;
  int seed_index = 0;
};

std::vector<SweepRun> run_sweep(const MachineConfig& cfg, const std::vector<SweepPoint>& pts,
                                const std::vector<DecodeThresholds>& thr, unsigned threads) {
  return parallel_map<SweepRun>(pts.size(), threads, [&](std::size_t i) {
    const auto& p = pts[i];
    MachineConfig c = cfg;
    c.noise.event_rate_hz = 0;
    c.noise.app_phi_rate_hz = 0;
    if (p.label == "app_phi") {
      c.noise.app_phi_rate_hz = p.rate;
    } else {
      c.noise.kind = p.label == "interrupt" ? NoiseKind::Interrupt : NoiseKind::ContextSwitch;
      c.noise.event_rate_hz = p.rate;
    }
    const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(p.seed_index));
    RunOptions ro;
    ro.seed = seed;
    const auto bits = random_bits(static_cast<std::size_t>(cfg.sweep.bits), seed);
    const auto res = run_transcript(c, kAllChannels[p.channel], bits, thr[p.channel], ro);
    return SweepRun{res.ber, res.erasures};
  });
}

// Appends per-run and mean tables; returns mean BER keyed by (label, rate, channel).
std::map<std::tuple<std::string, double, std::size_t>, double> sweep_tables(
    ExperimentReport& r, const std::vector<SweepPoint>& pts, const std::vector<SweepRun>& runs,
    const std::string& label_column) {
  Table t{"runs", {label_column, "rate_hz", "channel", "seed_index", "ber", "erasures"}, {}};
  std::map<std::tuple<std::string, double, std::size_t>, std::vector<double>> acc;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    t.add({p.label, fmt(p.rate, 0), std::string(to_string(kAllChannels[p.channel])),
           fmt(p.seed_index), fmt(runs[i].ber, 6), fmt(runs[i].erasures)});
    acc[{p.label, p.rate, p.channel}].push_back(runs[i].ber);
  }
  Table m{"mean", {label_column, "rate_hz", "channel", "seeds", "mean_ber"}, {}};
  std::map<std::tuple<std::string, double, std::size_t>, double> means;
  for (const auto& [key, v] : acc) {
    const double mb = mean_of(v);
    means[key] = mb;
    m.add({std::get<0>(key), fmt(std::get<1>(key), 0),
           std::string(to_string(kAllChannels[std::get<2>(key)])),
           fmt(static_cast<int>(v.size())), fmt(mb, 6)});
  }
  r.tables.push_back(std::move(t));
  r.tables.push_back(std::move(m));
  return means;
}

ExperimentReport ber_noise_sweep(const MachineConfig& cfg, const ExperimentOptions& opt) {
  auto r = make_report(cfg, "ber_noise_sweep");
  const auto thr = baseline_thresholds(cfg, opt.threads);
  std::vector<SweepPoint> pts;
  for (std::string kind : {"interrupt", "context_switch"}) {
    for (double rate : cfg.sweep.event_rates) {
      for (std::size_t ch = 0; ch < kAllChannels.size(); ++ch) {
        for (int s = 0; s < cfg.sweep.seeds; ++s) pts.push_back({kind, rate, ch, s});
      }
    }
  }
  const auto means = sweep_tables(r, pts, run_sweep(cfg, pts, thr, opt.threads), "event_kind");
  double max_mean = 0.0;
  json by = json::object();
  for (const auto& [key, v] : means) {
    max_mean = std::max(max_mean, v);
    by[std::get<0>(key)][std::string(to_string(kAllChannels[std::get<2>(key)]))]
      [fmt(std::get<1>(key), 0)] = round_to(v, 6);
  }
  r.summary["seeds"] = cfg.sweep.seeds;
  r.summary["bits_per_run"] = cfg.sweep.bits;
  r.summary["mean_ber"] = by;
  r.summary["max_mean_ber"] = round_to(max_mean, 6);
  r.summary["low_ber_all_rates"] = max_mean < 0.05;
  return r;
}

ExperimentReport ber_appphi_sweep(const MachineConfig& cfg, const ExperimentOptions& opt) {
  auto r = make_report(cfg, "ber_appphi_sweep");
  const auto thr = baseline_thresholds(cfg, opt.threads);
  std::vector<SweepPoint> pts;
  for (double rate : cfg.sweep.app_rates) {
    for (std::size_t ch = 0; ch < kAllChannels.size(); ++ch) {
      for (int s = 0; s < cfg.sweep.seeds; ++s) pts.push_back({"app_phi", rate, ch, s});
    }
  }
  const auto means = sweep_tables(r, pts, run_sweep(cfg, pts, thr, opt.threads), "source");

  json by = json::object();
  bool monotone = true;
  bool significant = true;
  for (std::size_t ch = 0; ch < kAllChannels.size(); ++ch) {
    std::vector<double> series;
    json c = json::object();
    for (double rate : cfg.sweep.app_rates) {
      const double v = means.at({"app_phi", rate, ch});
      c[fmt(rate, 0)] = round_to(v, 6);
      if (!series.empty()) monotone = monotone && v >= series.back();
      series.push_back(v);
    }
    const bool sig = series.back() > 0 && series.back() >= 5.0 * series.front();
    significant = significant && sig;
    c["top_vs_bottom_significant"] = sig;
    by[std::string(to_string(kAllChannels[ch]))] = c;
  }
  r.summary["seeds"] = cfg.sweep.seeds;
  r.summary["mean_ber"] = by;
  r.summary["monotone_in_rate"] = monotone;
  r.summary["significant_increase"] = significant;

  // Exhaustive (sent level, app level) grid with a burst at every symbol start.
  constexpr int kGridSymbols = 4;
  struct Cell {
    std::size_t ch;
    int sent;
    int app;
  };
  std::vector<Cell> cells;
  for (std::size_t ch = 0; ch < kAllChannels.size(); ++ch) {
    for (int s = 0; s < 4; ++s) {
      for (int a = 0; a < 4; ++a) cells.push_back({ch, s, a});
    }
  }
  auto errs = parallel_map<int>(cells.size(), opt.threads, [&](std::size_t i) {
    const auto& c = cells[i];
    RunOptions ro;
    ro.use_noise = false;
    for (int k = 0; k < kGridSymbols; ++k) ro.forced_bursts.push_back({k, encode_symbol(c.app)});
    const std::vector<int> symbols(kGridSymbols, c.sent);
    int n = 0;
    for (const auto& rec : simulate_symbols(cfg, kAllChannels[c.ch], symbols, ro)) {
      n += decode_symbol(static_cast<double>(rec.tp_cycles), thr[c.ch]) != c.sent;
    }
    return n;
  });
  Table g{"asymmetry_grid", {"channel", "sent_level", "app_level", "symbols", "symbol_errors",
                             "app_above_sent"}, {}};
  bool asymmetric = true;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const bool above = c.app > c.sent;
    asymmetric = asymmetric && ((errs[i] > 0) == above);
    g.add({std::string(to_string(kAllChannels[c.ch])), "L" + std::to_string(c.sent + 1),
           "L" + std::to_string(c.app + 1), fmt(kGridSymbols), fmt(errs[i]), b(above)});
  }
  r.tables.push_back(std::move(g));
  r.summary["errors_only_when_app_level_higher"] = asymmetric;
  return r;
}

ExperimentReport mitigation_matrix(const MachineConfig& cfg, const ExperimentOptions& opt) {
  auto r = make_report(cfg, "mitigation_matrix");
  const auto thr = baseline_thresholds(cfg, opt.threads);
  const std::vector<std::string> variants{"none", "per_core_vr", "improved_throttling",
                                          "secure_mode"};
  auto variant_cfg = [&](const std::string& v) {
    MachineConfig c = cfg;
    c.mitigation = Mitigations{};
    c.mitigation.per_core_vr = v == "per_core_vr";
    c.mitigation.improved_throttling = v == "improved_throttling";
    c.mitigation.secure_mode = v == "secure_mode";
    return c;
  };
  struct Cell {
    ChannelCalibration cal;
    TranscriptResult tr;
  };
  const auto bits = random_bits(static_cast<std::size_t>(cfg.sweep.bits), cfg.seed);
  const std::size_t nch = kAllChannels.size();
  auto cells = parallel_map<Cell>(variants.size() * nch, opt.threads, [&](std::size_t i) {
    const MachineConfig c = variant_cfg(variants[i / nch]);
    const ChannelKind k = kAllChannels[i % nch];
    RunOptions ro;
    ro.use_noise = false;
    return Cell{calibrate_thresholds(c, k), run_transcript(c, k, bits, thr[i % nch], ro)};
  });

  Table t{"matrix", {"mitigation", "channel", "ber_baseline_thresholds", "recalibration_ok",
                     "tp_mean_l1", "tp_mean_l2", "tp_mean_l3", "tp_mean_l4", "tp_variance",
                     "channel_works"}, {}};
  json summary = json::object();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = cells[i];
    std::vector<double> tps;
    for (const auto& s : cell.tr.symbols) tps.push_back(static_cast<double>(s.tp_cycles));
    const double mu = mean_of(tps);
    double var = 0.0;
    for (double x : tps) var += (x - mu) * (x - mu);
    var = tps.empty() ? 0.0 : var / static_cast<double>(tps.size());
    std::array<double, 4> level_mean{};
    for (int s = 0; s < 4; ++s) level_mean[s] = mean_of(std::vector<double>(
        cell.cal.samples[s].begin(), cell.cal.samples[s].end()));
    // A channel works when it decodes with the attacker's thresholds or
    // can be retrained on the mitigated machine.
    const bool works = cell.tr.ber <= 0.05 || cell.cal.ok;
    const std::string v = variants[i / nch];
    const std::string ch(to_string(kAllChannels[i % nch]));
    t.add({v, ch, fmt(cell.tr.ber, 6), b(cell.cal.ok), fmt(level_mean[0], 1), fmt(level_mean[1], 1),
           fmt(level_mean[2], 1), fmt(level_mean[3], 1), fmt(var, 3), b(works)});
    summary[v][ch] = {{"ber", round_to(cell.tr.ber, 6)},
                      {"recalibration_ok", cell.cal.ok},
                      {"tp_variance", round_to(var, 3)},
                      {"works", works}};
    if (!cell.cal.ok) summary[v][ch]["recalibration_failure"] = cell.cal.reason;
  }
  r.tables.push_back(std::move(t));
  r.summary["bits"] = static_cast<int>(bits.size());
  r.summary["matrix"] = summary;
  return r;
}

// ---------------------------------------------------------------- electrical

ExperimentReport limits_demo(const MachineConfig& cfg, const ExperimentOptions&) {
  auto r = make_report(cfg, "limits_demo");
  const auto& demo = cfg.limits_demo;
  if (demo.active_cores < 1 || demo.active_cores > cfg.cores) {
    throw ConfigError("limits_demo.cores must be within 1..machine.cores");
  }
  const PmuParams pp = cfg.pmu_params(demo.nominal_mhz);
  std::vector<InstructionClass> levels(cfg.cores, InstructionClass::Scalar64b);
  for (int c = 0; c < demo.active_cores; ++c) levels[c] = demo.cls;

  Pmu ref(pp);
  Table ladder{"ladder", {"freq_ghz", "vcc_mv", "icc_a", "vcc_ok", "icc_ok"}, {}};
  for (int mhz = demo.nominal_mhz; mhz >= cfg.min_freq_mhz; mhz -= cfg.freq_step_mhz) {
    const LimitPoint p = ref.operating_point(mhz, levels);
    const bool vok = p.vcc_mv <= cfg.limits.vcc_max_mv;
    const bool iok = p.icc_a <= cfg.limits.icc_max_a;
    ladder.add({ghz_str(mhz), fmt(p.vcc_mv, 2), fmt(p.icc_a, 3), b(vok), b(iok)});
    if (vok && iok) break;
  }
  r.tables.push_back(std::move(ladder));

  Machine m(pp, cfg.core_params());
  for (int c = 0; c < demo.active_cores; ++c) {
    LoopOp loop;
    loop.cls = demo.cls;
    loop.iterations = 200000;
    loop.uops_per_iteration = 1;
    m.load_program(c, 0, {loop});
  }
  if (!m.run_until_idle(100 * kNsPerMs)) throw ModelError("limits_demo: timeout");
  const int admitted = m.pmu().freq_mhz();
  m.run_until(m.now() + cfg.hysteresis_ns + 50 * kNsPerUs);
  const int restored = m.pmu().freq_mhz();
  const auto& mon = m.limit_monitor();

  r.summary["class"] = std::string(to_string(demo.cls));
  r.summary["active_cores"] = demo.active_cores;
  r.summary["nominal_ghz"] = demo.nominal_mhz / 1000.0;
  r.summary["admitted_ghz"] = admitted / 1000.0;
  r.summary["restored_ghz"] = restored / 1000.0;
  r.summary["vcc_max_mv"] = cfg.limits.vcc_max_mv;
  r.summary["icc_max_a"] = cfg.limits.icc_max_a;
  r.summary["max_vcc_mv"] = round_to(mon.max_vcc_mv, 3);
  r.summary["max_icc_a"] = round_to(mon.max_icc_a, 3);
  r.summary["samples"] = mon.samples;
  r.summary["violations"] = mon.violations;
  return r;
}

ExperimentReport guardband_trace(const MachineConfig& cfg, const ExperimentOptions&) {
  auto r = make_report(cfg, "guardband_trace");
  const auto& gs = cfg.guardband;
  Machine m(cfg.pmu_params(gs.freq_mhz), cfg.core_params());
  std::map<int, std::vector<Op>> programs;
  for (const auto& ph : gs.phases) {
    if (ph.core < 0 || ph.core >= cfg.cores) throw ConfigError("guardband phase core out of range");
    LoopOp loop;
    loop.cls = gs.cls;
    loop.uops_per_iteration = 1;
    loop.iterations = (ph.end - ph.start) * gs.freq_mhz / 1000;
    programs[ph.core].push_back(WaitUntilOp{ph.start});
    programs[ph.core].push_back(loop);
  }
  for (auto& [core, prog] : programs) m.load_program(core, 0, std::move(prog));

  Table samples{"samples", {"time_ms", "vcc_mv", "freq_ghz"}, {}};
  Table steps{"steps", {"time_ms", "delta_mv", "vcc_mv"}, {}};
  json step_list = json::array();
  double prev = -1.0;
  double baseline = 0.0;
  bool freq_constant = true;
  for (Nanos t = 0; t <= gs.duration_ns; t += gs.sample_ns) {
    m.run_until(t);
    const double v = m.pmu().vcc_at(0, t);
    freq_constant = freq_constant && m.pmu().freq_mhz() == gs.freq_mhz;
    samples.add({fmt(t / 1e6, 1), fmt(v, 3), ghz_str(m.pmu().freq_mhz())});
    if (prev < 0) {
      baseline = v;
    } else if (std::abs(v - prev) > 0.5) {
      steps.add({fmt(t / 1e6, 1), fmt(v - prev, 3), fmt(v, 3)});
      step_list.push_back(round_to(v - prev, 3));
    }
    prev = v;
  }
  r.tables.push_back(std::move(samples));
  r.tables.push_back(std::move(steps));
  r.summary["freq_ghz"] = gs.freq_mhz / 1000.0;
  r.summary["class"] = std::string(to_string(gs.cls));
  r.summary["baseline_mv"] = round_to(baseline, 3);
  r.summary["steps_mv"] = step_list;
  r.summary["frequency_constant"] = freq_constant;
  return r;
}

ExperimentReport transcript(const MachineConfig& cfg, const ExperimentOptions& opt) {
  auto r = make_report(cfg, "transcript");
  const ChannelKind kind = opt.channel.value_or(ChannelKind::SameThread);
  const auto bits = opt.bits_file.empty()
                        ? random_bits(static_cast<std::size_t>(cfg.covert.transcript_bits), cfg.seed)
                        : read_bits_file(opt.bits_file);
  if (bits.empty() || bits.size() % 2 != 0) {
    throw ConfigError("transcript needs a non-empty, even number of bits");
  }
  RunOptions ro;
  ro.seed = cfg.seed;
  const auto res = run_transcript(cfg, kind, bits, ro);
  Table t{"symbols", {"symbol_index", "sent_bits", "tp_cycles", "decoded_bits", "wall_time_ns"}, {}};
  for (const auto& s : res.symbols) {
    t.add({fmt(s.index), bits_str(s.sent), fmt(s.tp_cycles), bits_str(s.decoded), fmt(s.wall_ns)});
  }
  r.tables.push_back(std::move(t));
  r.summary["channel"] = std::string(to_string(kind));
  r.summary["bits"] = static_cast<int>(bits.size());
  r.summary["ber"] = round_to(res.ber, 6);
  r.summary["erasures"] = res.erasures;
  r.summary["throughput_bps"] = round_to(res.throughput_bps, 2);
  return r;
}

using Runner = ExperimentReport (*)(const MachineConfig&, const ExperimentOptions&);

const std::vector<std::pair<std::string, Runner>>& registry() {
  static const std::vector<std::pair<std::string, Runner>> r{
      {"tp_characterization", tp_characterization},
      {"tp_prewarm", tp_prewarm},
      {"throughput", throughput},
      {"ber_noise_sweep", ber_noise_sweep},
      {"ber_appphi_sweep", ber_appphi_sweep},
      {"mitigation_matrix", mitigation_matrix},
      {"limits_demo", limits_demo},
      {"guardband_trace", guardband_trace},
      {"transcript", transcript},
  };
  return r;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t i) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int count_plateaus(std::vector<double> values, double rel_gap) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const double gap = rel_gap * values.back();
  int n = 1;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] - values[i - 1] >= gap) ++n;
  }
  return n;
}

const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (const auto& [id, fn] : registry()) v.push_back(id);
    return v;
  }();
  return ids;
}

ExperimentReport run_experiment(const MachineConfig& cfg, const std::string& id,
                                const ExperimentOptions& opt) {
  for (const auto& [name, fn] : registry()) {
    if (name != id) continue;
    const MachineConfig resolved = resolve_calibration(cfg);
    ExperimentReport r = fn(resolved, opt);
    r.config_hash = cfg.hash_hex();
    r.seed = cfg.seed;
    return r;
  }
  throw ConfigError("unknown experiment '" + id + "'");
}

ExperimentReport calibration_report(const MachineConfig& cfg, const CalibratedParams& p) {
  auto r = make_report(cfg, "calibration");
  Table t{"points", {"class", "freq_ghz", "cores", "target_us", "weight", "fitted_us",
                     "simulated_us", "analytic_us", "transitions", "residual", "oracle_ok"}, {}};
  for (const auto& pc : p.points) {
    t.add({std::string(to_string(pc.target.cls)), fmt(pc.target.freq_ghz, 2), fmt(pc.target.cores),
           fmt(pc.target.tp_us, 3), fmt(pc.target.weight, 1), fmt(pc.fitted_us, 3),
           fmt(pc.simulated_us, 3), fmt(pc.analytic_us, 3), fmt(pc.transitions),
           fmt(pc.residual, 6), b(pc.oracle_ok)});
  }
  r.tables.push_back(std::move(t));
  json cdyn = json::object();
  for (auto c : kAllClasses) cdyn[std::string(to_string(c))] = round_to(p.cdyn[c], 6);
  json slew = json::object();
  for (auto k : {VRKind::SharedMotherboard, VRKind::Integrated, VRKind::PerCoreLDO}) {
    slew[std::string(to_string(k))] = round_to(p.slew[static_cast<int>(k)], 6);
  }
  const auto anchor = [&](int cores) {
    for (const auto& pc : p.points) {
      if (pc.target.cls == InstructionClass::L256b_Heavy && pc.target.cores == cores &&
          std::abs(pc.target.freq_ghz - 1.0) < 1e-9) {
        return round_to(pc.simulated_us, 3);
      }
    }
    return -1.0;
  };
  r.summary["cdyn"] = cdyn;
  r.summary["slew_mv_per_us"] = slew;
  r.summary["secondary_core_weight"] = round_to(p.secondary_core_weight, 6);
  r.summary["tp_256h_1ghz_1core_us"] = anchor(1);
  r.summary["tp_256h_1ghz_2core_us"] = anchor(2);
  r.summary["full_ramp_us"] = {{"SharedMotherboard", round_to(p.full_ramp_mbvr_us, 3)},
                               {"Integrated", round_to(p.full_ramp_ivr_us, 3)},
                               {"PerCoreLDO", round_to(p.full_ramp_ldo_us, 3)}};
  double max_res = 0.0;
  for (const auto& pc : p.points) max_res = std::max(max_res, pc.residual);
  r.summary["max_residual"] = round_to(max_res, 6);
  r.summary["oracle_ok"] = p.oracle_ok;
  return r;
}

}  // namespace ichsim
