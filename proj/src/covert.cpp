#include "ichsim/covert.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "ichsim/machine.hpp"
#include "ichsim/noise.hpp"

namespace ichsim {

std::string_view to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::SameThread:
      return "SameThread";
    case ChannelKind::CrossSMT:
      return "CrossSMT";
    case ChannelKind::CrossCore:
      return "CrossCore";
  }
  return "?";
}

std::optional<ChannelKind> parse_channel(std::string_view s) {
  for (auto k : kAllChannels) {
    if (s == to_string(k)) return k;
  }
  if (s == "thread") return ChannelKind::SameThread;
  if (s == "smt") return ChannelKind::CrossSMT;
  if (s == "cores") return ChannelKind::CrossCore;
  return std::nullopt;
}

Placement placement_of(ChannelKind k) {
  switch (k) {
    case ChannelKind::SameThread:
      return {0, 0, 0, 0};
    case ChannelKind::CrossSMT:
      return {0, 0, 0, 1};
    case ChannelKind::CrossCore:
      return {0, 0, 1, 0};
  }
  return {};
}

InstructionClass probe_class(ChannelKind k) {
  switch (k) {
    case ChannelKind::SameThread:
      return InstructionClass::L512b_Heavy;
    case ChannelKind::CrossSMT:
      return InstructionClass::Scalar64b;
    case ChannelKind::CrossCore:
      return InstructionClass::L128b_Heavy;
  }
  return InstructionClass::Scalar64b;
}

InstructionClass encode_symbol(int symbol) {
  if (symbol < 0 || symbol > 3) throw ModelError("symbol must be in 0..3");
  return kLevelClasses[static_cast<std::size_t>(symbol)];
}

int level_of(InstructionClass cls) {
  for (std::size_t i = 0; i < kLevelClasses.size(); ++i) {
    if (kLevelClasses[i] == cls) return static_cast<int>(i);
  }
  return -1;
}

Nanos sync_wait(Nanos now, Nanos epoch) {
  if (epoch <= 0) throw ModelError("epoch must be > 0");
  return (now + epoch - 1) / epoch * epoch;
}

DecodeThresholds thresholds_from_means(const std::array<double, 4>& mean_by_symbol) {
  DecodeThresholds thr;
  thr.mean_by_symbol = mean_by_symbol;
  std::array<int, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return mean_by_symbol[a] < mean_by_symbol[b];
  });
  thr.symbol_by_range = order;
  for (int i = 0; i < 3; ++i) {
    thr.cuts[i] = 0.5 * (mean_by_symbol[order[i]] + mean_by_symbol[order[i + 1]]);
  }
  const double top = mean_by_symbol[order[3]];
  thr.erasure_above = top + (top - thr.cuts[2]);
  return thr;
}

int decode_symbol(double tp_cycles, const DecodeThresholds& thr) {
  if (tp_cycles > thr.erasure_above) return kErasure;
  for (int i = 0; i < 3; ++i) {
    if (tp_cycles <= thr.cuts[i]) return thr.symbol_by_range[i];
  }
  return thr.symbol_by_range[3];
}

namespace {

int kind_index(ChannelKind k) { return static_cast<int>(k); }

int resolve_freq(const MachineConfig& cfg, int freq_mhz) {
  return freq_mhz > 0 ? freq_mhz : cfg.freqs_mhz.front();
}

LoopOp make_loop(InstructionClass cls, std::int64_t iters, int upi, bool measure, int tag) {
  LoopOp op;
  op.cls = cls;
  op.iterations = iters;
  op.uops_per_iteration = upi;
  op.measure = measure;
  op.tag = tag;
  return op;
}

}  // namespace

std::vector<SymbolRecord> simulate_symbols(const MachineConfig& cfg, ChannelKind kind,
                                           const std::vector<int>& symbols,
                                           const RunOptions& opt) {
  const auto& cv = cfg.covert;
  const int mhz = resolve_freq(cfg, opt.freq_mhz);
  Machine m(cfg.pmu_params(mhz), cfg.core_params());
  if (m.cores() < 2 && kind == ChannelKind::CrossCore) {
    throw ConfigError("CrossCore channel needs at least two cores");
  }
  const Placement pl = placement_of(kind);
  const Nanos spacing = opt.reset_wait ? cv.epoch_ns : opt.compact_spacing_ns;
  const InstructionClass probe = probe_class(kind);
  const std::int64_t recv_iters = cv.receiver_iterations[kind_index(kind)];
  const int recv_upi = cv.receiver_uops_per_iteration;
  const Nanos recv_delay =
      kind == ChannelKind::CrossCore ? cv.crosscore_receiver_offset_ns : 0;

  std::vector<Op> sender, receiver;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const Nanos t = static_cast<Nanos>(i + 1) * spacing;
    const int tag = static_cast<int>(i);
    sender.push_back(WaitUntilOp{t + opt.sender_offset_ns});
    sender.push_back(make_loop(encode_symbol(symbols[i]), cv.sender_iterations,
                               cv.sender_uops_per_iteration, false, tag));
    auto& rx = kind == ChannelKind::SameThread ? sender : receiver;
    if (kind != ChannelKind::SameThread) {
      rx.push_back(WaitUntilOp{t + recv_delay + opt.receiver_offset_ns});
    }
    rx.push_back(make_loop(probe, recv_iters, recv_upi, true, tag));
  }
  m.load_program(pl.sender_core, pl.sender_thread, std::move(sender));
  if (kind != ChannelKind::SameThread) {
    m.load_program(pl.receiver_core, pl.receiver_thread, std::move(receiver));
  }

  if (opt.start_skew_ns > 0) {
    m.schedule(0, StallEvent{pl.receiver_core, pl.receiver_thread, opt.start_skew_ns});
  }
  for (const auto& [at, latency] : opt.receiver_stalls) {
    m.schedule(at, StallEvent{pl.receiver_core, pl.receiver_thread, latency});
  }
  const Nanos horizon = static_cast<Nanos>(symbols.size() + 1) * spacing;
  // App-PHI runs on the sender's core: on the idle sibling when there is
  // one, otherwise it time-shares (preempts) the sender's thread.
  const bool sibling_busy = kind == ChannelKind::CrossSMT;
  const int app_thread = sibling_busy ? pl.sender_thread : 1 - pl.sender_thread;
  if (opt.use_noise) {
    for (const auto& e : schedule_events(cfg.noise, horizon, opt.seed,
                                         pl.receiver_core, pl.receiver_thread)) {
      apply_event(m, e);
    }
    for (const auto& b : schedule_app_phis(cfg.noise, horizon, opt.seed)) {
      m.schedule(b.time, InjectEvent{pl.sender_core, app_thread, app_phi_op(cfg.noise, b.cls)});
    }
  }
  for (const auto& fb : opt.forced_bursts) {
    const Nanos t = static_cast<Nanos>(fb.symbol + 1) * spacing + opt.sender_offset_ns;
    m.schedule(t, InjectEvent{pl.sender_core, app_thread, app_phi_op(cfg.noise, fb.cls)});
  }

  if (!m.run_until_idle(horizon + 10 * spacing)) {
    throw ModelError("covert simulation did not finish");
  }

  std::map<int, const LoopMeasurement*> by_tag;
  for (const auto& meas : m.core(pl.receiver_core).thread(pl.receiver_thread).measurements) {
    by_tag[meas.tag] = &meas;
  }
  std::vector<SymbolRecord> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    SymbolRecord r;
    r.index = static_cast<int>(i);
    r.sent = symbols[i];
    if (auto it = by_tag.find(r.index); it != by_tag.end()) {
      r.tp_cycles = it->second->throttled_cycles();
      r.wall_ns = it->second->start_ns;
    }
    out.push_back(r);
  }
  return out;
}

ChannelCalibration calibrate_thresholds(const MachineConfig& cfg, ChannelKind kind,
                                        int freq_mhz) {
  ChannelCalibration cal;
  const int reps = cfg.covert.calibration_repeats;
  std::vector<int> symbols;
  for (int r = 0; r < reps; ++r) {
    for (int s = 0; s < 4; ++s) symbols.push_back(s);
  }
  RunOptions opt;
  opt.freq_mhz = freq_mhz;
  opt.use_noise = false;
  for (const auto& rec : simulate_symbols(cfg, kind, symbols, opt)) {
    cal.samples[rec.sent].push_back(rec.tp_cycles);
  }
  std::array<double, 4> mean{};
  for (int s = 0; s < 4; ++s) {
    const auto& v = cal.samples[s];
    mean[s] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (auto x : v) var += (x - mean[s]) * (x - mean[s]);
    cal.variance[s] = var / static_cast<double>(v.size());
  }
  cal.thresholds = thresholds_from_means(mean);

  const bool decreasing = kind == ChannelKind::SameThread;
  cal.ok = true;
  for (int s = 0; s + 1 < 4; ++s) {
    const double gap = decreasing ? mean[s] - mean[s + 1] : mean[s + 1] - mean[s];
    if (gap <= static_cast<double>(cfg.covert.min_level_gap_cycles)) {
      cal.ok = false;
      cal.reason = "levels L" + std::to_string(s + 1) + " and L" + std::to_string(s + 2) +
                   " separated by " + std::to_string(static_cast<long long>(gap)) +
                   " cycles (need > " + std::to_string(cfg.covert.min_level_gap_cycles) + ")";
      break;
    }
  }
  return cal;
}

TranscriptResult run_transcript(const MachineConfig& cfg, ChannelKind kind,
                                const std::vector<int>& bits,
                                const DecodeThresholds& thr, const RunOptions& opt) {
  if (bits.size() % 2 != 0) throw ModelError("bitstring length must be even");
  std::vector<int> symbols;
  for (std::size_t i = 0; i < bits.size(); i += 2) {
    if ((bits[i] | bits[i + 1]) & ~1) throw ModelError("bits must be 0 or 1");
    symbols.push_back(bits[i] << 1 | bits[i + 1]);
  }
  TranscriptResult res;
  res.kind = kind;
  res.bits_sent = bits;
  res.symbols = simulate_symbols(cfg, kind, symbols, opt);
  std::size_t errors = 0;
  for (auto& r : res.symbols) {
    r.decoded = decode_symbol(static_cast<double>(r.tp_cycles), thr);
    if (r.decoded == kErasure) {
      ++res.erasures;
      errors += 2;
      res.bits_decoded.push_back(-1);
      res.bits_decoded.push_back(-1);
      continue;
    }
    const int b0 = r.decoded >> 1, b1 = r.decoded & 1;
    res.bits_decoded.push_back(b0);
    res.bits_decoded.push_back(b1);
    errors += (b0 != (r.sent >> 1)) + (b1 != (r.sent & 1));
  }
  res.ber = bits.empty() ? 0.0 : static_cast<double>(errors) / static_cast<double>(bits.size());
  res.symbol_cycle_ns = opt.reset_wait ? cfg.covert.epoch_ns : opt.compact_spacing_ns;
  res.total_ns = static_cast<Nanos>(symbols.size()) * res.symbol_cycle_ns;
  res.throughput_bps = res.total_ns > 0 ? static_cast<double>(bits.size()) * 1e9 /
                                              static_cast<double>(res.total_ns)
                                        : 0.0;
  return res;
}

TranscriptResult run_transcript(const MachineConfig& cfg, ChannelKind kind,
                                const std::vector<int>& bits, const RunOptions& opt) {
  const auto cal = calibrate_thresholds(cfg, kind, opt.freq_mhz);
  if (!cal.ok) {
    throw CalibrationError(std::string(to_string(kind)) + " threshold calibration failed: " +
                           cal.reason);
  }
  return run_transcript(cfg, kind, bits, cal.thresholds, opt);
}

std::vector<int> random_bits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> out(n);
  for (auto& b : out) b = static_cast<int>(rng() >> 63);
  return out;
}

std::vector<int> read_bits_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open bit file '" + path + "'");
  std::vector<int> out;
  char c;
  while (f.get(c)) {
    if (c == '0' || c == '1') {
      out.push_back(c - '0');
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      throw ConfigError("bit file may only contain 0, 1 and whitespace");
    }
  }
  return out;
}

}  // namespace ichsim
