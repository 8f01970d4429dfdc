#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "ichsim/covert.hpp"

using namespace ichsim;

namespace {

RunOptions quiet() {
  RunOptions o;
  o.use_noise = false;
  return o;
}

MachineConfig with(void (*edit)(MachineConfig&)) {
  MachineConfig c = test::mobile();
  edit(c);
  return c;
}

}  // namespace

TEST_CASE("placements and probe classes") {
  const auto s = placement_of(ChannelKind::SameThread);
  CHECK((s.receiver_core == s.sender_core && s.receiver_thread == s.sender_thread));
  const auto smt = placement_of(ChannelKind::CrossSMT);
  CHECK((smt.receiver_core == smt.sender_core && smt.receiver_thread != smt.sender_thread));
  CHECK(placement_of(ChannelKind::CrossCore).receiver_core != placement_of(ChannelKind::CrossCore).sender_core);
  CHECK(probe_class(ChannelKind::SameThread) == InstructionClass::L512b_Heavy);
  CHECK(probe_class(ChannelKind::CrossSMT) == InstructionClass::Scalar64b);
  CHECK(probe_class(ChannelKind::CrossCore) == InstructionClass::L128b_Heavy);
  CHECK(parse_channel("smt") == ChannelKind::CrossSMT);
  CHECK_FALSE(parse_channel("bus").has_value());
}

TEST_CASE("symbol encoding is a bijection onto the four levels") {
  CHECK(encode_symbol(0b00) == InstructionClass::L128b_Heavy);
  CHECK(encode_symbol(0b11) == InstructionClass::L512b_Heavy);
  std::set<InstructionClass> seen;
  for (int s = 0; s < 4; ++s) {
    seen.insert(encode_symbol(s));
    CHECK(level_of(encode_symbol(s)) == s);
  }
  CHECK(seen.size() == 4);
  CHECK(level_of(InstructionClass::Scalar64b) == -1);
  CHECK_THROWS_AS(encode_symbol(4), ModelError);
}

TEST_CASE("sync_wait") {
  CHECK(sync_wait(2 * kNsPerMs, kNsPerMs) == 2 * kNsPerMs);
  CHECK(sync_wait(1200 * kNsPerUs, kNsPerMs) == 2 * kNsPerMs);
  CHECK(sync_wait(0, kNsPerMs) == 0);
  CHECK_THROWS_AS(sync_wait(5, 0), ModelError);
}

TEST_CASE("threshold decoding: means, boundaries and erasures") {
  // SameThread-like: TP falls as the symbol rises
  const auto thr = thresholds_from_means({8000, 6000, 3000, 100});
  CHECK(thr.symbol_by_range == std::array<int, 4>{3, 2, 1, 0});
  CHECK(thr.cuts == std::array<double, 3>{1550, 4500, 7000});
  for (int s = 0; s < 4; ++s) CHECK(decode_symbol(thr.mean_by_symbol[s], thr) == s);
  // exhaustive walk across every cut: the value on a cut goes to the lower range
  for (int i = 0; i < 3; ++i) {
    CHECK(decode_symbol(thr.cuts[i], thr) == thr.symbol_by_range[i]);
    CHECK(decode_symbol(thr.cuts[i] + 1e-9 * thr.cuts[i], thr) == thr.symbol_by_range[i + 1]);
    CHECK(decode_symbol(thr.cuts[i] - 1, thr) == thr.symbol_by_range[i]);
  }
  CHECK(thr.erasure_above == doctest::Approx(9000));
  CHECK(decode_symbol(9000, thr) == 0);
  CHECK(decode_symbol(9000.5, thr) == kErasure);
  CHECK(decode_symbol(0, thr) == 3);
}

TEST_CASE("calibration: deterministic clusters ordered by channel direction") {
  for (auto k : kAllChannels) {
    CAPTURE(to_string(k));
    const auto cal = calibrate_thresholds(test::mobile(), k);
    CHECK(cal.ok);
    for (int s = 0; s < 4; ++s) {
      CHECK(cal.variance[s] == 0.0);
      CHECK(cal.samples[s].size() == 50);
    }
    const auto& mu = cal.thresholds.mean_by_symbol;
    for (int s = 0; s < 3; ++s) {
      if (k == ChannelKind::SameThread) {
        CHECK(mu[s] - mu[s + 1] > 2000);
      } else {
        CHECK(mu[s + 1] - mu[s] > 2000);
      }
    }
  }
}

TEST_CASE("SameThread receiver after L1 sees the longest TP, after L4 the shortest") {
  const auto& cfg = test::mobile();
  const auto recs = simulate_symbols(cfg, ChannelKind::SameThread, {0, 3}, quiet());
  const double x = cfg.vf.at(1.0) * 1.0 * cfg.ll.r_ll_mohm * 0.003;
  const double slew = *cfg.slew[0];
  const double l1_to_l4_cycles =
      ((*cfg.cdyn)[InstructionClass::L512b_Heavy] - (*cfg.cdyn)[InstructionClass::L128b_Heavy]) * x / slew * 1000;
  CHECK(static_cast<double>(recs[0].tp_cycles) == doctest::Approx(l1_to_l4_cycles).epsilon(0.01));
  CHECK(recs[1].tp_cycles == 0);
}

TEST_CASE("round trip of all four symbols at every configured frequency") {
  const auto& cfg = test::mobile();
  for (int mhz : cfg.freqs_mhz) {
    for (auto k : kAllChannels) {
      CAPTURE(mhz);
      CAPTURE(to_string(k));
      const auto cal = calibrate_thresholds(cfg, k, mhz);
      REQUIRE(cal.ok);
      RunOptions o = quiet();
      o.freq_mhz = mhz;
      for (const auto& r : simulate_symbols(cfg, k, {0, 1, 2, 3, 3, 2, 1, 0}, o)) {
        CHECK(decode_symbol(static_cast<double>(r.tp_cycles), cal.thresholds) == r.sent);
      }
    }
  }
}

TEST_CASE("noiseless 1000-bit transcripts: zero BER at two bits per epoch") {
  const auto bits = random_bits(1000, 99);
  for (auto k : kAllChannels) {
    const auto res = run_transcript(test::mobile(), k, bits, quiet());
    CHECK(res.ber == 0.0);
    CHECK(res.erasures == 0);
    CHECK(res.bits_decoded == bits);
    CHECK(res.throughput_bps >= 2898.0);
    CHECK(res.throughput_bps == doctest::Approx(2899).epsilon(0.05));
    // capacity bound: reset window plus the unthrottled send time
    const auto& cv = test::mobile().covert;
    const double send_ns = static_cast<double>(cv.sender_iterations * cv.sender_uops_per_iteration);
    const double bound = 2e9 / (static_cast<double>(test::mobile().hysteresis_ns) + send_ns);
    CHECK(res.throughput_bps <= bound);
    CHECK(res.throughput_bps >= 0.95 * bound);
  }
}

TEST_CASE("misaligned receiver start is absorbed by the epoch wait") {
  const auto bits = random_bits(40, 5);
  for (auto k : {ChannelKind::CrossSMT, ChannelKind::CrossCore}) {
    const auto base = run_transcript(test::mobile(), k, bits, quiet());
    for (Nanos skew : {50 * kNsPerUs, 200 * kNsPerUs, 340 * kNsPerUs}) {
      RunOptions o = quiet();
      o.start_skew_ns = skew;
      const auto res = run_transcript(test::mobile(), k, bits, o);
      CHECK(res.ber == base.ber);
      CHECK(res.bits_decoded == base.bits_decoded);
    }
  }
}

TEST_CASE("without the reset wait the second symbol sees no TP") {
  const auto& cfg = test::mobile();
  const auto cal = calibrate_thresholds(cfg, ChannelKind::CrossCore);
  RunOptions o = quiet();
  o.reset_wait = false;
  const auto recs = simulate_symbols(cfg, ChannelKind::CrossCore, {3, 3}, o);
  CHECK(recs[0].tp_cycles > 0);
  CHECK(recs[1].tp_cycles == 0);
  CHECK(decode_symbol(static_cast<double>(recs[1].tp_cycles), cal.thresholds) != 3);
}

TEST_CASE("erasures count as two bit errors") {
  const auto bits = random_bits(20, 1);
  const auto thr = thresholds_from_means({10, 20, 30, 40});
  const auto res = run_transcript(test::mobile(), ChannelKind::CrossSMT, bits, thr, quiet());
  CHECK(res.erasures == 10);
  CHECK(res.ber == 1.0);
  for (int b : res.bits_decoded) CHECK(b == -1);
}

TEST_CASE("mitigations") {
  const auto bits = random_bits(200, 3);
  std::array<DecodeThresholds, 3> thr;
  for (std::size_t i = 0; i < 3; ++i) thr[i] = calibrate_thresholds(test::mobile(), kAllChannels[i]).thresholds;
  auto ber = [&](const MachineConfig& c, std::size_t i) {
    return run_transcript(c, kAllChannels[i], bits, thr[i], quiet()).ber;
  };

  SUBCASE("secure mode: all three at chance, identical TPs, calibration fails") {
    const auto c = with([](MachineConfig& m) { m.mitigation.secure_mode = true; });
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(ber(c, i) > 0.3);
      const auto recs = simulate_symbols(c, kAllChannels[i], {0, 1, 2, 3, 2, 0}, quiet());
      for (const auto& r : recs) CHECK(r.tp_cycles == recs[0].tp_cycles);
      CHECK_FALSE(calibrate_thresholds(c, kAllChannels[i]).ok);
    }
  }
  SUBCASE("per-core LDO: CrossCore at chance, receiver TP independent of the symbol") {
    const auto c = with([](MachineConfig& m) { m.mitigation.per_core_vr = true; });
    CHECK(ber(c, 2) == doctest::Approx(0.5).epsilon(0.3));
    const auto recs = simulate_symbols(c, ChannelKind::CrossCore, {0, 1, 2, 3}, quiet());
    for (const auto& r : recs) CHECK(r.tp_cycles == recs[0].tp_cycles);
    // fast LDO ramps squeeze the same-core channels below the level gap
    CHECK_FALSE(calibrate_thresholds(c, ChannelKind::SameThread).ok);
    CHECK_FALSE(calibrate_thresholds(c, ChannelKind::CrossSMT).ok);
  }
  SUBCASE("improved throttling kills CrossSMT only") {
    const auto c = with([](MachineConfig& m) { m.mitigation.improved_throttling = true; });
    CHECK(ber(c, 0) == 0.0);
    CHECK(ber(c, 1) > 0.3);
    CHECK(ber(c, 2) == 0.0);
  }
}

TEST_CASE("transcripts are deterministic for a seed") {
  MachineConfig c = test::mobile();
  c.noise.event_rate_hz = 2000;
  c.noise.app_phi_rate_hz = 500;
  RunOptions o;
  o.seed = 42;
  const auto bits = random_bits(100, 42);
  const auto a = run_transcript(c, ChannelKind::CrossSMT, bits, o);
  const auto b = run_transcript(c, ChannelKind::CrossSMT, bits, o);
  CHECK(a.bits_decoded == b.bits_decoded);
  REQUIRE(a.symbols.size() == b.symbols.size());
  for (std::size_t i = 0; i < a.symbols.size(); ++i) {
    CHECK(a.symbols[i].tp_cycles == b.symbols[i].tp_cycles);
    CHECK(a.symbols[i].wall_ns == b.symbols[i].wall_ns);
  }
}

TEST_CASE("bit input") {
  CHECK(random_bits(64, 7) == random_bits(64, 7));
  CHECK(random_bits(64, 7) != random_bits(64, 8));
  const std::string path = "covert_bits_test.txt";
  {
    std::ofstream f(path);
    f << "01 10\n11\t00\n";
  }
  CHECK(read_bits_file(path) == std::vector<int>{0, 1, 1, 0, 1, 1, 0, 0});
  {
    std::ofstream f(path);
    f << "0102";
  }
  CHECK_THROWS_AS(read_bits_file(path), ConfigError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_bits_file("does/not/exist"), ConfigError);
  CHECK_THROWS_AS(run_transcript(test::mobile(), ChannelKind::SameThread, {1, 0, 1},
                                 DecodeThresholds{}, quiet()),
                  ModelError);
}
