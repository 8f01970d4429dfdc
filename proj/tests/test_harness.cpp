#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "ichsim/experiments.hpp"

using namespace ichsim;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string dump_all(const ExperimentReport& r) {
  std::string s = r.summary_document().dump();
  for (const auto& t : r.tables) s += to_csv(t);
  return s;
}

std::string fresh_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("ichsim_" + name);
  std::filesystem::remove_all(p);
  return p.string();
}

}  // namespace

TEST_CASE("config: defaults, overrides and comments") {
  const auto cfg = parse_config("# comment\nmachine.cores = 4  # trailing\n\nlimits.icc_max_a=35\n");
  CHECK(cfg.cores == 4);
  CHECK(cfg.limits.icc_max_a == 35);
  CHECK(cfg.freqs_mhz == std::vector<int>{1000, 1200, 1400});
  CHECK(cfg.needs_calibration());
  CHECK(cfg.hysteresis_ns == 650 * kNsPerUs);
}

TEST_CASE("config: rejects unknown keys, duplicates and bad values") {
  CHECK_THROWS_AS(parse_config("machine.corez = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("machine.cores = 2\nmachine.cores = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("machine.cores = two\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("pdn.vr_kind = buck\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("machine.cores 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("limits.icc_max_a = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("model.cdyn = 1, 2, 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("model.cdyn = 1, 2, 3, 4, 5, 7, 6\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/x.cfg"), ConfigError);
  try {
    parse_config("seed = 1\nbogus.key = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("config hash: stable across formatting, sensitive to values") {
  const auto a = parse_config("machine.cores = 2\nlimits.icc_max_a = 29\n");
  const auto b = parse_config("# same machine\nlimits.icc_max_a=29.0\n   machine.cores   =  2\n");
  const auto c = parse_config("");  // both keys at their defaults
  const auto d = parse_config("limits.icc_max_a = 30\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() == c.hash());
  CHECK(a.hash() != d.hash());
  CHECK(a.hash_hex().size() == 16);
  CHECK(a.dump() == b.dump());
}

TEST_CASE("mitigation flags derive the effective regulator") {
  auto cfg = parse_config("mitigation.per_core_vr = true\n");
  CHECK(cfg.effective_vr_kind() == VRKind::PerCoreLDO);
  cfg = parse_config("pdn.vr_kind = IVR\n");
  CHECK(cfg.effective_vr_kind() == VRKind::Integrated);
}

TEST_CASE("targets file parsing") {
  const auto t = parse_targets("class,freq_GHz,cores,tp_us\nL256b_Heavy,1.0,2,9.0\n# c\nL512b_Light, 1.2, 1, 8.4, 3\n");
  REQUIRE(t.size() == 2);
  CHECK(t[0].cores == 2);
  CHECK(t[1].weight == 3);
  CHECK_THROWS_AS(parse_targets("L256b_Heavy,1.0,2,9.0\n"), ConfigError);
  CHECK_THROWS_AS(parse_targets("class,freq_GHz,cores,tp_us\nAVX9,1,1,1\n"), ConfigError);
  CHECK_THROWS_AS(parse_targets("class,freq_GHz,cores,tp_us\n"), ConfigError);
}

TEST_CASE("calibration hits the anchors and the ramp bands") {
  const auto cfg = load_config(test::config_path("mobile_2core.cfg"));
  const auto p = calibrate_model(cfg);
  CHECK(p.cdyn.strictly_increasing());
  CHECK(p.oracle_ok);
  CHECK(p.full_ramp_mbvr_us >= 12.0);
  CHECK(p.full_ramp_mbvr_us <= 15.0);
  CHECK(p.full_ramp_ivr_us == doctest::Approx(9.0));
  CHECK(p.full_ramp_ldo_us < 0.5);
  int anchors = 0;
  for (const auto& pc : p.points) {
    CHECK(pc.oracle_ok);
    CHECK(std::abs(pc.simulated_us - pc.analytic_us) * 1000 <= pc.transitions + 1.0);
    if (pc.target.weight > 1) {
      ++anchors;
      CHECK(pc.residual <= 0.01);
    }
  }
  CHECK(anchors == 2);
  CHECK(p.secondary_core_weight == doctest::Approx(0.8).epsilon(0.01));
}

TEST_CASE("calibration failures") {
  const auto cfg = load_config(test::config_path("mobile_2core.cfg"));
  auto targets = load_targets(test::config_path("tp_targets.csv"));
  SUBCASE("non-monotone table") {
    for (auto& t : targets) {
      if (t.cls == InstructionClass::L512b_Light) t.tp_us *= 3;
    }
    CHECK_THROWS_AS(calibrate_model(cfg, targets), CalibrationError);
  }
  SUBCASE("anchor residual over tolerance") {
    MachineConfig tight = cfg;
    tight.calibration.tolerance = 1e-9;
    CHECK_THROWS_AS(calibrate_model(tight, targets), CalibrationError);
  }
  SUBCASE("full ramp outside the band") {
    MachineConfig c = cfg;
    c.calibration.mbvr_ramp_us = {1.0, 2.0};
    CHECK_THROWS_AS(calibrate_model(c, targets), CalibrationError);
  }
  SUBCASE("missing class") {
    std::erase_if(targets, [](const TpTarget& t) { return t.cls == InstructionClass::L128b_Light; });
    CHECK_THROWS_AS(calibrate_model(cfg, targets), CalibrationError);
  }
}

TEST_CASE("csv quoting and header-only tables") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_field("two\nlines") == "\"two\nlines\"");
  Table t{"empty", {"a", "b,c"}, {}};
  CHECK(to_csv(t) == "a,\"b,c\"\r\n");
  CHECK_THROWS(t.add({"only one"}));
}

TEST_CASE("emit_report writes deterministic files") {
  ExperimentReport r;
  r.experiment = "demo";
  r.config_hash = "0123456789abcdef";
  r.seed = 5;
  r.tables.push_back(Table{"rows", {"x", "y"}, {{"1", "2"}}});
  r.tables.push_back(Table{"none", {"k"}, {}});
  r.summary["value"] = 1.5;
  const auto dir = fresh_dir("emit");
  const auto files = emit_report(r, dir, ReportFormat::Csv);
  REQUIRE(files.size() == 3);
  CHECK(slurp(dir + "/demo_none.csv") == "k\r\n");
  const auto first = slurp(dir + "/demo_summary.json");
  CHECK(first.find("\"config_hash\": \"0123456789abcdef\"") != std::string::npos);
  CHECK(first.find("\"seed\": 5") != std::string::npos);
  emit_report(r, dir, ReportFormat::Csv);
  CHECK(slurp(dir + "/demo_summary.json") == first);
  const auto summary_only = fresh_dir("emit_summary");
  CHECK(emit_report(r, summary_only, ReportFormat::Summary).size() == 1);
  CHECK_THROWS_AS(emit_report(r, "/proc/ichsim_cannot_write", ReportFormat::Csv), std::runtime_error);
}

TEST_CASE("experiment registry") {
  const auto& ids = experiment_ids();
  for (const char* id : {"tp_characterization", "tp_prewarm", "throughput", "ber_noise_sweep",
                         "ber_appphi_sweep", "mitigation_matrix", "limits_demo", "guardband_trace",
                         "transcript"}) {
    CHECK(std::find(ids.begin(), ids.end(), id) != ids.end());
  }
  CHECK_THROWS_AS(run_experiment(test::mobile(), "nope"), ConfigError);
}

TEST_CASE("throughput experiment summary") {
  const auto r = run_experiment(test::mobile(), "throughput");
  CHECK(r.summary["throughput_bps"].get<double>() == doctest::Approx(2899).epsilon(0.05));
  const auto& ratios = r.summary["channels"]["CrossCore"]["ratios"];
  CHECK(ratios["20bps"].get<double>() == doctest::Approx(145).epsilon(0.05));
  CHECK(ratios["61bps"].get<double>() == doctest::Approx(47).epsilon(0.05));
  CHECK(ratios["122bps"].get<double>() == doctest::Approx(24).epsilon(0.05));
  CHECK(r.summary["ratio_vs_one_bit_per_transaction"].get<double>() == 2.0);
  CHECK(r.config_hash == load_config(test::config_path("mobile_2core.cfg")).hash_hex());
}

TEST_CASE("guardband trace on the desktop machine") {
  const auto r = run_experiment(test::desktop(), "guardband_trace");
  const auto& steps = r.summary["steps_mv"];
  REQUIRE(steps.size() == 4);
  CHECK(steps[0].get<double>() == doctest::Approx(8).epsilon(0.13));
  CHECK(steps[1].get<double>() == doctest::Approx(9).epsilon(0.12));
  CHECK(steps[2].get<double>() == doctest::Approx(-steps[1].get<double>()));
  CHECK(steps[3].get<double>() == doctest::Approx(-steps[0].get<double>()));
  CHECK(r.summary["frequency_constant"].get<bool>());
}

TEST_CASE("experiments are deterministic and independent of the worker count") {
  for (const char* id : {"tp_prewarm", "mitigation_matrix", "limits_demo"}) {
    ExperimentOptions one, many;
    one.threads = 1;
    many.threads = 4;
    CHECK(dump_all(run_experiment(test::mobile(), id, one)) ==
          dump_all(run_experiment(test::mobile(), id, many)));
  }
}

TEST_CASE("transcript experiment reads a bit file") {
  const auto dir = fresh_dir("bits");
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir + "/in.txt") << "00011011\n";
  }
  ExperimentOptions o;
  o.bits_file = dir + "/in.txt";
  o.channel = ChannelKind::CrossSMT;
  const auto r = run_experiment(test::mobile(), "transcript", o);
  const auto* t = r.table("symbols");
  REQUIRE(t);
  REQUIRE(t->rows.size() == 4);
  CHECK(t->header == std::vector<std::string>{"symbol_index", "sent_bits", "tp_cycles", "decoded_bits",
                                              "wall_time_ns"});
  CHECK(t->rows[2][1] == "10");
  CHECK(t->rows[2][3] == "10");
  CHECK(r.summary["ber"].get<double>() == 0.0);
  {
    std::ofstream(dir + "/odd.txt") << "011";
  }
  o.bits_file = dir + "/odd.txt";
  CHECK_THROWS_AS(run_experiment(test::mobile(), "transcript", o), ConfigError);
}

TEST_CASE("seed derivation and plateau counting") {
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(count_plateaus({}, 0.05) == 0);
  CHECK(count_plateaus({8.5, 8.35, 8.2, 5.9, 3.5, 2.0, 0.0}, 0.05) == 5);
  CHECK(count_plateaus({1, 1, 1}, 0.05) == 1);
}
