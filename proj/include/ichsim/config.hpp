#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ichsim/core.hpp"
#include "ichsim/pmu.hpp"

namespace ichsim {

enum class NoiseKind { Interrupt, ContextSwitch };

std::string_view to_string(NoiseKind k);

struct Mitigations {
  bool per_core_vr = false;
  bool improved_throttling = false;
  bool secure_mode = false;
};

struct CovertParams {
  Nanos epoch_ns = 690 * kNsPerUs;
  std::int64_t sender_iterations = 3000;
  int sender_uops_per_iteration = 2;
  int receiver_uops_per_iteration = 8;
  /// Receiver loop length for SameThread, CrossSMT, CrossCore.
  std::array<std::int64_t, 3> receiver_iterations{1000, 1500, 750};
  Nanos crosscore_receiver_offset_ns = 100;
  int calibration_repeats = 50;
  Cycles min_level_gap_cycles = 2000;
  int transcript_bits = 1000;
};

struct NoiseParams {
  double event_rate_hz = 0.0;
  NoiseKind kind = NoiseKind::Interrupt;
  std::pair<Nanos, Nanos> interrupt_latency{2 * kNsPerUs, 10 * kNsPerUs};
  std::pair<Nanos, Nanos> context_switch_latency{10 * kNsPerUs, 30 * kNsPerUs};
  double app_phi_rate_hz = 0.0;
  std::int64_t app_phi_iterations = 1000;
  int app_phi_uops_per_iteration = 2;

  std::pair<Nanos, Nanos> latency_range() const {
    return kind == NoiseKind::Interrupt ? interrupt_latency : context_switch_latency;
  }
  void validate() const;
};

struct SweepParams {
  int seeds = 20;
  int bits = 200;
  std::vector<double> event_rates{0, 100, 500, 1000, 2000, 5000};
  std::vector<double> app_rates{10, 100, 1000, 10000};
};

struct CalibrationSpec {
  std::string targets_path;
  double gauge_mv = 8.5;
  double gauge_vcc_mv = 788.0;
  double gauge_freq_ghz = 2.0;
  double gauge_r_ll_mohm = 1.6;
  std::pair<double, double> mbvr_ramp_us{12.0, 15.0};
  double ivr_ramp_us = 9.0;
  double ldo_ramp_us = 0.4;
  double ramp_freq_ghz = 1.4;
  double tolerance = 0.01;  ///< relative residual allowed on anchor points
};

struct GuardbandPhase {
  int core = 0;
  Nanos start = 0;
  Nanos end = 0;
};

struct GuardbandScript {
  std::vector<GuardbandPhase> phases;
  InstructionClass cls = InstructionClass::L256b_Heavy;
  Nanos sample_ns = 10 * kNsPerMs;
  Nanos duration_ns = 2500 * kNsPerMs;
  int freq_mhz = 2000;
};

struct LimitsDemoSpec {
  int nominal_mhz = 3100;
  int active_cores = 2;
  InstructionClass cls = InstructionClass::L256b_Heavy;
};

/// Machine and experiment configuration. Backed by a flat key/value map;
/// typed fields are derived from it. Values of "calibrate" leave the
/// corresponding optional empty until calibration fills it.
class MachineConfig {
 public:
  MachineConfig();

  int cores = 2;
  std::vector<int> freqs_mhz{1000, 1200, 1400};
  std::uint64_t seed = 1;
  VRKind vr_kind = VRKind::SharedMotherboard;
  bool vr_merge = false;
  LoadLineParams ll{};
  IccModel icc{};
  std::array<std::optional<double>, 3> slew{};  ///< indexed by VRKind
  VfTable vf{};
  std::optional<CdynTable> cdyn;
  std::optional<double> secondary_core_weight;
  Nanos hysteresis_ns = 650 * kNsPerUs;
  int freq_step_mhz = 100;
  int min_freq_mhz = 800;
  LimitsConfig limits{};
  Nanos wake_latency_ns = 12;
  Nanos gate_close_ns = 650 * kNsPerUs;
  Mitigations mitigation{};
  CovertParams covert{};
  NoiseParams noise{};
  SweepParams sweep{};
  CalibrationSpec calibration{};
  GuardbandScript guardband{};
  LimitsDemoSpec limits_demo{};
  std::string base_dir = ".";

  /// Sets one key (validated, normalized) and re-derives typed fields.
  void set(const std::string& key, const std::string& value);
  /// Like set() but defers derivation (and cross-key checks) to commit().
  void assign(const std::string& key, const std::string& value);
  void commit() { derive(); }
  const std::map<std::string, std::string>& values() const { return values_; }
  bool needs_calibration() const;

  VRKind effective_vr_kind() const;
  PmuParams pmu_params(int nominal_mhz) const;
  PmuParams pmu_params() const { return pmu_params(freqs_mhz.front()); }
  CoreParams core_params() const;

  /// FNV-1a over the sorted normalized key/value pairs.
  std::uint64_t hash() const;
  std::string hash_hex() const;
  /// Normalized `key = value` text, one line per key.
  std::string dump() const;

 private:
  void derive();
  std::map<std::string, std::string> values_;
};

MachineConfig parse_config(const std::string& text, const std::string& base_dir = ".");
MachineConfig load_config(const std::string& path);

/// Parses "a, b, c" into doubles; used for list-valued keys.
std::vector<double> parse_number_list(const std::string& s);
std::uint64_t fnv1a64(std::string_view data);

}  // namespace ichsim
