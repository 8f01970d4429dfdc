#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ichsim/config.hpp"

namespace ichsim {

enum class ChannelKind { SameThread, CrossSMT, CrossCore };

inline constexpr std::array<ChannelKind, 3> kAllChannels{
    ChannelKind::SameThread, ChannelKind::CrossSMT, ChannelKind::CrossCore};

std::string_view to_string(ChannelKind k);
std::optional<ChannelKind> parse_channel(std::string_view s);

struct Placement {
  int sender_core = 0;
  int sender_thread = 0;
  int receiver_core = 0;
  int receiver_thread = 0;
};

Placement placement_of(ChannelKind k);
InstructionClass probe_class(ChannelKind k);

/// Symbol 0..3 (two bits, MSB first) to its sender class, L1..L4.
InstructionClass encode_symbol(int symbol);
/// Inverse of encode_symbol; -1 for classes outside L1..L4.
int level_of(InstructionClass cls);

/// Next multiple of `epoch` at or after `now`.
Nanos sync_wait(Nanos now, Nanos epoch);

inline constexpr int kErasure = -1;

struct DecodeThresholds {
  std::array<double, 4> mean_by_symbol{};
  std::array<int, 4> symbol_by_range{};  ///< ranges in ascending TP order
  std::array<double, 3> cuts{};
  double erasure_above = 0.0;
};

/// Builds thresholds from per-symbol TP means (midpoint cuts).
DecodeThresholds thresholds_from_means(const std::array<double, 4>& mean_by_symbol);

/// Symbol whose range holds tp; a value on a cut belongs to the lower range.
int decode_symbol(double tp_cycles, const DecodeThresholds& thr);

struct SymbolRecord {
  int index = 0;
  int sent = 0;
  Cycles tp_cycles = 0;
  int decoded = 0;
  Nanos wall_ns = 0;
};

struct TranscriptResult {
  ChannelKind kind = ChannelKind::SameThread;
  std::vector<int> bits_sent;
  std::vector<int> bits_decoded;  ///< -1 marks an erased bit
  std::vector<SymbolRecord> symbols;
  double ber = 0.0;
  double throughput_bps = 0.0;
  Nanos symbol_cycle_ns = 0;
  Nanos total_ns = 0;
  int erasures = 0;
};

struct ForcedBurst {
  int symbol = 0;
  InstructionClass cls = InstructionClass::L128b_Heavy;
};

struct RunOptions {
  int freq_mhz = 0;  ///< 0 selects the first configured frequency
  /// When false, symbols follow each other after `compact_spacing_ns`
  /// without waiting out the voltage reset.
  bool reset_wait = true;
  Nanos compact_spacing_ns = 50 * kNsPerUs;
  Nanos sender_offset_ns = 0;
  Nanos receiver_offset_ns = 0;
  /// The receiver thread becomes runnable only at this time.
  Nanos start_skew_ns = 0;
  /// Extra (time, latency) stalls of the receiver thread.
  std::vector<std::pair<Nanos, Nanos>> receiver_stalls;
  bool use_noise = true;
  std::uint64_t seed = 1;
  /// App-PHI bursts injected exactly at a symbol's start.
  std::vector<ForcedBurst> forced_bursts;
};

struct ChannelCalibration {
  bool ok = false;
  std::string reason;
  DecodeThresholds thresholds;
  std::array<std::vector<Cycles>, 4> samples;
  std::array<double, 4> variance{};
};

/// Sends `symbols` and returns the receiver's per-symbol TP (decoded is
/// left at 0).
std::vector<SymbolRecord> simulate_symbols(const MachineConfig& cfg, ChannelKind kind,
                                           const std::vector<int>& symbols,
                                           const RunOptions& opt);

/// Noiseless training run: each symbol `covert.calibration_repeats` times.
ChannelCalibration calibrate_thresholds(const MachineConfig& cfg, ChannelKind kind,
                                        int freq_mhz = 0);

TranscriptResult run_transcript(const MachineConfig& cfg, ChannelKind kind,
                                const std::vector<int>& bits,
                                const DecodeThresholds& thr, const RunOptions& opt);

/// Calibrates on `cfg` first; throws CalibrationError if that fails.
TranscriptResult run_transcript(const MachineConfig& cfg, ChannelKind kind,
                                const std::vector<int>& bits, const RunOptions& opt);

std::vector<int> random_bits(std::size_t n, std::uint64_t seed);
/// Reads a text file of '0'/'1' characters; whitespace is ignored.
std::vector<int> read_bits_file(const std::string& path);

}  // namespace ichsim
