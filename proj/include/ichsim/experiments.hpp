#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ichsim/calibration.hpp"
#include "ichsim/covert.hpp"
#include "ichsim/report.hpp"

namespace ichsim {

struct ExperimentOptions {
  std::string bits_file;               ///< transcript input; random bits when empty
  std::optional<ChannelKind> channel;  ///< transcript channel (default SameThread)
  unsigned threads = 0;                ///< worker threads; 0 = hardware concurrency
};

const std::vector<std::string>& experiment_ids();

/// Runs one experiment on `cfg`, calibrating first when the config asks for
/// it. Throws ConfigError for an unknown id, CalibrationError when the
/// model cannot be calibrated.
ExperimentReport run_experiment(const MachineConfig& cfg, const std::string& id,
                                const ExperimentOptions& opt = {});

/// Fit report: per-point table plus fitted parameters in the summary.
ExperimentReport calibration_report(const MachineConfig& cfg, const CalibratedParams& p);

/// Seed of the i-th run derived from a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t i);

/// Count of distinct plateaus in `values`: sorted values closer than
/// `rel_gap` of the largest value are merged.
int count_plateaus(std::vector<double> values, double rel_gap);

}  // namespace ichsim
