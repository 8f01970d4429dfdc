#pragma once

#include <string>

#include "ichsim/calibration.hpp"

namespace test {

inline std::string config_path(const std::string& name) {
  return std::string(ICHSIM_CONFIG_DIR) + "/" + name;
}

// Calibrated mobile machine, fitted once per test binary.
inline const ichsim::MachineConfig& mobile() {
  static const ichsim::MachineConfig cfg =
      ichsim::resolve_calibration(ichsim::load_config(config_path("mobile_2core.cfg")));
  return cfg;
}

inline const ichsim::MachineConfig& desktop() {
  static const ichsim::MachineConfig cfg =
      ichsim::resolve_calibration(ichsim::load_config(config_path("desktop.cfg")));
  return cfg;
}

}  // namespace test
