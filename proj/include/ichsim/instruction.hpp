#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ichsim {

/// Simulation time in integer nanoseconds.
using Nanos = std::int64_t;
/// Core clock cycles (also the timestamp-counter unit).
using Cycles = std::int64_t;

inline constexpr Nanos kNsPerUs = 1000;
inline constexpr Nanos kNsPerMs = 1000 * kNsPerUs;
inline constexpr Nanos kNsPerSec = 1000 * kNsPerMs;

/// Raised when a caller violates a physical model precondition.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Instruction classes ordered by dynamic capacitance (wider and heavier
/// classes draw more current). Heavy classes use the FP unit or a multiplier.
enum class InstructionClass : std::uint8_t {
  Scalar64b = 0,
  L128b_Light,
  L128b_Heavy,
  L256b_Light,
  L256b_Heavy,
  L512b_Light,
  L512b_Heavy,
};

inline constexpr std::size_t kNumClasses = 7;

inline constexpr std::array<InstructionClass, kNumClasses> kAllClasses{
    InstructionClass::Scalar64b,   InstructionClass::L128b_Light,
    InstructionClass::L128b_Heavy, InstructionClass::L256b_Light,
    InstructionClass::L256b_Heavy, InstructionClass::L512b_Light,
    InstructionClass::L512b_Heavy,
};

/// The four intensity levels L1..L4 used for signalling.
inline constexpr std::array<InstructionClass, 4> kLevelClasses{
    InstructionClass::L128b_Heavy, InstructionClass::L256b_Light,
    InstructionClass::L256b_Heavy, InstructionClass::L512b_Heavy,
};

enum class PowerGatedUnit : std::uint8_t { None, Avx256, Avx512 };

constexpr std::size_t index_of(InstructionClass c) {
  return static_cast<std::size_t>(c);
}

constexpr bool is_phi(InstructionClass c) {
  return c != InstructionClass::Scalar64b;
}

/// Uops per cycle when the front-end is not throttled.
constexpr int base_ipc(InstructionClass c) { return is_phi(c) ? 1 : 2; }

constexpr PowerGatedUnit unit_of(InstructionClass c) {
  switch (c) {
    case InstructionClass::L256b_Light:
    case InstructionClass::L256b_Heavy:
      return PowerGatedUnit::Avx256;
    case InstructionClass::L512b_Light:
    case InstructionClass::L512b_Heavy:
      return PowerGatedUnit::Avx512;
    default:
      return PowerGatedUnit::None;
  }
}

std::string_view to_string(InstructionClass c);

/// Accepts canonical names ("L256b_Heavy") and the short forms used in
/// characterization tables ("256b_Heavy", "64b").
std::optional<InstructionClass> parse_class(std::string_view name);

/// Dynamic-capacitance weight per class, normalized so Scalar64b == 1.0.
struct CdynTable {
  std::array<double, kNumClasses> weight{};

  double operator[](InstructionClass c) const { return weight[index_of(c)]; }
  double& operator[](InstructionClass c) { return weight[index_of(c)]; }

  bool strictly_increasing() const;

  /// Table produced by fitting the shipped characterization targets.
  static CdynTable calibrated_defaults();
};

}  // namespace ichsim
