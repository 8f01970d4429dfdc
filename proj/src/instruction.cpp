#include "ichsim/instruction.hpp"

namespace ichsim {

namespace {

constexpr std::array<std::string_view, kNumClasses> kNames{
    "Scalar64b",   "L128b_Light", "L128b_Heavy", "L256b_Light",
    "L256b_Heavy", "L512b_Light", "L512b_Heavy",
};

constexpr std::array<std::string_view, kNumClasses> kShortNames{
    "64b",        "128b_Light", "128b_Heavy", "256b_Light",
    "256b_Heavy", "512b_Light", "512b_Heavy",
};

}  // namespace

std::string_view to_string(InstructionClass c) { return kNames[index_of(c)]; }

std::optional<InstructionClass> parse_class(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (name == kNames[i] || name == kShortNames[i]) return kAllClasses[i];
  }
  return std::nullopt;
}

bool CdynTable::strictly_increasing() const {
  for (std::size_t i = 1; i < kNumClasses; ++i) {
    if (!(weight[i] > weight[i - 1])) return false;
  }
  return weight[0] > 0.0;
}

CdynTable CdynTable::calibrated_defaults() {
  // Output of `ichsim calibrate` on configs/mobile_2core.cfg + configs/tp_targets.csv.
  return CdynTable{{1.0, 1.0338, 1.0674, 1.5843, 2.1236, 2.4607, 2.9103}};
}

}  // namespace ichsim
