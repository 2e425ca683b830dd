#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "donorpl/constants.hpp"

namespace donorpl::io {

enum class EnergyUnit { ueV, meV, MHz };

inline EnergyUnit parse_unit(std::string_view s) {
  if (s == "ueV" || s == "µeV" || s == "uev") return EnergyUnit::ueV;
  if (s == "meV" || s == "mev") return EnergyUnit::meV;
  if (s == "MHz" || s == "mhz") return EnergyUnit::MHz;
  throw std::invalid_argument("unknown energy unit '" + std::string(s) + "' (expected ueV, meV or MHz)");
}

inline std::string unit_name(EnergyUnit u) {
  switch (u) {
    case EnergyUnit::ueV: return "ueV";
    case EnergyUnit::meV: return "meV";
    case EnergyUnit::MHz: return "MHz";
  }
  return "ueV";
}

inline double to_uev(double v, EnergyUnit u) {
  switch (u) {
    case EnergyUnit::ueV: return v;
    case EnergyUnit::meV: return v * constants::mev_to_uev;
    case EnergyUnit::MHz: return constants::mhz_to_uev(v);
  }
  return v;
}

inline double from_uev(double v, EnergyUnit u) {
  switch (u) {
    case EnergyUnit::ueV: return v;
    case EnergyUnit::meV: return v / constants::mev_to_uev;
    case EnergyUnit::MHz: return constants::uev_to_mhz(v);
  }
  return v;
}

}  // namespace donorpl::io
