#pragma once

#include <cstdint>
#include <string>

#include "hphi4/basis.hpp"
#include "hphi4/besov.hpp"

namespace hphi4 {

// Header of the binary path format: one JSON line, then the time grid and
// the coefficient rows as little-endian 64-bit floats.
struct PathHeader {
  std::string kind = "field-path";  // payload tag, e.g. a diagram name
  int dimension = 1;
  int modes = 0;
  int level = 0;
  std::uint64_t seed = 0;
  std::uint32_t replica = 0;
  double dt = 0.0;
  std::int64_t rows = 0;
  std::string generator = "philox4x32-10";
};

// dimension, modes, and rows are taken from the path itself.
void save_field_path(const std::string& file, PathHeader header, const FieldPath& path);

// Validates the header against the supplied basis.
FieldPath load_field_path(const std::string& file, const BasisPtr& basis,
                          PathHeader* header_out = nullptr);

}  // namespace hphi4
