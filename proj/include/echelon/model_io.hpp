#pragma once

#include <filesystem>
#include <iosfwd>

#include "echelon/model.hpp"

namespace echelon {

// Versioned container: 8-byte magic, little-endian u32 header length, JSON
// header (schema id, hyperparameters, thresholds, tensor shapes/offsets),
// then all parameter tensors as flat little-endian 32-bit floats in header
// order. load(save(m)) == m bit-exactly.
void save_model(const EchelonModel& model, std::ostream& out);
void save_model(const EchelonModel& model, const std::filesystem::path& path);

EchelonModel load_model(std::istream& in);
EchelonModel load_model(const std::filesystem::path& path);

}  // namespace echelon
