#pragma once

#include "echelon/nn.hpp"

namespace echelon::nn::reference {

// Straight serial re-implementation of the forward pass, kept independent of
// the OpenMP kernels. Tests and the kernel benchmark compare against it.
ForwardRecord forward(const ParamSet& model, std::span<const uint16_t> tokens,
                      std::span<const int> section_ids = {});

// All L window activations for one filter, brute force.
std::vector<float> window_activations(const ParamSet& model, std::span<const uint16_t> tokens,
                                      int filter);

}  // namespace echelon::nn::reference
