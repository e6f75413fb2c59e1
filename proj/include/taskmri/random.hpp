#pragma once

#include <cstdint>
#include <string_view>

#include <torch/torch.h>

namespace taskmri {

/// Seeded CPU generator; all randomness in the library flows through these.
torch::Generator make_generator(uint64_t seed);

/// Stable 64-bit mix of a base seed and a label (FNV-1a + splitmix finaliser).
uint64_t derive_seed(uint64_t base, std::string_view label);
uint64_t derive_seed(uint64_t base, uint64_t index);

}  // namespace taskmri
