#pragma once

// Run checkpoint: everything transfer training needs.
//
// Layout (little-endian):
//   "MACK", u32 header length, header (JSON text), then every tensor listed in
//   the header as raw f64 values in row-major order.
// The header records the network dimensions and the catalog hash; loading a
// checkpoint written against a different catalog fails.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "metaaug/nn.hpp"
#include "metaaug/policy.hpp"
#include "metaaug/sampler.hpp"

namespace metaaug {

struct Checkpoint {
    PolicyNetwork<double> policy;
    double log_alpha = 0.0;
    TaskNetwork<double> task;  // frozen feature network for transfer
    PairGrid distribution = uniform_grid();
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace metaaug
