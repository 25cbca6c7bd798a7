// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint: magic, u32 version, u64 header length, JSON header
// (dims, variant, array table, config echo, seed), then the raw
// little-endian f64 arrays in table order.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "mgail/model.hpp"

namespace mgail {

inline constexpr char kCheckpointMagic[8] = {'M', 'G', 'A', 'I', 'L', 'C', 'K', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelBundle model;
    Ablations ablations;
    std::uint64_t seed = 0;
    std::size_t max_horizon = 6;
    nlohmann::json config = nlohmann::json::object();
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mgail
