#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "slimda/slimnet.hpp"
#include "slimda/tensor.hpp"

namespace slimda {

/// "%.17g": enough significant digits for an exact double round trip.
std::string format_real(double v);

/// Writes a rank-1 tensor as a flat JSON list and a matrix as a list of rows.
void write_tensor_json(std::ostream& os, const Tensor& t);

/// Parses a flat or nested JSON list into a tensor; throws IoError on shape problems.
Tensor tensor_from_json(const nlohmann::json& j, const std::string& what);

nlohmann::json architecture_to_json(const Architecture& arch);
/// Throws ConfigError naming the first missing or malformed field.
Architecture architecture_from_json(const nlohmann::json& j);

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::string mode = "slimda";
    DeployHead deploy_head = DeployHead::Auxiliary;
};

struct Checkpoint {
    ParamStore store;
    CheckpointMeta meta;
};

/// Single JSON document {format, architecture, seed, step, mode, deploy_head, parameters}.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const CheckpointMeta& meta);
std::string checkpoint_to_string(const ParamStore& store, const CheckpointMeta& meta);
/// Throws IoError if unreadable or malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `contents` atomically (temp file + rename). Throws IoError.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

} // namespace slimda
