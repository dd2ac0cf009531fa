#pragma once

// Binary dataset files ("FNSD"). Layout, little-endian:
//   "FNSD" u32 version, u8 family, u32 environment count
//   per environment: u8 split, u32 parameter count, (str name, f64 value)...,
//     u32 trajectory count, per trajectory: u64 seed, f64 dt, u8 rank,
//     u32 dims[rank], f64 data[]
//   u64 FNV-1a of all preceding bytes
// Parameter tables include dt, horizon_T, adapt_horizon_Tad, substeps and,
// for spatial families, grid_side and grid_spacing.

#include <filesystem>
#include <string>
#include <vector>

#include "fnsda/dynamics.hpp"

namespace fnsda {

std::vector<unsigned char> encode_dataset(const DatasetBundle& bundle);
DatasetBundle decode_dataset(std::span<const unsigned char> bytes);

void write_dataset(const DatasetBundle& bundle, const std::filesystem::path& path);
/// FormatError on a malformed or corrupted file.
DatasetBundle read_dataset(const std::filesystem::path& path);

struct DatasetCheck {
    bool ok = true;
    std::vector<std::string> problems;
    std::size_t trajectories = 0;
    std::uint64_t digest = 0;
};

/// Checksum, shape, finiteness and environment-disjointness checks.
DatasetCheck verify_dataset(const std::filesystem::path& path);

}  // namespace fnsda
