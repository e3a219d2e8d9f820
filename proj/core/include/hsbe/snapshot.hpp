#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "hsbe/velocity_grid.hpp"

namespace hsbe {

/// Header of a binary field snapshot. Layout on disk (little-endian):
/// 8-byte magic "HSBESNP1", f64 v_max, i32 n_v, i32 reserved, 3 x i64 spatial
/// dims, f64 l, u64 rows, u64 columns, then rows * columns f64 values row-major.
struct SnapshotHeader {
  double v_max = 0.0;
  int n_v = 0;
  std::array<std::int64_t, 3> spatial_dims{1, 1, 1};
  double l = 0.0;
  std::uint64_t rows = 0;
  std::uint64_t columns = 0;
};

struct Snapshot {
  SnapshotHeader header;
  Field field;
};

void write_snapshot(const std::filesystem::path& path, const VelocityGrid& grid, const Field& f,
                    std::array<std::int64_t, 3> spatial_dims, double l);
Snapshot read_snapshot(const std::filesystem::path& path);

/// One line per (spatial row, velocity node): row, v1, v2, v3, value.
void write_field_csv(const std::filesystem::path& path, const VelocityGrid& grid, const Field& f);

}  // namespace hsbe
