#pragma once

#include "mvlab/sde_engine.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mvlab {

// CSV: header "time,particle_index,x_1,...,x_d", one row per particle per
// snapshot, doubles printed with 17 significant digits.
void write_snapshots_csv(std::ostream& os, const std::vector<Snapshot>& snapshots);
[[nodiscard]] std::vector<Snapshot> read_snapshots_csv(std::istream& is);

// Binary layout, little-endian:
//   char[8]  magic "MVLBSNAP"
//   uint32   version (1)
//   uint32   d
//   uint64   N
//   uint64   count (number of snapshots)
//   count x { float64 time; float64 x[N][d] particle-major }
// All snapshots must share N and d. Weights are not stored (uniform).
void write_snapshots_binary(std::ostream& os, const std::vector<Snapshot>& snapshots);
[[nodiscard]] std::vector<Snapshot> read_snapshots_binary(std::istream& is);

/// Dispatches on the first bytes of the file.
[[nodiscard]] std::vector<Snapshot> read_snapshots_file(const std::string& path);

}  // namespace mvlab
