#include "mvlab/snapshot_io.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace mvlab {

static_assert(std::endian::native == std::endian::little,
              "binary snapshot I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'V', 'L', 'B', 'S', 'N', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_double(std::ostream& os, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  os.write(buf, n);
}

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw ConfigError("truncated binary snapshot file");
  return v;
}

}  // namespace

void write_snapshots_csv(std::ostream& os, const std::vector<Snapshot>& snapshots) {
  const Eigen::Index d = snapshots.empty() ? 0 : snapshots.front().measure.dim();
  os << "time,particle_index";
  for (Eigen::Index j = 0; j < d; ++j) os << ",x_" << (j + 1);
  os << '\n';
  for (const auto& snap : snapshots) {
    const auto& s = snap.measure.samples();
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      put_double(os, snap.time);
      os << ',' << i;
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        os << ',';
        put_double(os, s(i, j));
      }
      os << '\n';
    }
  }
}

std::vector<Snapshot> read_snapshots_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty snapshot CSV");
  if (line.rfind("time,particle_index", 0) != 0) throw ConfigError("snapshot CSV header mismatch");
  const auto d = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 1;
  if (d < 1) throw ConfigError("snapshot CSV has no coordinate columns");
  // time -> rows in file order; times appear in blocks.
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) fields.push_back(std::stod(cell));
    if (static_cast<int>(fields.size()) != d + 2) throw ConfigError("snapshot CSV row has wrong width");
    if (times.empty() || times.back() != fields[0]) {
      times.push_back(fields[0]);
      rows.emplace_back();
    }
    rows.back().insert(rows.back().end(), fields.begin() + 2, fields.end());
  }
  std::vector<Snapshot> out;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto n = static_cast<Eigen::Index>(rows[k].size() / d);
    SampleMatrix s(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) s(i, j) = rows[k][i * d + j];
    out.push_back({times[k], EmpiricalMeasure(std::move(s))});
  }
  return out;
}

void write_snapshots_binary(std::ostream& os, const std::vector<Snapshot>& snapshots) {
  const std::uint32_t d = snapshots.empty() ? 0 : static_cast<std::uint32_t>(snapshots[0].measure.dim());
  const std::uint64_t n = snapshots.empty() ? 0 : static_cast<std::uint64_t>(snapshots[0].measure.size());
  os.write(kMagic, sizeof kMagic);
  write_raw(os, kVersion);
  write_raw(os, d);
  write_raw(os, n);
  write_raw(os, static_cast<std::uint64_t>(snapshots.size()));
  std::vector<double> buf;
  for (const auto& snap : snapshots) {
    const auto& s = snap.measure.samples();
    if (static_cast<std::uint64_t>(s.rows()) != n || static_cast<std::uint32_t>(s.cols()) != d)
      throw ConfigError("binary snapshots must share N and d");
    write_raw(os, snap.time);
    // particle-major: transpose the column-major cloud
    buf.resize(n * d);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        buf.data(), static_cast<Eigen::Index>(n), d) = s;
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(double)));
  }
}

std::vector<Snapshot> read_snapshots_binary(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw ConfigError("binary snapshot magic mismatch");
  if (read_raw<std::uint32_t>(is) != kVersion) throw ConfigError("unsupported snapshot version");
  const auto d = read_raw<std::uint32_t>(is);
  const auto n = read_raw<std::uint64_t>(is);
  const auto count = read_raw<std::uint64_t>(is);
  std::vector<Snapshot> out;
  std::vector<double> buf(n * d);
  for (std::uint64_t k = 0; k < count; ++k) {
    const double t = read_raw<double>(is);
    if (!is.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(double))))
      throw ConfigError("truncated binary snapshot file");
    SampleMatrix s = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        buf.data(), static_cast<Eigen::Index>(n), d);
    out.push_back({t, EmpiricalMeasure(std::move(s))});
  }
  return out;
}

std::vector<Snapshot> read_snapshots_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open snapshot file: " + path);
  char head[8] = {};
  f.read(head, 8);
  f.clear();
  f.seekg(0);
  if (std::memcmp(head, kMagic, 8) == 0) return read_snapshots_binary(f);
  return read_snapshots_csv(f);
}

}  // namespace mvlab
