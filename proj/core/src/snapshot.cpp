#include "hsbe/snapshot.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>

#include "hsbe/errors.hpp"

namespace hsbe {

namespace {

constexpr char kMagic[8] = {'H', 'S', 'B', 'E', 'S', 'N', 'P', '1'};

template <class T>
void put(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw DataError("snapshot: truncated header");
  return value;
}

}  // namespace

void write_snapshot(const std::filesystem::path& path, const VelocityGrid& grid, const Field& f,
                    std::array<std::int64_t, 3> spatial_dims, double l) {
  if (f.velocity() != grid.size()) throw DataError("snapshot: field does not match grid");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("snapshot: cannot open " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put(os, grid.v_max());
  put(os, static_cast<std::int32_t>(grid.n()));
  put(os, std::int32_t{0});
  for (auto d : spatial_dims) put(os, d);
  put(os, l);
  put(os, static_cast<std::uint64_t>(f.spatial()));
  put(os, static_cast<std::uint64_t>(f.velocity()));
  os.write(reinterpret_cast<const char*>(f.data().data()),
           static_cast<std::streamsize>(f.size() * sizeof(double)));
  if (!os) throw DataError("snapshot: write failed for " + path.string());
}

Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("snapshot: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("snapshot: bad magic in " + path.string());
  }
  Snapshot s;
  s.header.v_max = get<double>(is);
  s.header.n_v = get<std::int32_t>(is);
  get<std::int32_t>(is);
  for (auto& d : s.header.spatial_dims) d = get<std::int64_t>(is);
  s.header.l = get<double>(is);
  s.header.rows = get<std::uint64_t>(is);
  s.header.columns = get<std::uint64_t>(is);
  s.field = Field(s.header.rows, s.header.columns);
  is.read(reinterpret_cast<char*>(s.field.data().data()),
          static_cast<std::streamsize>(s.field.size() * sizeof(double)));
  if (!is) throw DataError("snapshot: truncated payload in " + path.string());
  return s;
}

void write_field_csv(const std::filesystem::path& path, const VelocityGrid& grid, const Field& f) {
  if (f.velocity() != grid.size()) throw DataError("csv: field does not match grid");
  std::ofstream os(path);
  if (!os) throw DataError("csv: cannot open " + path.string());
  os << "row,v1,v2,v3,value\n" << std::setprecision(17);
  for (std::size_t x = 0; x < f.spatial(); ++x) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Vec3& v = grid.node(i);
      os << x << ',' << v.x() << ',' << v.y() << ',' << v.z() << ',' << f(x, i) << '\n';
    }
  }
}

}  // namespace hsbe
