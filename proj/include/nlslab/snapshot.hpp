#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "nlslab/field.hpp"

namespace nlslab {

/// Field snapshot: one JSON header line {n, L, t, label} followed by n^3
/// little-endian (real, imag) float64 pairs in the grid's x-fastest order.
struct Snapshot {
  Field field;
  double time = 0.0;
  std::string label;
};

namespace detail {

inline void put_le_double(std::ostream& os, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  os.write(bytes, 8);
}

inline double get_le_double(std::istream& is) {
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  if (!is) throw Error("snapshot: truncated sample data");
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void write_snapshot(std::ostream& os, const Field& u, double t, const std::string& label) {
  nlohmann::ordered_json header;
  header["n"] = u.grid().n();
  header["L"] = u.grid().half_width();
  header["t"] = t;
  header["label"] = label;
  if (u.grid().staggered()) header["staggered"] = true;
  os << header.dump() << '\n';
  for (const auto& v : u.values()) {
    detail::put_le_double(os, v.real());
    detail::put_le_double(os, v.imag());
  }
  if (!os) throw Error("snapshot: write failed");
}

inline void write_snapshot(const std::string& path, const Field& u, double t, const std::string& label) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("snapshot: cannot open " + path + " for writing");
  write_snapshot(os, u, t, label);
}

inline Snapshot read_snapshot(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("snapshot: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("snapshot: bad header: ") + e.what());
  }
  for (const char* key : {"n", "L", "t", "label"}) {
    if (!header.contains(key)) throw Error(std::string("snapshot: header lacks key ") + key);
  }
  const Grid3 grid(header["n"].get<std::size_t>(), header["L"].get<double>(), header.value("staggered", false));
  Field u(grid);
  for (auto& v : u.values()) {
    const double re = detail::get_le_double(is);
    const double im = detail::get_le_double(is);
    v = Complex(re, im);
  }
  return Snapshot{std::move(u), header["t"].get<double>(), header["label"].get<std::string>()};
}

inline Snapshot read_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("snapshot: cannot open " + path);
  return read_snapshot(is);
}

}  // namespace nlslab
