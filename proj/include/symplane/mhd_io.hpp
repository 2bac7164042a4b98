#pragma once

// MetaImage (.mhd + .raw) subset: 3D, uncompressed, local byte order,
// element types MET_UCHAR / MET_SHORT / MET_FLOAT on read, MET_FLOAT on write.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "symplane/volume.hpp"

namespace symplane {

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& value, std::size_t expected) {
  std::istringstream in(value);
  std::vector<T> out;
  T v;
  while (in >> v) out.push_back(v);
  if (out.size() != expected) {
    throw ValidationError("MetaImage key " + key + " expects " + std::to_string(expected) +
                          " values, got '" + value + "'");
  }
  return out;
}

template <class T>
void convert_raw(const std::vector<char>& bytes, std::vector<float>& out) {
  const std::size_t n = bytes.size() / sizeof(T);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, bytes.data() + i * sizeof(T), sizeof(T));
    out[i] = static_cast<float>(v);
  }
}

}  // namespace detail

inline Volume load_mhd(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open MetaImage header: " + path.string());

  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }

  auto require = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError("MetaImage header missing key " + key);
    return it->second;
  };

  if (auto it = kv.find("ObjectType"); it != kv.end() && it->second != "Image") {
    throw ValidationError("unsupported ObjectType " + it->second);
  }
  if (require("NDims") != "3") throw ValidationError("unsupported dimensionality: NDims = " + kv["NDims"]);
  if (auto it = kv.find("CompressedData"); it != kv.end() && it->second == "True") {
    throw ValidationError("compressed MetaImage data is not supported");
  }
  if (auto it = kv.find("BinaryDataByteOrderMSB"); it != kv.end() && it->second == "True") {
    throw ValidationError("big-endian MetaImage data is not supported");
  }

  auto dims_v = detail::parse_list<long long>("DimSize", require("DimSize"), 3);
  Dims3 dims{};
  for (int a = 0; a < 3; ++a) {
    if (dims_v[a] <= 0) throw ValidationError("DimSize entries must be positive");
    dims[a] = static_cast<int>(dims_v[a]);
  }
  Vec3 spacing = Vec3::Ones();
  if (kv.count("ElementSpacing")) {
    auto s = detail::parse_list<double>("ElementSpacing", kv["ElementSpacing"], 3);
    spacing = Vec3(s[0], s[1], s[2]);
  }
  Vec3 origin = Vec3::Zero();
  const char* origin_key = kv.count("Offset") ? "Offset" : (kv.count("Origin") ? "Origin" : nullptr);
  if (origin_key) {
    auto o = detail::parse_list<double>(origin_key, kv[origin_key], 3);
    origin = Vec3(o[0], o[1], o[2]);
  }

  const std::string& type = require("ElementType");
  std::size_t elem_size = 0;
  if (type == "MET_UCHAR") elem_size = 1;
  else if (type == "MET_SHORT") elem_size = 2;
  else if (type == "MET_FLOAT") elem_size = 4;
  else throw ValidationError("unsupported ElementType " + type);

  const std::string& data_file = require("ElementDataFile");
  if (data_file == "LOCAL" || data_file == "LIST") {
    throw ValidationError("ElementDataFile " + data_file + " is not supported");
  }
  std::filesystem::path raw_path = std::filesystem::path(data_file).is_absolute()
                                       ? std::filesystem::path(data_file)
                                       : path.parent_path() / data_file;
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw Error("cannot open MetaImage raw data: " + raw_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());

  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (bytes.size() != n * elem_size) {
    throw ValidationError("raw file size " + std::to_string(bytes.size()) + " does not match DimSize (" +
                          std::to_string(n * elem_size) + " bytes expected)");
  }

  std::vector<float> data;
  if (elem_size == 1) detail::convert_raw<std::uint8_t>(bytes, data);
  else if (elem_size == 2) detail::convert_raw<std::int16_t>(bytes, data);
  else detail::convert_raw<float>(bytes, data);
  return Volume(dims, spacing, origin, std::move(data));
}

/// Writes `<stem>.mhd` + `<stem>.raw` next to each other. The header
/// references the raw file by its bare name.
inline void save_mhd(const Volume& vol, const std::filesystem::path& path) {
  std::filesystem::path raw_path = path;
  raw_path.replace_extension(".raw");

  std::ofstream hdr(path);
  if (!hdr) throw Error("cannot write MetaImage header: " + path.string());
  auto triple = [](const auto& v) {
    std::ostringstream s;
    s << std::setprecision(17) << v[0] << ' ' << v[1] << ' ' << v[2];
    return s.str();
  };
  hdr << "ObjectType = Image\n"
      << "NDims = 3\n"
      << "BinaryData = True\n"
      << "BinaryDataByteOrderMSB = False\n"
      << "CompressedData = False\n"
      << "TransformMatrix = 1 0 0 0 1 0 0 0 1\n"
      << "Offset = " << triple(vol.origin()) << '\n'
      << "ElementSpacing = " << triple(vol.spacing()) << '\n'
      << "DimSize = " << triple(vol.dims()) << '\n'
      << "ElementType = MET_FLOAT\n"
      << "ElementDataFile = " << raw_path.filename().string() << '\n';
  if (!hdr) throw Error("failed writing MetaImage header: " + path.string());

  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw) throw Error("cannot write MetaImage raw data: " + raw_path.string());
  raw.write(reinterpret_cast<const char*>(vol.data().data()),
            static_cast<std::streamsize>(vol.data().size() * sizeof(float)));
  if (!raw) throw Error("failed writing MetaImage raw data: " + raw_path.string());
}

}  // namespace symplane
