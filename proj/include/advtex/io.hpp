#pragma once

// File formats.
//
//  OBJ subset   `v x y z`, `vt u v`, `vn x y z`, `f a/b/c a/b/c a/b/c` with
//               1-based positive indices; `#` comments and blank lines.
//               Anything else is a parse error. Each distinct v/vt/vn
//               triplet becomes one mesh vertex. Normals are renormalized.
//  PPM          binary P6, 8-bit, values clamped to [0,1] and rounded.
//  TEXF         "TEXF", u32 H, u32 W, then H*W*3 little-endian f32 (HWC).
//  VCOL         "VCOL", u32 N_v, then N_v*3 little-endian f32.
//
// TEXF and VCOL store f32: a save/load round trip is bit-exact for values
// representable in single precision and rounds anything else to nearest.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "advtex/image.hpp"
#include "advtex/mesh.hpp"

namespace advtex {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, int line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, double v) { put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

inline std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error(path + ": truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double get_f32(std::istream& is, const std::string& path) {
  return static_cast<double>(std::bit_cast<float>(get_u32(is, path)));
}

inline void expect_magic(std::istream& is, const char* magic, const std::string& path) {
  char m[4];
  if (!is.read(m, 4) || std::memcmp(m, magic, 4) != 0)
    throw std::runtime_error(path + ": bad magic, expected " + std::string(magic, 4));
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  return is;
}

inline int parse_obj_index(const std::string& token, std::size_t count, const std::string& path, int line) {
  std::size_t used = 0;
  long value = 0;
  try {
    value = std::stol(token, &used);
  } catch (const std::exception&) {
    throw ParseError(path, line, "malformed index '" + token + "'");
  }
  if (used != token.size()) throw ParseError(path, line, "malformed index '" + token + "'");
  if (value <= 0) throw ParseError(path, line, "unsupported non-positive index " + token);
  if (static_cast<std::size_t>(value) > count)
    throw ParseError(path, line, "index " + token + " out of range (have " + std::to_string(count) + ")");
  return static_cast<int>(value - 1);
}

}  // namespace detail

inline Mesh parse_obj(std::istream& in, const std::string& path = "<obj>") {
  std::vector<Vec3> positions;
  std::vector<Vec2> texcoords;
  std::vector<Vec3> normals;
  std::map<std::tuple<int, int, int>, int> vertex_of;
  Mesh mesh;

  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::istringstream ls(raw);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;

    auto read_numbers = [&](int count) {
      std::array<double, 3> v{};
      for (int i = 0; i < count; ++i) {
        if (!(ls >> v[i])) throw ParseError(path, line_no, "expected " + std::to_string(count) + " numbers after '" + tag + "'");
      }
      std::string extra;
      if (ls >> extra) throw ParseError(path, line_no, "unexpected trailing token '" + extra + "'");
      return v;
    };

    if (tag == "v") {
      const auto v = read_numbers(3);
      positions.emplace_back(v[0], v[1], v[2]);
    } else if (tag == "vt") {
      const auto v = read_numbers(2);
      texcoords.emplace_back(v[0], v[1]);
    } else if (tag == "vn") {
      const auto v = read_numbers(3);
      Vec3 n(v[0], v[1], v[2]);
      if (n.norm() == 0.0) throw ParseError(path, line_no, "zero-length normal");
      normals.push_back(n.normalized());
    } else if (tag == "f") {
      std::vector<std::string> corners;
      std::string corner;
      while (ls >> corner) corners.push_back(corner);
      if (corners.size() != 3) throw ParseError(path, line_no, "only triangular faces are supported");
      Face face{};
      for (int k = 0; k < 3; ++k) {
        const std::string& c = corners[k];
        const auto s1 = c.find('/');
        const auto s2 = s1 == std::string::npos ? std::string::npos : c.find('/', s1 + 1);
        if (s1 == std::string::npos || s2 == std::string::npos || c.find('/', s2 + 1) != std::string::npos)
          throw ParseError(path, line_no, "face corner '" + c + "' must be a v/vt/vn triplet");
        const int vi = detail::parse_obj_index(c.substr(0, s1), positions.size(), path, line_no);
        const int ti = detail::parse_obj_index(c.substr(s1 + 1, s2 - s1 - 1), texcoords.size(), path, line_no);
        const int ni = detail::parse_obj_index(c.substr(s2 + 1), normals.size(), path, line_no);
        const auto key = std::make_tuple(vi, ti, ni);
        auto it = vertex_of.find(key);
        if (it == vertex_of.end()) {
          it = vertex_of.emplace(key, static_cast<int>(mesh.vertices.size())).first;
          mesh.vertices.push_back(positions[vi]);
          mesh.uvs.push_back(texcoords[ti]);
          mesh.normals.push_back(normals[ni]);
        }
        face[k] = it->second;
      }
      mesh.faces.push_back(face);
    } else {
      throw ParseError(path, line_no, "unsupported OBJ statement '" + tag + "'");
    }
  }
  try {
    validate_mesh(mesh);
  } catch (const std::invalid_argument& e) {
    throw ParseError(path, line_no, e.what());
  }
  return mesh;
}

inline Mesh load_mesh(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  return parse_obj(is, path.string());
}

/// Writes one v/vt/vn triplet per mesh vertex.
inline void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  auto os = detail::open_out(path);
  os.precision(17);
  for (const auto& v : mesh.vertices) os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.uvs) os << "vt " << t.x() << ' ' << t.y() << '\n';
  for (const auto& n : mesh.normals) os << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  for (const auto& f : mesh.faces) {
    os << 'f';
    for (int idx : f) os << ' ' << idx + 1 << '/' << idx + 1 << '/' << idx + 1;
    os << '\n';
  }
}

inline void write_ppm(const Image& img, const std::filesystem::path& path) {
  auto os = detail::open_out(path);
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double v = std::clamp(img.data[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void write_texf(const Image& img, const std::filesystem::path& path) {
  auto os = detail::open_out(path);
  os.write("TEXF", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(img.height));
  detail::put_u32(os, static_cast<std::uint32_t>(img.width));
  for (double v : img.data) detail::put_f32(os, v);
}

inline Image read_texf(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  const std::string p = path.string();
  detail::expect_magic(is, "TEXF", p);
  const auto h = detail::get_u32(is, p);
  const auto w = detail::get_u32(is, p);
  Image img(static_cast<int>(h), static_cast<int>(w));
  for (double& v : img.data) v = detail::get_f32(is, p);
  return img;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& ppm_path) {
  auto p = ppm_path;
  p.replace_extension(".texf");
  return p;
}

/// Writes `path` (PPM preview) and the lossless sidecar next to it.
inline void save_texture(const Image& texture, const std::filesystem::path& path) {
  write_ppm(texture, path);
  write_texf(texture, sidecar_path(path));
}

/// Loads the float sidecar belonging to a texture saved with save_texture.
inline Image load_texture(const std::filesystem::path& path) {
  return read_texf(path.extension() == ".texf" ? path : sidecar_path(path));
}

inline void save_vertex_colors(const VertexColors& colors, const std::filesystem::path& path) {
  auto os = detail::open_out(path);
  os.write("VCOL", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(colors.vertex_count()));
  for (double v : colors.rgb) detail::put_f32(os, v);
}

inline VertexColors load_vertex_colors(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  const std::string p = path.string();
  detail::expect_magic(is, "VCOL", p);
  const auto n = detail::get_u32(is, p);
  VertexColors c(n);
  for (double& v : c.rgb) v = detail::get_f32(is, p);
  return c;
}

}  // namespace advtex
