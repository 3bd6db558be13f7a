// SPDX-License-Identifier: Apache-2.0
//
// Binary little-endian PLY in the point-cloud layout written by 3DGS training
// code: x y z [nx ny nz] f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3.

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "vil/bytes.hpp"
#include "vil/error.hpp"
#include "vil/splat.hpp"

namespace vil::splat {
namespace {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::optional<PlyType> parse_type(const std::string& t) {
  static const std::map<std::string, PlyType> types = {
      {"char", PlyType::i8},    {"int8", PlyType::i8},      {"uchar", PlyType::u8},    {"uint8", PlyType::u8},
      {"short", PlyType::i16},  {"int16", PlyType::i16},    {"ushort", PlyType::u16},  {"uint16", PlyType::u16},
      {"int", PlyType::i32},    {"int32", PlyType::i32},    {"uint", PlyType::u32},    {"uint32", PlyType::u32},
      {"float", PlyType::f32},  {"float32", PlyType::f32},  {"double", PlyType::f64},  {"float64", PlyType::f64}};
  auto it = types.find(t);
  if (it == types.end()) return std::nullopt;
  return it->second;
}

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

double read_as_double(const std::uint8_t* p, PlyType t) {
  switch (t) {
    case PlyType::i8: return bytes::load_le<std::int8_t>(p);
    case PlyType::u8: return bytes::load_le<std::uint8_t>(p);
    case PlyType::i16: return bytes::load_le<std::int16_t>(p);
    case PlyType::u16: return bytes::load_le<std::uint16_t>(p);
    case PlyType::i32: return bytes::load_le<std::int32_t>(p);
    case PlyType::u32: return bytes::load_le<std::uint32_t>(p);
    case PlyType::f32: return bytes::load_le<float>(p);
    case PlyType::f64: return bytes::load_le<double>(p);
  }
  return 0.0;
}

struct Property {
  std::string name;
  PlyType type;
  std::size_t offset;
};

struct Header {
  std::size_t vertex_count = 0;
  std::vector<Property> props;
  std::size_t stride = 0;
};

Header parse_header(std::istream& in, const std::string& where) {
  auto fail = [&](const std::string& msg) { return IoError(fmt::format("{}: malformed PLY header: {}", where, msg)); };
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw fail("missing 'ply' magic");
  Header h;
  bool in_vertex = false, seen_vertex = false, seen_format = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
    if (kw == "end_header") {
      if (!seen_format) throw fail("missing format line");
      if (!seen_vertex) throw fail("no vertex element");
      return h;
    }
    if (kw == "format") {
      std::string fmt_name, version;
      ls >> fmt_name >> version;
      if (fmt_name != "binary_little_endian") throw fail(fmt::format("unsupported format '{}'", fmt_name));
      seen_format = true;
    } else if (kw == "element") {
      std::string name;
      long long count = -1;
      ls >> name >> count;
      if (ls.fail() || count < 0) throw fail(fmt::format("bad element line '{}'", line));
      if (name == "vertex") {
        if (seen_vertex) throw fail("duplicate vertex element");
        if (!h.props.empty() || seen_vertex) throw fail("vertex must be the first element");
        h.vertex_count = static_cast<std::size_t>(count);
        in_vertex = seen_vertex = true;
      } else {
        if (!seen_vertex) throw fail(fmt::format("element '{}' precedes vertex", name));
        in_vertex = false;  // trailing elements are ignored
      }
    } else if (kw == "property") {
      if (!in_vertex) continue;
      std::string type, name;
      ls >> type;
      if (type == "list") throw fail("list properties are not supported on vertices");
      ls >> name;
      auto t = parse_type(type);
      if (!t || name.empty()) throw fail(fmt::format("bad property line '{}'", line));
      h.props.push_back({name, *t, h.stride});
      h.stride += type_size(*t);
    } else {
      throw fail(fmt::format("unexpected keyword '{}'", kw));
    }
  }
  throw fail("missing end_header");
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

SceneModel load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open scene '{}'", path.string()));
  const Header h = parse_header(in, path.string());

  std::map<std::string, const Property*> by_name;
  for (const auto& p : h.props) by_name[p.name] = &p;
  auto require = [&](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError(fmt::format("{}: missing vertex field '{}'", path.string(), name));
    return it->second;
  };
  const Property* pos[3] = {require("x"), require("y"), require("z")};
  const Property* dc[3] = {require("f_dc_0"), require("f_dc_1"), require("f_dc_2")};
  const Property* opac = require("opacity");
  const Property* scl[3] = {require("scale_0"), require("scale_1"), require("scale_2")};
  const Property* rot[4] = {require("rot_0"), require("rot_1"), require("rot_2"), require("rot_3")};
  std::vector<const Property*> rest;
  if (by_name.count("f_rest_0")) {
    for (int i = 0; i < 3 * (kShCoeffs - 1); ++i) rest.push_back(require(fmt::format("f_rest_{}", i)));
  }

  std::vector<std::uint8_t> data(h.vertex_count * h.stride);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (static_cast<std::size_t>(in.gcount()) != data.size()) {
    throw IoError(fmt::format("{}: truncated vertex data ({} of {} bytes)", path.string(), in.gcount(), data.size()));
  }

  SceneModel scene;
  scene.gaussians.reserve(h.vertex_count);
  for (std::size_t v = 0; v < h.vertex_count; ++v) {
    const std::uint8_t* rec = data.data() + v * h.stride;
    auto get = [&](const Property* p) { return read_as_double(rec + p->offset, p->type); };
    Gaussian g;
    bool ok = true;
    auto check = [&](double x) {
      ok = ok && std::isfinite(x);
      return x;
    };
    for (int a = 0; a < 3; ++a) g.position[a] = check(get(pos[a]));
    for (int a = 0; a < 3; ++a) g.scale[a] = std::exp(check(get(scl[a])));
    g.opacity = sigmoid(check(get(opac)));
    const double q[4] = {check(get(rot[0])), check(get(rot[1])), check(get(rot[2])), check(get(rot[3]))};
    g.sh.fill(Vec3::Zero());
    for (int c = 0; c < 3; ++c) g.sh[0][c] = check(get(dc[c]));
    if (!rest.empty()) {
      for (int c = 0; c < 3; ++c)
        for (int k = 1; k < kShCoeffs; ++k) g.sh[k][c] = check(get(rest[c * (kShCoeffs - 1) + (k - 1)]));
    }
    const double qn = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    ok = ok && qn > 1e-12 && g.scale.allFinite() && (g.scale.array() > 0.0).all() && g.opacity > 0.0 && g.opacity < 1.0;
    if (!ok) {
      ++scene.culled;
      continue;
    }
    g.orientation = Rotation::from_quaternion(q[0], q[1], q[2], q[3]);
    scene.gaussians.push_back(g);
  }
  if (scene.gaussians.empty() || 2 * scene.culled > h.vertex_count) {
    throw IoError(fmt::format("{}: {} of {} vertices failed the validity filter", path.string(), scene.culled,
                              h.vertex_count));
  }
  scene.source = path.string();
  scene.bounds = compute_bounds(scene.gaussians);
  return scene;
}

void save_scene(const SceneModel& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write scene '{}'", path.string()));
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << scene.gaussians.size() << "\n";
  for (const char* n : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) out << "property float " << n << "\n";
  for (int i = 0; i < 3 * (kShCoeffs - 1); ++i) out << "property float f_rest_" << i << "\n";
  out << "property float opacity\n";
  for (const char* n : {"scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) out << "property float " << n << "\n";
  out << "end_header\n";

  bytes::Writer w;
  for (const auto& g : scene.gaussians) {
    auto f = [&](double x) { w.put(static_cast<float>(x)); };
    for (int a = 0; a < 3; ++a) f(g.position[a]);
    for (int a = 0; a < 3; ++a) f(0.0);
    for (int c = 0; c < 3; ++c) f(g.sh[0][c]);
    for (int c = 0; c < 3; ++c)
      for (int k = 1; k < kShCoeffs; ++k) f(g.sh[k][c]);
    f(std::log(g.opacity / (1.0 - g.opacity)));
    for (int a = 0; a < 3; ++a) f(std::log(g.scale[a]));
    for (double q : g.orientation.wxyz()) f(q);
  }
  const auto& buf = w.data();
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError(fmt::format("short write to '{}'", path.string()));
}

}  // namespace vil::splat
