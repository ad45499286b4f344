#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sgwpcqa/error.hpp"
#include "sgwpcqa/pointcloud.hpp"

namespace sgwpcqa {

enum class PlyEncoding { Ascii, BinaryLittleEndian };

namespace ply_detail {

enum class ScalarType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline std::optional<ScalarType> parse_scalar_type(std::string_view name) {
  if (name == "char" || name == "int8") return ScalarType::Int8;
  if (name == "uchar" || name == "uint8") return ScalarType::UInt8;
  if (name == "short" || name == "int16") return ScalarType::Int16;
  if (name == "ushort" || name == "uint16") return ScalarType::UInt16;
  if (name == "int" || name == "int32") return ScalarType::Int32;
  if (name == "uint" || name == "uint32") return ScalarType::UInt32;
  if (name == "float" || name == "float32") return ScalarType::Float32;
  if (name == "double" || name == "float64") return ScalarType::Float64;
  return std::nullopt;
}

inline std::size_t scalar_size(ScalarType t) {
  switch (t) {
    case ScalarType::Int8:
    case ScalarType::UInt8: return 1;
    case ScalarType::Int16:
    case ScalarType::UInt16: return 2;
    case ScalarType::Int32:
    case ScalarType::UInt32:
    case ScalarType::Float32: return 4;
    case ScalarType::Float64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  ScalarType type{};
  bool is_list = false;
  ScalarType count_type{};
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

struct Header {
  PlyEncoding encoding{};
  std::vector<Element> elements;
  std::size_t body_offset = 0;
};

template <typename T>
T load_le(const unsigned char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

inline double read_binary_scalar(const unsigned char* p, ScalarType t) {
  switch (t) {
    case ScalarType::Int8: return static_cast<double>(load_le<std::int8_t>(p));
    case ScalarType::UInt8: return static_cast<double>(load_le<std::uint8_t>(p));
    case ScalarType::Int16: return static_cast<double>(load_le<std::int16_t>(p));
    case ScalarType::UInt16: return static_cast<double>(load_le<std::uint16_t>(p));
    case ScalarType::Int32: return static_cast<double>(load_le<std::int32_t>(p));
    case ScalarType::UInt32: return static_cast<double>(load_le<std::uint32_t>(p));
    case ScalarType::Float32: return static_cast<double>(load_le<float>(p));
    case ScalarType::Float64: return load_le<double>(p);
  }
  return 0.0;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline Header parse_header(std::string_view data) {
  Header header;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::optional<std::string_view> {
    if (pos >= data.size()) return std::nullopt;
    std::size_t end = data.find('\n', pos);
    if (end == std::string_view::npos) end = data.size();
    std::string_view line = data.substr(pos, end - pos);
    pos = end + 1;
    return line;
  };

  auto magic = next_line();
  if (!magic || split_ws(*magic) != std::vector<std::string_view>{"ply"})
    throw Error(ErrorCode::MalformedHeader, "missing 'ply' magic line");

  bool have_format = false;
  bool have_end = false;
  while (auto line = next_line()) {
    auto tok = split_ws(*line);
    if (tok.empty()) continue;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") {
      have_end = true;
      break;
    }
    if (tok[0] == "format") {
      if (tok.size() != 3) throw Error(ErrorCode::MalformedHeader, "bad format line");
      if (tok[2] != "1.0") throw Error(ErrorCode::UnsupportedFormat, "PLY version " + std::string(tok[2]));
      if (tok[1] == "ascii") header.encoding = PlyEncoding::Ascii;
      else if (tok[1] == "binary_little_endian") header.encoding = PlyEncoding::BinaryLittleEndian;
      else throw Error(ErrorCode::UnsupportedFormat, "encoding " + std::string(tok[1]));
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw Error(ErrorCode::MalformedHeader, "bad element line");
      Element el;
      el.name = std::string(tok[1]);
      auto [ptr, ec] = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), el.count);
      if (ec != std::errc() || ptr != tok[2].data() + tok[2].size())
        throw Error(ErrorCode::MalformedHeader, "bad element count '" + std::string(tok[2]) + "'");
      header.elements.push_back(std::move(el));
    } else if (tok[0] == "property") {
      if (header.elements.empty()) throw Error(ErrorCode::MalformedHeader, "property before any element");
      Property prop;
      if (tok.size() == 5 && tok[1] == "list") {
        auto ct = parse_scalar_type(tok[2]);
        auto vt = parse_scalar_type(tok[3]);
        if (!ct || !vt) throw Error(ErrorCode::UnsupportedFormat, "unknown list property type");
        prop.is_list = true;
        prop.count_type = *ct;
        prop.type = *vt;
        prop.name = std::string(tok[4]);
      } else if (tok.size() == 3) {
        auto t = parse_scalar_type(tok[1]);
        if (!t) throw Error(ErrorCode::UnsupportedFormat, "unknown property type '" + std::string(tok[1]) + "'");
        prop.type = *t;
        prop.name = std::string(tok[2]);
      } else {
        throw Error(ErrorCode::MalformedHeader, "bad property line");
      }
      header.elements.back().properties.push_back(std::move(prop));
    } else {
      throw Error(ErrorCode::MalformedHeader, "unexpected header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!have_format) throw Error(ErrorCode::MalformedHeader, "missing format line");
  if (!have_end) throw Error(ErrorCode::MalformedHeader, "missing end_header");
  header.body_offset = std::min(pos, data.size());
  return header;
}

struct VertexLayout {
  int x = -1, y = -1, z = -1, r = -1, g = -1, b = -1;
};

inline VertexLayout locate_vertex_properties(const Element& el) {
  VertexLayout lay;
  for (std::size_t i = 0; i < el.properties.size(); ++i) {
    const auto& p = el.properties[i];
    const int idx = static_cast<int>(i);
    auto scalar_only = [&] {
      if (p.is_list) throw Error(ErrorCode::UnsupportedFormat, "list-typed vertex property '" + p.name + "'");
    };
    if (p.name == "x") scalar_only(), lay.x = idx;
    else if (p.name == "y") scalar_only(), lay.y = idx;
    else if (p.name == "z") scalar_only(), lay.z = idx;
    else if (p.name == "red" || p.name == "green" || p.name == "blue") {
      scalar_only();
      if (p.type != ScalarType::UInt8)
        throw Error(ErrorCode::UnsupportedFormat, "color property '" + p.name + "' must be uchar");
      (p.name == "red" ? lay.r : p.name == "green" ? lay.g : lay.b) = idx;
    }
  }
  if (lay.x < 0 || lay.y < 0 || lay.z < 0)
    throw Error(ErrorCode::MalformedHeader, "vertex element lacks x/y/z properties");
  return lay;
}

class AsciiCursor {
 public:
  explicit AsciiCursor(std::string_view body) : body_(body) {}

  bool next(double& out) {
    skip_ws();
    if (pos_ >= body_.size()) return false;
    const char* first = body_.data() + pos_;
    const char* last = body_.data() + body_.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc()) throw Error(ErrorCode::CorruptFile, "unparseable ASCII value");
    pos_ = static_cast<std::size_t>(ptr - body_.data());
    return true;
  }

 private:
  void skip_ws() {
    while (pos_ < body_.size() &&
           (body_[pos_] == ' ' || body_[pos_] == '\t' || body_[pos_] == '\n' || body_[pos_] == '\r'))
      ++pos_;
  }
  std::string_view body_;
  std::size_t pos_ = 0;
};

inline PointCloud parse_body(const Header& header, std::string_view data) {
  const Element* vertex = nullptr;
  for (const auto& el : header.elements) {
    if (el.name == "vertex") vertex = &el;
  }
  if (!vertex) throw Error(ErrorCode::MalformedHeader, "no vertex element");
  const VertexLayout lay = locate_vertex_properties(*vertex);
  const bool has_rgb = lay.r >= 0 && lay.g >= 0 && lay.b >= 0;

  PointCloud pc;
  pc.positions.resize(vertex->count);
  if (has_rgb) pc.rgb.emplace(vertex->count);

  std::vector<double> row;
  auto store_vertex = [&](std::size_t i) {
    pc.positions[i] = {row[lay.x], row[lay.y], row[lay.z]};
    if (has_rgb) {
      (*pc.rgb)[i] = {static_cast<std::uint8_t>(row[lay.r]), static_cast<std::uint8_t>(row[lay.g]),
                      static_cast<std::uint8_t>(row[lay.b])};
    }
  };
  auto truncated = [](const Element& el, std::size_t i) {
    return Error(ErrorCode::TruncatedBody, "element '" + el.name + "' declares " + std::to_string(el.count) +
                                               " rows, body ends at row " + std::to_string(i));
  };

  const std::string_view body = data.substr(header.body_offset);
  if (header.encoding == PlyEncoding::Ascii) {
    AsciiCursor cur(body);
    for (const auto& el : header.elements) {
      const bool is_vertex = &el == vertex;
      for (std::size_t i = 0; i < el.count; ++i) {
        row.clear();
        for (const auto& p : el.properties) {
          double v;
          if (!cur.next(v)) throw truncated(el, i);
          if (p.is_list) {
            for (std::size_t k = 0, n = static_cast<std::size_t>(v); k < n; ++k) {
              double ignored;
              if (!cur.next(ignored)) throw truncated(el, i);
            }
            row.push_back(0.0);
          } else {
            // Round through the declared width so ASCII and binary agree.
            row.push_back(p.type == ScalarType::Float32 ? static_cast<double>(static_cast<float>(v)) : v);
          }
        }
        if (is_vertex) store_vertex(i);
      }
    }
  } else {
    const auto* bytes = reinterpret_cast<const unsigned char*>(body.data());
    std::size_t off = 0;
    const std::size_t size = body.size();
    for (const auto& el : header.elements) {
      const bool is_vertex = &el == vertex;
      for (std::size_t i = 0; i < el.count; ++i) {
        row.clear();
        for (const auto& p : el.properties) {
          if (p.is_list) {
            const std::size_t cs = scalar_size(p.count_type);
            if (off + cs > size) throw truncated(el, i);
            const auto n = static_cast<std::size_t>(read_binary_scalar(bytes + off, p.count_type));
            off += cs;
            const std::size_t skip = n * scalar_size(p.type);
            if (off + skip > size) throw truncated(el, i);
            off += skip;
            row.push_back(0.0);
          } else {
            const std::size_t s = scalar_size(p.type);
            if (off + s > size) throw truncated(el, i);
            row.push_back(read_binary_scalar(bytes + off, p.type));
            off += s;
          }
        }
        if (is_vertex) store_vertex(i);
      }
    }
  }
  pc.validate();
  return pc;
}

}  // namespace ply_detail

/// Parses a PLY 1.0 document held in memory.
inline PointCloud parse_ply(std::string_view data) {
  const auto header = ply_detail::parse_header(data);
  return ply_detail::parse_body(header, data);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

inline PointCloud load_ply(const std::filesystem::path& path) {
  const std::string data = read_file_bytes(path);
  try {
    return parse_ply(data);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + std::string(e.what()));
  }
}

/// Debug/fixture writer: x,y,z as double and optional red,green,blue uchar.
inline void save_ply(const std::filesystem::path& path, const PointCloud& pc,
                     PlyEncoding encoding = PlyEncoding::BinaryLittleEndian) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  const bool rgb = pc.rgb.has_value();
  out << "ply\nformat " << (encoding == PlyEncoding::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
      << "element vertex " << pc.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n";
  if (rgb) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  if (encoding == PlyEncoding::Ascii) {
    char buf[64];
    for (std::size_t i = 0; i < pc.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        auto res = std::to_chars(buf, buf + sizeof(buf), pc.positions[i][a]);
        out.write(buf, res.ptr - buf);
        out << ' ';
      }
      if (rgb) {
        const auto& c = (*pc.rgb)[i];
        out << int(c[0]) << ' ' << int(c[1]) << ' ' << int(c[2]);
      }
      out << '\n';
    }
  } else {
    static_assert(std::endian::native == std::endian::little, "binary PLY writer assumes a little-endian host");
    for (std::size_t i = 0; i < pc.size(); ++i) {
      out.write(reinterpret_cast<const char*>(pc.positions[i].data()), 3 * sizeof(double));
      if (rgb) out.write(reinterpret_cast<const char*>((*pc.rgb)[i].data()), 3);
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

}  // namespace sgwpcqa
