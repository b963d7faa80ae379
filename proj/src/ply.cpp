#include "spseg/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace spseg {

static_assert(std::endian::native == std::endian::little, "binary PLY io assumes a little-endian host");

ParseError::ParseError(const std::string& path, std::size_t line, std::size_t offset, const std::string& what)
    : std::runtime_error(path + (line > 0 ? ":" + std::to_string(line) : " @byte " + std::to_string(offset)) + ": " +
                         what),
      line_(line),
      offset_(offset) {}

namespace {

enum class PType { I8, U8, I16, U16, I32, U32, F32, F64 };

bool parse_type(const std::string& s, PType& t) {
  static const std::pair<const char*, PType> names[] = {
      {"char", PType::I8},   {"int8", PType::I8},     {"uchar", PType::U8},   {"uint8", PType::U8},
      {"short", PType::I16}, {"int16", PType::I16},   {"ushort", PType::U16}, {"uint16", PType::U16},
      {"int", PType::I32},   {"int32", PType::I32},   {"uint", PType::U32},   {"uint32", PType::U32},
      {"float", PType::F32}, {"float32", PType::F32}, {"double", PType::F64}, {"float64", PType::F64}};
  for (const auto& [name, type] : names)
    if (s == name) {
      t = type;
      return true;
    }
  return false;
}

std::size_t type_size(PType t) {
  switch (t) {
    case PType::I8:
    case PType::U8: return 1;
    case PType::I16:
    case PType::U16: return 2;
    case PType::I32:
    case PType::U32:
    case PType::F32: return 4;
    case PType::F64: return 8;
  }
  return 0;
}

bool is_integer(PType t) { return t != PType::F32 && t != PType::F64; }

struct Property {
  std::string name;
  PType type = PType::F64;
  bool list = false;
  PType count_type = PType::U8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

template <class T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

double decode(PType t, const char* p) {
  switch (t) {
    case PType::I8: return load<std::int8_t>(p);
    case PType::U8: return load<std::uint8_t>(p);
    case PType::I16: return load<std::int16_t>(p);
    case PType::U16: return load<std::uint16_t>(p);
    case PType::I32: return load<std::int32_t>(p);
    case PType::U32: return load<std::uint32_t>(p);
    case PType::F32: return load<float>(p);
    case PType::F64: return load<double>(p);
  }
  return 0.0;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  return {std::istream_iterator<std::string>(ss), std::istream_iterator<std::string>()};
}

bool parse_number(std::string_view tok, double& out) {
  const char* b = tok.data();
  const char* e = b + tok.size();
  if (b != e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

struct VertexSink {
  int x = -1, y = -1, z = -1, r = -1, g = -1, b = -1, label = -1;
  PType color_type = PType::U8;
};

}  // namespace

PointCloud read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t pos = 0, line_no = 0;
  auto next_line = [&](std::string& line) {
    if (pos >= data.size()) return false;
    std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) end = data.size();
    line.assign(data, pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = std::min(data.size(), end + 1);
    ++line_no;
    return true;
  };

  std::string line;
  if (!next_line(line) || line != "ply") throw ParseError(path, 1, 0, "missing 'ply' magic");
  bool ascii = false, have_format = false, ended = false;
  std::vector<Element> elements;
  while (next_line(line)) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") {
      ended = true;
      break;
    }
    if (tok[0] == "format") {
      if (tok.size() != 3) throw ParseError(path, line_no, 0, "malformed format line");
      if (tok[1] == "ascii") ascii = true;
      else if (tok[1] == "binary_little_endian") ascii = false;
      else throw ParseError(path, line_no, 0, "unsupported format '" + tok[1] + "'");
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError(path, line_no, 0, "malformed element line");
      Element el;
      el.name = tok[1];
      const auto [p, ec] = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), el.count);
      if (ec != std::errc() || p != tok[2].data() + tok[2].size())
        throw ParseError(path, line_no, 0, "bad element count '" + tok[2] + "'");
      elements.push_back(std::move(el));
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError(path, line_no, 0, "property before any element");
      Property prop;
      if (tok.size() == 5 && tok[1] == "list") {
        prop.list = true;
        if (!parse_type(tok[2], prop.count_type) || !is_integer(prop.count_type) || !parse_type(tok[3], prop.type))
          throw ParseError(path, line_no, 0, "unsupported list property types");
        prop.name = tok[4];
      } else if (tok.size() == 3) {
        if (!parse_type(tok[1], prop.type)) throw ParseError(path, line_no, 0, "unsupported property type '" + tok[1] + "'");
        prop.name = tok[2];
      } else {
        throw ParseError(path, line_no, 0, "malformed property line");
      }
      elements.back().props.push_back(std::move(prop));
    } else {
      throw ParseError(path, line_no, 0, "unexpected header keyword '" + tok[0] + "'");
    }
  }
  if (!ended) throw ParseError(path, line_no, 0, "header has no end_header");
  if (!have_format) throw ParseError(path, line_no, 0, "header has no format line");

  const auto vertex_it = std::find_if(elements.begin(), elements.end(), [](const Element& e) { return e.name == "vertex"; });
  if (vertex_it == elements.end()) throw ParseError(path, line_no, 0, "no vertex element");

  VertexSink sink;
  for (std::size_t i = 0; i < vertex_it->props.size(); ++i) {
    const Property& p = vertex_it->props[i];
    int* slot = nullptr;
    if (p.name == "x") slot = &sink.x;
    else if (p.name == "y") slot = &sink.y;
    else if (p.name == "z") slot = &sink.z;
    else if (p.name == "red") slot = &sink.r;
    else if (p.name == "green") slot = &sink.g;
    else if (p.name == "blue") slot = &sink.b;
    else if (p.name == "label") slot = &sink.label;
    if (!slot) continue;
    if (p.list) throw ParseError(path, line_no, 0, "vertex property '" + p.name + "' must not be a list");
    if (slot == &sink.label && !is_integer(p.type)) throw ParseError(path, line_no, 0, "label property must be an integer type");
    *slot = static_cast<int>(i);
  }
  if (sink.x < 0 || sink.y < 0 || sink.z < 0) throw ParseError(path, line_no, 0, "vertex element lacks x, y or z");
  const bool colors = sink.r >= 0 && sink.g >= 0 && sink.b >= 0;
  if (colors) {
    const PType cr = vertex_it->props[static_cast<std::size_t>(sink.r)].type;
    if (vertex_it->props[static_cast<std::size_t>(sink.g)].type != cr ||
        vertex_it->props[static_cast<std::size_t>(sink.b)].type != cr)
      throw ParseError(path, line_no, 0, "colour channels must share one type");
    if (cr != PType::U8 && cr != PType::F32 && cr != PType::F64)
      throw ParseError(path, line_no, 0, "colour channels must be uchar or floating point");
    sink.color_type = cr;
  }

  PointCloud cloud;
  cloud.positions.resize(vertex_it->count);
  if (colors) cloud.colors.resize(vertex_it->count);
  if (sink.label >= 0) cloud.labels.resize(vertex_it->count);

  std::vector<double> row;
  auto store = [&](std::size_t i) {
    cloud.positions[i] = Vec3(row[static_cast<std::size_t>(sink.x)], row[static_cast<std::size_t>(sink.y)],
                              row[static_cast<std::size_t>(sink.z)]);
    if (colors) {
      const double scale = sink.color_type == PType::U8 ? 1.0 / 255.0 : 1.0;
      cloud.colors[i] = Vec3(row[static_cast<std::size_t>(sink.r)], row[static_cast<std::size_t>(sink.g)],
                             row[static_cast<std::size_t>(sink.b)]) * scale;
    }
    if (sink.label >= 0) cloud.labels[i] = static_cast<int>(row[static_cast<std::size_t>(sink.label)]);
  };

  for (const Element& el : elements) {
    const bool is_vertex = &el == &*vertex_it;
    for (std::size_t i = 0; i < el.count; ++i) {
      row.assign(el.props.size(), 0.0);
      if (ascii) {
        if (!next_line(line)) throw ParseError(path, line_no + 1, 0, "unexpected end of file in element '" + el.name + "'");
        const auto tok = split_ws(line);
        std::size_t t = 0;
        for (std::size_t k = 0; k < el.props.size(); ++k) {
          const Property& p = el.props[k];
          auto take = [&]() {
            double v = 0;
            if (t >= tok.size()) throw ParseError(path, line_no, 0, "too few values");
            if (!parse_number(tok[t], v)) throw ParseError(path, line_no, 0, "bad number '" + tok[t] + "'");
            ++t;
            return v;
          };
          if (p.list) {
            const double n = take();
            if (n < 0 || n != std::floor(n)) throw ParseError(path, line_no, 0, "bad list length");
            for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) take();
          } else {
            row[k] = take();
          }
        }
        if (t != tok.size()) throw ParseError(path, line_no, 0, "too many values");
      } else {
        for (std::size_t k = 0; k < el.props.size(); ++k) {
          const Property& p = el.props[k];
          auto need = [&](std::size_t bytes) {
            if (data.size() - pos < bytes) throw ParseError(path, 0, pos, "truncated binary body in element '" + el.name + "'");
          };
          if (p.list) {
            need(type_size(p.count_type));
            const double n = decode(p.count_type, data.data() + pos);
            pos += type_size(p.count_type);
            if (n < 0) throw ParseError(path, 0, pos, "negative list length");
            const std::size_t bytes = static_cast<std::size_t>(n) * type_size(p.type);
            need(bytes);
            pos += bytes;
          } else {
            need(type_size(p.type));
            row[k] = decode(p.type, data.data() + pos);
            pos += type_size(p.type);
          }
        }
      }
      if (is_vertex) store(i);
    }
  }
  return cloud;
}

void write_ply(const std::string& path, const PointCloud& cloud, PlyFormat format) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const bool ascii = format == PlyFormat::Ascii;
  out << "ply\nformat " << (ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.has_labels()) out << "property int label\n";
  out << "end_header\n";

  auto to_u8 = [](double c) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
  };
  char buf[32];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (ascii) {
      for (int a = 0; a < 3; ++a) {
        const auto res = std::to_chars(buf, buf + sizeof buf, cloud.positions[i][a]);
        if (a) out << ' ';
        out.write(buf, res.ptr - buf);
      }
      if (cloud.has_colors())
        for (int a = 0; a < 3; ++a) out << ' ' << static_cast<int>(to_u8(cloud.colors[i][a]));
      if (cloud.has_labels()) out << ' ' << cloud.labels[i];
      out << '\n';
    } else {
      for (int a = 0; a < 3; ++a) {
        const double v = cloud.positions[i][a];
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
      if (cloud.has_colors())
        for (int a = 0; a < 3; ++a) {
          const std::uint8_t c = to_u8(cloud.colors[i][a]);
          out.write(reinterpret_cast<const char*>(&c), 1);
        }
      if (cloud.has_labels()) {
        const std::int32_t l = cloud.labels[i];
        out.write(reinterpret_cast<const char*>(&l), sizeof l);
      }
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace spseg
