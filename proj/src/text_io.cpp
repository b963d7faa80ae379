#include "spseg/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace spseg {

namespace {

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r' || line[i] == ',')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' && line[i] != ',') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <class T>
bool parse(std::string_view tok, T& out) {
  const char* b = tok.data();
  const char* e = b + tok.size();
  if (b != e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

}  // namespace

PointCloud read_xyzrgb_txt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  int width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = tokens(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    const int w = static_cast<int>(tok.size());
    if (w != 3 && w != 6) throw ParseError(path, line_no, 0, "expected 3 or 6 values, got " + std::to_string(w));
    if (width == 0) width = w;
    if (w != width) throw ParseError(path, line_no, 0, "inconsistent column count");
    double v[6];
    for (int k = 0; k < w; ++k)
      if (!parse(tok[static_cast<std::size_t>(k)], v[k]))
        throw ParseError(path, line_no, 0, "non-numeric token '" + std::string(tok[static_cast<std::size_t>(k)]) + "'");
    cloud.positions.emplace_back(v[0], v[1], v[2]);
    if (w == 6) cloud.colors.emplace_back(v[3] / 255.0, v[4] / 255.0, v[5] / 255.0);
  }
  if (cloud.positions.empty()) throw ParseError(path, line_no, 0, "no points");
  return cloud;
}

std::vector<int> read_int_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<int> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = tokens(line);
    if (tok.empty()) continue;
    int v = 0;
    if (tok.size() != 1 || !parse(tok[0], v)) throw ParseError(path, line_no, 0, "expected one integer");
    values.push_back(v);
  }
  return values;
}

void write_int_sidecar(const std::string& path, const std::vector<int>& values) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  std::string buf;
  for (int v : values) {
    buf += std::to_string(v);
    buf += '\n';
  }
  out << buf;
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace spseg
