#pragma once

#include "spseg/geometry.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace spseg {

// Malformed input. `line` is 1-based for text content and 0 when the error
// sits in binary data, in which case `offset` is the byte offset in the file.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, std::size_t offset, const std::string& what);
  std::size_t line() const { return line_; }
  std::size_t offset() const { return offset_; }

 private:
  std::size_t line_, offset_;
};

enum class PlyFormat { Ascii, BinaryLittleEndian };

// Vertex element with x, y, z of any numeric type, optional red/green/blue
// (uchar scaled by 1/255, floating point taken as is) and optional integer
// label. Other properties and other elements are skipped.
PointCloud read_ply(const std::string& path);
// Writes double x/y/z, uchar red/green/blue when colours are present and
// int label when labels are present.
void write_ply(const std::string& path, const PointCloud& cloud, PlyFormat format = PlyFormat::BinaryLittleEndian);

// One "x y z r g b" line per point, colours in 0..255. Blank lines and lines
// starting with '#' are skipped. Lines of only "x y z" give a colourless cloud
// (the choice must be consistent across the file).
PointCloud read_xyzrgb_txt(const std::string& path);

// One integer per line.
std::vector<int> read_int_sidecar(const std::string& path);
void write_int_sidecar(const std::string& path, const std::vector<int>& values);

}  // namespace spseg
