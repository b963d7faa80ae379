#include "spseg/dataset.hpp"

#include "spseg/io.hpp"
#include "spseg/parallel.hpp"

#include <fstream>
#include <sstream>

namespace spseg {

namespace fs = std::filesystem;

std::vector<SceneRecord> read_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<SceneRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    SceneRecord r;
    if (!(ss >> r.name)) continue;
    if (r.name.front() == '#') continue;
    std::string extra;
    if (!(ss >> r.split) || (ss >> extra)) throw ParseError(path.string(), line_no, 0, "expected 'name split'");
    if (r.split != "train" && r.split != "test") throw ParseError(path.string(), line_no, 0, "split must be train or test");
    r.cloud = dir / (r.name + ".ply");
    if (!fs::exists(r.cloud)) r.cloud = dir / (r.name + ".txt");
    if (!fs::exists(r.cloud)) throw std::runtime_error("no cloud file for scene '" + r.name + "' in " + dir.string());
    if (fs::exists(dir / (r.name + ".sp.txt"))) r.partition = dir / (r.name + ".sp.txt");
    if (fs::exists(dir / (r.name + ".labels.txt"))) r.labels = dir / (r.name + ".labels.txt");
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const fs::path& dir, const std::vector<SceneRecord>& records) {
  std::ofstream out(dir / kManifestName, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  for (const auto& r : records) out << r.name << ' ' << r.split << '\n';
}

Scene load_scene(const SceneRecord& record) {
  Scene s;
  s.record = record;
  s.cloud = record.cloud.extension() == ".txt" ? read_xyzrgb_txt(record.cloud.string()) : read_ply(record.cloud.string());
  s.cloud.id = record.name;
  if (!record.labels.empty()) {
    s.cloud.labels = read_int_sidecar(record.labels.string());
    if (s.cloud.labels.size() != s.cloud.size())
      throw std::runtime_error(record.labels.string() + ": " + std::to_string(s.cloud.labels.size()) +
                               " labels for " + std::to_string(s.cloud.size()) + " points");
  }
  if (!record.partition.empty()) {
    const auto ids = read_int_sidecar(record.partition.string());
    if (ids.size() != s.cloud.size())
      throw std::runtime_error(record.partition.string() + ": " + std::to_string(ids.size()) + " entries for " +
                               std::to_string(s.cloud.size()) + " points");
    s.partition = make_partition(ids);
  }
  return s;
}

std::vector<Scene> load_dataset(const fs::path& dir, const std::string& split) {
  std::vector<SceneRecord> records;
  for (auto& r : read_manifest(dir))
    if (split.empty() || r.split == split) records.push_back(std::move(r));
  std::vector<Scene> out(records.size());
  parallel_for(records.size(), [&](std::size_t i) { out[i] = load_scene(records[i]); });
  return out;
}

SceneRecord save_scene(const fs::path& dir, const std::string& name, const std::string& split, const PointCloud& cloud,
                       const Partition* partition) {
  SceneRecord r;
  r.name = name;
  r.split = split;
  r.cloud = dir / (name + ".ply");
  PointCloud bare = cloud;
  bare.labels.clear();
  write_ply(r.cloud.string(), bare);
  if (cloud.has_labels()) {
    r.labels = dir / (name + ".labels.txt");
    write_int_sidecar(r.labels.string(), cloud.labels);
  }
  if (partition) {
    if (partition->size() != cloud.size()) throw std::invalid_argument("partition length does not match the cloud");
    r.partition = dir / (name + ".sp.txt");
    write_int_sidecar(r.partition.string(), partition->assignment);
  }
  return r;
}

PreprocessResult preprocess(const PointCloud& cloud, double voxel, const SuperpointParams& params, double grid) {
  PreprocessResult out;
  if (grid > 0.0 && grid < voxel) out.cloud = voxel_downsample(voxel_downsample(cloud, grid).cloud, voxel).cloud;
  else out.cloud = voxel_downsample(cloud, voxel).cloud;
  out.cloud.id = cloud.id;
  out.initial = initial_superpoints(out.cloud, params);
  return out;
}

}  // namespace spseg
