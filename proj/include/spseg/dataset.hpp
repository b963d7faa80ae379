#pragma once

#include "spseg/geometry.hpp"
#include "spseg/superpoints.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spseg {

// A dataset directory holds scenes.txt with one "name split" line per scene
// and, per scene, <name>.ply (or <name>.txt as x y z r g b lines), optional
// <name>.labels.txt and optional <name>.sp.txt sidecars with one integer per
// point in cloud order.
inline constexpr const char* kManifestName = "scenes.txt";

struct SceneRecord {
  std::string name;
  std::string split;
  std::filesystem::path cloud;
  std::filesystem::path partition;  // empty when absent
  std::filesystem::path labels;     // empty when absent
};

std::vector<SceneRecord> read_manifest(const std::filesystem::path& dir);
void write_manifest(const std::filesystem::path& dir, const std::vector<SceneRecord>& records);

struct Scene {
  SceneRecord record;
  PointCloud cloud;
  std::optional<Partition> partition;
};

// Sidecars must match the cloud length; a mismatch throws std::runtime_error.
Scene load_scene(const SceneRecord& record);
// Empty split selects every scene.
std::vector<Scene> load_dataset(const std::filesystem::path& dir, const std::string& split = "");

// Writes <name>.ply (positions and colours), <name>.labels.txt when the cloud
// has labels and <name>.sp.txt when a partition is given. Returns the record.
SceneRecord save_scene(const std::filesystem::path& dir, const std::string& name, const std::string& split,
                       const PointCloud& cloud, const Partition* partition = nullptr);

struct PreprocessResult {
  PointCloud cloud;
  Partition initial;
};

// Grid filtering at `grid` (skipped unless 0 < grid < voxel), voxel
// downsampling, then the initial superpoints.
PreprocessResult preprocess(const PointCloud& cloud, double voxel, const SuperpointParams& params, double grid = 0.01);

}  // namespace spseg
