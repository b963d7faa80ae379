#pragma once

#include "spseg/geometry.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace spseg {

enum SynthClass : int { kFloor = 0, kCeiling = 1, kWall = 2, kBox = 3, kCylinder = 4 };
inline constexpr int kSynthClasses = 5;
inline constexpr std::array<const char*, kSynthClasses> kSynthClassNames{"floor", "ceiling", "wall", "box", "cylinder"};

struct SynthSpec {
  std::uint64_t seed = 0;
  int scenes = 20;       // training split
  int test_scenes = 5;   // held-out split
  int points = 20000;    // per scene
  Vec3 room_min{3.5, 3.0, 2.5};
  Vec3 room_max{5.0, 4.5, 2.8};
  double color_noise = 0.03;
  double position_noise = 0.005;
  // Share of each scene's points placed on small clutter objects labelled -1.
  double clutter_fraction = 0.0;

  void validate() const;
};

struct SynthScene {
  std::string name;
  std::string split;  // "train" or "test"
  PointCloud cloud;
};

// Axis-aligned rooms: floor, ceiling, four walls, 1-3 boxes standing on the
// floor and 0-2 floor-to-ceiling cylinders. Boxes take the wall colour.
// Surfaces are sampled uniformly by area; floor area under boxes and
// cylinders is left empty. Position noise is Gaussian, truncated at 4 sigma.
std::vector<SynthScene> gen_synthetic(const SynthSpec& spec);

}  // namespace spseg
