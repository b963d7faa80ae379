#include "spseg/synth.hpp"

#include "spseg/parallel.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace spseg {

void SynthSpec::validate() const {
  if (scenes < 1) throw std::invalid_argument("synthetic spec needs at least one training scene");
  if (test_scenes < 0) throw std::invalid_argument("test_scenes must be non-negative");
  if (points < 100) throw std::invalid_argument("synthetic scenes need at least 100 points");
  for (int a = 0; a < 3; ++a)
    if (!(room_min[a] >= 2.0) || room_max[a] < room_min[a])
      throw std::invalid_argument("room extents must satisfy 2 <= min <= max");
  if (color_noise < 0.0 || position_noise < 0.0) throw std::invalid_argument("noise levels must be non-negative");
  if (clutter_fraction < 0.0 || clutter_fraction > 0.5) throw std::invalid_argument("clutter_fraction must be in [0, 0.5]");
}

namespace {

const Vec3 kFloorColor(0.50, 0.38, 0.26);
const Vec3 kCeilingColor(0.93, 0.93, 0.91);
const Vec3 kWallColor(0.80, 0.76, 0.66);
const Vec3 kCylinderColor(0.40, 0.45, 0.55);

constexpr double kPi = 3.14159265358979323846;

struct Box {
  double x0, y0, x1, y1, h;
};
struct Cylinder {
  double cx, cy, r;
};
struct Blob {
  Vec3 center;
  double r;
  Vec3 color;
};

enum class Kind { Rect, CylinderSide };

struct Surface {
  Kind kind = Kind::Rect;
  Vec3 origin, u, v;  // Rect: origin + a*u + b*v
  int index = 0;      // cylinder / blob index
  int label = 0;
  bool floor = false;
  double area = 0.0;
};

Surface rect(const Vec3& o, const Vec3& u, const Vec3& v, int label, bool floor = false) {
  Surface s;
  s.origin = o;
  s.u = u;
  s.v = v;
  s.label = label;
  s.floor = floor;
  s.area = u.cross(v).norm();
  return s;
}

bool overlaps(const Box& a, double x0, double y0, double x1, double y1, double gap) {
  return !(x1 + gap <= a.x0 || a.x1 + gap <= x0 || y1 + gap <= a.y0 || a.y1 + gap <= y0);
}

SynthScene make_scene(const SynthSpec& spec, std::uint64_t seed, bool force_cylinder) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const double w = uni(spec.room_min.x(), spec.room_max.x());
  const double d = uni(spec.room_min.y(), spec.room_max.y());
  const double h = uni(spec.room_min.z(), spec.room_max.z());

  std::vector<Box> boxes;
  const int box_target = pick(1, 3);
  for (int attempt = 0; attempt < 200 && static_cast<int>(boxes.size()) < box_target; ++attempt) {
    const double bw = uni(0.5, 1.2), bd = uni(0.5, 1.2), bh = uni(0.4, 1.0);
    const double x0 = uni(0.3, w - 0.3 - bw), y0 = uni(0.3, d - 0.3 - bd);
    const bool clash = std::any_of(boxes.begin(), boxes.end(),
                                   [&](const Box& b) { return overlaps(b, x0, y0, x0 + bw, y0 + bd, 0.3); });
    if (!clash) boxes.push_back({x0, y0, x0 + bw, y0 + bd, bh});
  }
  if (boxes.empty()) boxes.push_back({0.5, 0.5, 1.2, 1.2, 0.6});

  std::vector<Cylinder> cylinders;
  const int cyl_target = force_cylinder ? pick(1, 2) : pick(0, 2);
  for (int attempt = 0; attempt < 200 && static_cast<int>(cylinders.size()) < cyl_target; ++attempt) {
    const double r = uni(0.15, 0.3);
    const double cx = uni(0.4 + r, w - 0.4 - r), cy = uni(0.4 + r, d - 0.4 - r);
    const bool clash_box = std::any_of(boxes.begin(), boxes.end(), [&](const Box& b) {
      return overlaps(b, cx - r, cy - r, cx + r, cy + r, 0.3);
    });
    const bool clash_cyl = std::any_of(cylinders.begin(), cylinders.end(), [&](const Cylinder& c) {
      return std::hypot(c.cx - cx, c.cy - cy) < c.r + r + 0.4;
    });
    if (!clash_box && !clash_cyl) cylinders.push_back({cx, cy, r});
  }

  std::vector<Blob> blobs;
  if (spec.clutter_fraction > 0.0) {
    const int n = pick(1, 3);
    for (int i = 0; i < n; ++i) {
      const double r = uni(0.08, 0.18);
      blobs.push_back({Vec3(uni(0.3, w - 0.3), uni(0.3, d - 0.3), r), r, Vec3(uni(0, 1), uni(0, 1), uni(0, 1))});
    }
  }

  std::vector<Surface> surfaces;
  surfaces.push_back(rect(Vec3(0, 0, 0), Vec3(w, 0, 0), Vec3(0, d, 0), kFloor, true));
  surfaces.push_back(rect(Vec3(0, 0, h), Vec3(w, 0, 0), Vec3(0, d, 0), kCeiling));
  surfaces.push_back(rect(Vec3(0, 0, 0), Vec3(w, 0, 0), Vec3(0, 0, h), kWall));
  surfaces.push_back(rect(Vec3(0, d, 0), Vec3(w, 0, 0), Vec3(0, 0, h), kWall));
  surfaces.push_back(rect(Vec3(0, 0, 0), Vec3(0, d, 0), Vec3(0, 0, h), kWall));
  surfaces.push_back(rect(Vec3(w, 0, 0), Vec3(0, d, 0), Vec3(0, 0, h), kWall));
  for (const Box& b : boxes) {
    const double bw = b.x1 - b.x0, bd = b.y1 - b.y0;
    surfaces.push_back(rect(Vec3(b.x0, b.y0, b.h), Vec3(bw, 0, 0), Vec3(0, bd, 0), kBox));
    surfaces.push_back(rect(Vec3(b.x0, b.y0, 0), Vec3(bw, 0, 0), Vec3(0, 0, b.h), kBox));
    surfaces.push_back(rect(Vec3(b.x0, b.y1, 0), Vec3(bw, 0, 0), Vec3(0, 0, b.h), kBox));
    surfaces.push_back(rect(Vec3(b.x0, b.y0, 0), Vec3(0, bd, 0), Vec3(0, 0, b.h), kBox));
    surfaces.push_back(rect(Vec3(b.x1, b.y0, 0), Vec3(0, bd, 0), Vec3(0, 0, b.h), kBox));
  }
  for (std::size_t i = 0; i < cylinders.size(); ++i) {
    Surface s;
    s.kind = Kind::CylinderSide;
    s.index = static_cast<int>(i);
    s.label = kCylinder;
    s.area = 2.0 * kPi * cylinders[i].r * h;
    surfaces.push_back(s);
  }

  std::vector<double> areas;
  for (const auto& s : surfaces) areas.push_back(s.area);
  std::discrete_distribution<std::size_t> which(areas.begin(), areas.end());
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto noise = [&](double sigma) { return sigma * std::clamp(gauss(rng), -4.0, 4.0); };

  auto covered = [&](double x, double y) {
    for (const Box& b : boxes)
      if (x >= b.x0 && x <= b.x1 && y >= b.y0 && y <= b.y1) return true;
    for (const Cylinder& c : cylinders)
      if (std::hypot(x - c.cx, y - c.cy) <= c.r) return true;
    return false;
  };

  const int clutter = blobs.empty() ? 0 : static_cast<int>(std::lround(spec.points * spec.clutter_fraction));
  const int structure = spec.points - clutter;

  SynthScene scene;
  PointCloud& cloud = scene.cloud;
  cloud.positions.reserve(static_cast<std::size_t>(spec.points));
  cloud.colors.reserve(static_cast<std::size_t>(spec.points));
  cloud.labels.reserve(static_cast<std::size_t>(spec.points));

  auto emit = [&](const Vec3& p, const Vec3& base, int label) {
    Vec3 q = p;
    for (int a = 0; a < 3; ++a) q[a] += noise(spec.position_noise);
    Vec3 c = base;
    for (int a = 0; a < 3; ++a) c[a] = std::clamp(c[a] + noise(spec.color_noise), 0.0, 1.0);
    cloud.positions.push_back(q);
    cloud.colors.push_back(c);
    cloud.labels.push_back(label);
  };

  static const Vec3 class_colors[kSynthClasses] = {kFloorColor, kCeilingColor, kWallColor, kWallColor, kCylinderColor};
  while (static_cast<int>(cloud.size()) < structure) {
    const Surface& s = surfaces[which(rng)];
    Vec3 p;
    if (s.kind == Kind::Rect) {
      p = s.origin + uni(0, 1) * s.u + uni(0, 1) * s.v;
      if (s.floor && covered(p.x(), p.y())) continue;
    } else {
      const Cylinder& c = cylinders[static_cast<std::size_t>(s.index)];
      const double t = uni(0, 2 * kPi);
      p = Vec3(c.cx + c.r * std::cos(t), c.cy + c.r * std::sin(t), uni(0, h));
    }
    emit(p, class_colors[s.label], s.label);
  }
  while (static_cast<int>(cloud.size()) < spec.points) {
    const Blob& b = blobs[static_cast<std::size_t>(pick(0, static_cast<int>(blobs.size()) - 1))];
    Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
    if (dir.norm() < 1e-9) continue;
    emit(b.center + b.r * dir.normalized(), b.color, kIgnoreLabel);
  }
  return scene;
}

}  // namespace

std::vector<SynthScene> gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  const std::size_t total = static_cast<std::size_t>(spec.scenes + spec.test_scenes);
  std::vector<SynthScene> out(total);
  parallel_for(total, [&](std::size_t i) {
    const bool test = static_cast<int>(i) >= spec.scenes;
    const int local = test ? static_cast<int>(i) - spec.scenes : static_cast<int>(i);
    out[i] = make_scene(spec, derive_seed(spec.seed, i), local == 0);
    char name[32];
    std::snprintf(name, sizeof name, "%s_%03d", test ? "test" : "scene", local);
    out[i].name = name;
    out[i].split = test ? "test" : "train";
    out[i].cloud.id = name;
  });
  return out;
}

}  // namespace spseg
