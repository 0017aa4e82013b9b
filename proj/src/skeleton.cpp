#include "geomrep/skeleton.hpp"

#include <algorithm>
#include <cmath>

namespace geomrep {

int KinematicTree::root() const {
  for (int j = 0; j < num_joints(); ++j) {
    if (parent[static_cast<std::size_t>(j)] == j) return j;
  }
  throw Error(ErrorKind::kConfig, "kinematic tree has no root");
}

void KinematicTree::validate() const {
  const int n = num_joints();
  if (n == 0) throw Error(ErrorKind::kConfig, "kinematic tree is empty");
  if (bone_lengths_mm.size() != parent.size()) {
    throw Error(ErrorKind::kConfig, "bone_lengths_mm must have one entry per joint");
  }
  int roots = 0;
  for (int j = 0; j < n; ++j) {
    const int p = parent[static_cast<std::size_t>(j)];
    if (p < 0 || p >= n) throw Error(ErrorKind::kConfig, "parent index out of range");
    if (p == j) {
      ++roots;
    } else if (!(bone_lengths_mm[static_cast<std::size_t>(j)] > 0.0)) {
      throw Error(ErrorKind::kConfig, "bone lengths must be positive");
    }
  }
  if (roots != 1) throw Error(ErrorKind::kConfig, "kinematic tree must have exactly one root");
  // Acyclic: walking up from any joint reaches the root within n steps.
  for (int j = 0; j < n; ++j) {
    int cur = j;
    int steps = 0;
    while (parent[static_cast<std::size_t>(cur)] != cur) {
      cur = parent[static_cast<std::size_t>(cur)];
      if (++steps > n) throw Error(ErrorKind::kConfig, "kinematic tree contains a cycle");
    }
  }
  if (static_cast<int>(limb_order.size()) != n - 1) {
    throw Error(ErrorKind::kConfig, "limb_order must list every non-root joint once");
  }
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  for (const auto& [child, par] : limb_order) {
    if (child < 0 || child >= n || parent[static_cast<std::size_t>(child)] != par ||
        child == par) {
      throw Error(ErrorKind::kConfig, "limb_order entry is not a (child, parent) edge");
    }
    if (seen[static_cast<std::size_t>(child)]++) {
      throw Error(ErrorKind::kConfig, "limb_order lists a joint twice");
    }
  }
}

std::vector<int> KinematicTree::topological_order() const {
  const int n = num_joints();
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> placed(static_cast<std::size_t>(n), 0);
  while (static_cast<int>(order.size()) < n) {
    bool progressed = false;
    for (int j = 0; j < n; ++j) {
      const int p = parent[static_cast<std::size_t>(j)];
      if (!placed[static_cast<std::size_t>(j)] && (p == j || placed[static_cast<std::size_t>(p)])) {
        placed[static_cast<std::size_t>(j)] = 1;
        order.push_back(j);
        progressed = true;
      }
    }
    if (!progressed) throw Error(ErrorKind::kConfig, "kinematic tree contains a cycle");
  }
  return order;
}

KinematicTree default_body_tree() {
  KinematicTree t;
  t.joint_names = {"pelvis",  "r_hip",      "r_knee",  "r_ankle", "l_hip",      "l_knee",
                   "l_ankle", "thorax",     "neck",    "head",    "l_shoulder", "l_elbow",
                   "l_wrist", "r_shoulder", "r_elbow", "r_wrist"};
  t.parent = {0, 0, 1, 2, 0, 4, 5, 0, 7, 8, 7, 10, 11, 7, 13, 14};
  t.bone_lengths_mm = {0.0,   130.0, 450.0, 440.0, 130.0, 450.0, 440.0, 480.0,
                       120.0, 170.0, 170.0, 280.0, 250.0, 170.0, 280.0, 250.0};
  for (int j = 1; j < 16; ++j) t.limb_order.emplace_back(j, t.parent[static_cast<std::size_t>(j)]);
  return t;
}

namespace {

double to_raster(double v, double scale) { return (v + 0.5) * scale - 0.5; }

}  // namespace

SkeletonMap rasterize_skeleton(const Keypoints2D& kp, const KinematicTree& tree,
                               const RasterParams& params) {
  if (!(params.line_width_px > 0.0)) {
    throw Error(ErrorKind::kConfig, "line width must be positive");
  }
  if (params.width < 8 || params.height < 8 || !(params.reference_size > 0.0)) {
    throw Error(ErrorKind::kConfig, "skeleton maps must be at least 8x8");
  }
  if (kp.size() != tree.num_joints()) {
    throw Error(ErrorKind::kShapeMismatch, "keypoint count does not match the tree");
  }
  const double sx = params.width / params.reference_size;
  const double sy = params.height / params.reference_size;
  const double radius = 0.5 * params.line_width_px * sx;
  const double r2 = radius * radius;

  SkeletonMap map(tree.num_limbs(), params.height, params.width, true);
  for (int m = 0; m < tree.num_limbs(); ++m) {
    const auto [child, par] = tree.limb_order[static_cast<std::size_t>(m)];
    if (!kp.visible[static_cast<std::size_t>(child)] || !kp.visible[static_cast<std::size_t>(par)]) {
      continue;
    }
    const double ax = to_raster(kp.points(par, 0), sx);
    const double ay = to_raster(kp.points(par, 1), sy);
    const double bx = to_raster(kp.points(child, 0), sx);
    const double by = to_raster(kp.points(child, 1), sy);
    const double dx = bx - ax;
    const double dy = by - ay;
    const double len2 = dx * dx + dy * dy;

    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - radius)));
    const int x1 = std::min(params.width - 1, static_cast<int>(std::ceil(std::max(ax, bx) + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - radius)));
    const int y1 = std::min(params.height - 1, static_cast<int>(std::ceil(std::max(ay, by) + radius)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x - ax;
        const double py = y - ay;
        double t = len2 > 0.0 ? (px * dx + py * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double ex = px - t * dx;
        const double ey = py - t * dy;
        if (ex * ex + ey * ey <= r2) map.at(m, y, x) = 1.0f;
      }
    }
  }
  return map;
}

Keypoints2D decode_heatmaps(const Heatmaps& h) {
  Keypoints2D kp;
  kp.points = PointsMatrix2::Zero(h.joints, 2);
  kp.visible.assign(static_cast<std::size_t>(h.joints), 0);
  for (int k = 0; k < h.joints; ++k) {
    int best_x = 0;
    int best_y = 0;
    float best = -1.0f;
    for (int y = 0; y < h.height; ++y) {
      for (int x = 0; x < h.width; ++x) {
        if (h.at(k, y, x) > best) {
          best = h.at(k, y, x);
          best_x = x;
          best_y = y;
        }
      }
    }
    if (!(best > 0.0f)) continue;
    double u = best_x;
    double v = best_y;
    if (best_x > 0 && best_x + 1 < h.width) {
      const float diff = h.at(k, best_y, best_x + 1) - h.at(k, best_y, best_x - 1);
      if (diff > 0) u += 0.25;
      if (diff < 0) u -= 0.25;
    }
    if (best_y > 0 && best_y + 1 < h.height) {
      const float diff = h.at(k, best_y + 1, best_x) - h.at(k, best_y - 1, best_x);
      if (diff > 0) v += 0.25;
      if (diff < 0) v -= 0.25;
    }
    kp.points(k, 0) = u;
    kp.points(k, 1) = v;
    kp.visible[static_cast<std::size_t>(k)] = 1;
  }
  return kp;
}

double skeleton_iou(const SkeletonMap& a, const SkeletonMap& b, double threshold) {
  if (!a.same_shape(b)) throw Error(ErrorKind::kShapeMismatch, "skeleton maps differ in shape");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool pa = a.data[i] >= threshold;
    const bool pb = b.data[i] >= threshold;
    inter += (pa && pb) ? 1 : 0;
    uni += (pa || pb) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace geomrep
