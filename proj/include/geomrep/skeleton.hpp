#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "geomrep/geometry.hpp"

namespace geomrep {

/// Tree-structured joint graph. parent[root] == root; limb_order lists
/// (child, parent) pairs and fixes the skeleton-map channel order.
struct KinematicTree {
  std::vector<int> parent;
  std::vector<double> bone_lengths_mm;
  std::vector<std::pair<int, int>> limb_order;
  std::vector<std::string> joint_names;

  int num_joints() const { return static_cast<int>(parent.size()); }
  int num_limbs() const { return static_cast<int>(limb_order.size()); }
  int root() const;
  /// Throws kConfig if the structure is not a single rooted tree whose
  /// limb_order covers every non-root joint exactly once.
  void validate() const;
  /// Joints ordered so every parent precedes its children.
  std::vector<int> topological_order() const;
};

/// 16-joint body: pelvis root, legs, thorax/neck/head, arms.
KinematicTree default_body_tree();

/// Channel-major (c, y, x) raster of limb strokes.
struct SkeletonMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool binary = true;
  std::vector<float> data;

  SkeletonMap() = default;
  SkeletonMap(int c, int h, int w, bool is_binary = true)
      : channels(c), height(h), width(w), binary(is_binary),
        data(static_cast<std::size_t>(c) * h * w, 0.0f) {}

  std::size_t size() const { return data.size(); }
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height + y) * width + x;
  }
  float& at(int c, int y, int x) { return data[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data[index(c, y, x)]; }
  bool same_shape(const SkeletonMap& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  friend bool operator==(const SkeletonMap&, const SkeletonMap&) = default;
};

/// K x H x W non-negative heatmaps.
struct Heatmaps {
  int joints = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Heatmaps() = default;
  Heatmaps(int k, int h, int w)
      : joints(k), height(h), width(w), data(static_cast<std::size_t>(k) * h * w, 0.0f) {}
  float& at(int k, int y, int x) {
    return data[(static_cast<std::size_t>(k) * height + y) * width + x];
  }
  float at(int k, int y, int x) const {
    return data[(static_cast<std::size_t>(k) * height + y) * width + x];
  }
};

struct RasterParams {
  int width = 64;
  int height = 64;
  /// Stroke width in reference-frame pixels; scaled by width / reference_size.
  double line_width_px = 8.0;
  /// Side of the square frame the keypoints are expressed in.
  double reference_size = 256.0;
};

/// Distance-to-segment rasterization: a pixel center within half the
/// scaled width of limb m's segment is set in channel m. Limbs with an
/// invisible endpoint stay empty; zero-length limbs render a disc.
SkeletonMap rasterize_skeleton(const Keypoints2D& kp, const KinematicTree& tree,
                               const RasterParams& params);

/// Per-channel argmax with a quarter-pixel shift toward the larger
/// neighbour on each axis. Channels whose max is not positive come back
/// invisible.
Keypoints2D decode_heatmaps(const Heatmaps& h);

/// IoU over all (channel, pixel) elements after binarizing at
/// `value >= threshold`. Two empty maps have IoU 1.
double skeleton_iou(const SkeletonMap& a, const SkeletonMap& b, double threshold = 0.5);

}  // namespace geomrep
