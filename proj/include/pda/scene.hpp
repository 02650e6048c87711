#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "pda/camera.hpp"
#include "pda/depth_map.hpp"

namespace pda {

// Infinite plane n . x = offset, clipped to the scene bounds. A non-zero
// checker size modulates the albedo with a 3-D checkerboard of that cell size.
struct Plane {
    Eigen::Vector3d normal{0, 0, 1};
    double offset = 0.0;
    Eigen::Vector3d albedo{0.7, 0.7, 0.7};
    double checker = 0.0;
};

// Solid axis-aligned box.
struct Box {
    Eigen::Vector3d lo{0, 0, 0};
    Eigen::Vector3d hi{1, 1, 1};
    Eigen::Vector3d albedo{0.7, 0.7, 0.7};
};

struct Scene {
    Eigen::Vector3d bounds_lo{-1, -1, -1};
    Eigen::Vector3d bounds_hi{1, 1, 1};
    std::vector<Plane> planes;
    std::vector<Box> boxes;
    // Direction towards the light (world frame, normalized).
    Eigen::Vector3d light{0.3, 0.8, -0.5};
    // Global metric scale the geometry was generated with.
    double scale = 1.0;

    // Copy with all lengths multiplied by s; images rendered from a camera
    // whose translation is scaled the same way are unchanged.
    Scene scaled(double s) const;
    bool inside_solid(const Eigen::Vector3d& p) const;
};

struct SceneOptions {
    double scale_min = 0.5;
    double scale_max = 2.0;
    int min_boxes = 2;
    int max_boxes = 5;
};

// A closed room (floor, ceiling and four walls with checker texture) holding
// a few boxes on the floor, uniformly rescaled by a factor drawn from
// [scale_min, scale_max].
Scene gen_scene(std::uint64_t seed, const SceneOptions& options = {});

struct RayHit {
    double t = 0.0;
    Eigen::Vector3d normal;
    Eigen::Vector3d albedo;
};

// First hit along origin + t * dir for t > 0, if any.
std::optional<RayHit> cast_ray(const Scene& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir);

struct Frame {
    Image rgb;
    DepthMap depth;
};

// Ray-cast render: depth is the camera-frame z of the first hit, pixels that
// hit nothing are invalid (black). Throws PoseError when the camera centre is
// inside a solid or outside the scene bounds.
Frame render_frame(const Scene& scene, const CameraModel& camera);

inline constexpr double kDefaultFocalRatio = 80.0 / 96.0;

// Random viewpoint inside the room looking roughly along +z, at the scene's
// scale. Focal length is focal_ratio * width.
CameraModel sample_view(const Scene& scene, std::mt19937_64& rng, std::size_t width, std::size_t height,
                        double focal_ratio = kDefaultFocalRatio);

}  // namespace pda
