#include "pda/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pda/error.hpp"
#include "pda/parallel.hpp"

namespace pda {

namespace {

constexpr double kHitEps = 1e-9;

// Base room before scaling (meters).
const Eigen::Vector3d kRoomLo(-2.5, 0.0, -1.0);
const Eigen::Vector3d kRoomHi(2.5, 2.8, 4.5);

bool within(const Eigen::Vector3d& p, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double tol) {
    return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
}

double checker_factor(const Eigen::Vector3d& p, double cell) {
    if (cell <= 0.0) return 1.0;
    const long s = static_cast<long>(std::floor(p.x() / cell)) + static_cast<long>(std::floor(p.y() / cell)) +
                   static_cast<long>(std::floor(p.z() / cell));
    return (s & 1) ? 0.8 : 1.0;
}

}  // namespace

Scene Scene::scaled(double s) const {
    if (!(s > 0.0)) throw ParameterError("scene: scale factor must be positive");
    Scene out = *this;
    out.bounds_lo *= s;
    out.bounds_hi *= s;
    for (auto& p : out.planes) {
        p.offset *= s;
        p.checker *= s;
    }
    for (auto& b : out.boxes) {
        b.lo *= s;
        b.hi *= s;
    }
    out.scale = scale * s;
    return out;
}

bool Scene::inside_solid(const Eigen::Vector3d& p) const {
    for (const auto& b : boxes) {
        if ((p.array() > b.lo.array()).all() && (p.array() < b.hi.array()).all()) return true;
    }
    return false;
}

Scene gen_scene(std::uint64_t seed, const SceneOptions& options) {
    if (!(options.scale_min > 0.0) || options.scale_max < options.scale_min) {
        throw ParameterError("gen_scene: invalid scale range");
    }
    if (options.min_boxes < 0 || options.max_boxes < options.min_boxes) {
        throw ParameterError("gen_scene: invalid box count range");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };
    auto colour = [&] { return Eigen::Vector3d(uniform(0.2, 0.95), uniform(0.2, 0.95), uniform(0.2, 0.95)); };

    Scene scene;
    scene.bounds_lo = kRoomLo;
    scene.bounds_hi = kRoomHi;
    const double cell = uniform(0.3, 0.7);
    scene.planes = {
        {{0, 1, 0}, kRoomLo.y(), colour(), cell},   // floor
        {{0, -1, 0}, -kRoomHi.y(), colour(), 0.0},  // ceiling
        {{1, 0, 0}, kRoomLo.x(), colour(), cell},   // left wall
        {{-1, 0, 0}, -kRoomHi.x(), colour(), cell}, // right wall
        {{0, 0, -1}, -kRoomHi.z(), colour(), cell}, // back wall
        {{0, 0, 1}, kRoomLo.z(), colour(), 0.0},    // wall behind the cameras
    };
    const int boxes = options.min_boxes +
                      static_cast<int>(rng() % static_cast<std::uint64_t>(options.max_boxes - options.min_boxes + 1));
    for (int b = 0; b < boxes; ++b) {
        const Eigen::Vector3d size(uniform(0.3, 1.0), uniform(0.3, 1.4), uniform(0.3, 1.0));
        const double x = uniform(-2.0, 2.0 - size.x());
        const double z = uniform(1.2, 4.2 - size.z());
        // Some boxes float (shelves, tables) to create depth edges away from the floor.
        const double y = unit(rng) < 0.3 ? uniform(0.4, 1.2) : 0.0;
        Box box;
        box.lo = Eigen::Vector3d(x, y, z);
        box.hi = box.lo + size;
        box.hi.y() = std::min(box.hi.y(), kRoomHi.y() - 0.1);
        box.albedo = colour();
        scene.boxes.push_back(box);
    }
    scene.light = Eigen::Vector3d(uniform(-0.5, 0.5), 1.0, uniform(-0.8, -0.2)).normalized();
    return scene.scaled(uniform(options.scale_min, options.scale_max));
}

std::optional<RayHit> cast_ray(const Scene& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
    std::optional<RayHit> best;
    const double extent = (scene.bounds_hi - scene.bounds_lo).norm();
    const double tol = 1e-9 * (1.0 + extent);
    for (const auto& pl : scene.planes) {
        const double denom = pl.normal.dot(dir);
        if (std::fabs(denom) < 1e-15) continue;
        const double t = (pl.offset - pl.normal.dot(origin)) / denom;
        if (!(t > kHitEps) || (best && t >= best->t)) continue;
        const Eigen::Vector3d p = origin + t * dir;
        if (!within(p, scene.bounds_lo, scene.bounds_hi, tol)) continue;
        best = RayHit{t, pl.normal, pl.albedo * checker_factor(p, pl.checker)};
    }
    for (const auto& b : scene.boxes) {
        double t_near = -std::numeric_limits<double>::infinity();
        double t_far = std::numeric_limits<double>::infinity();
        int axis_near = -1;
        bool miss = false;
        for (int a = 0; a < 3; ++a) {
            if (std::fabs(dir[a]) < 1e-15) {
                if (origin[a] < b.lo[a] || origin[a] > b.hi[a]) miss = true;
                continue;
            }
            double t0 = (b.lo[a] - origin[a]) / dir[a];
            double t1 = (b.hi[a] - origin[a]) / dir[a];
            if (t0 > t1) std::swap(t0, t1);
            if (t0 > t_near) {
                t_near = t0;
                axis_near = a;
            }
            t_far = std::min(t_far, t1);
        }
        if (miss || axis_near < 0 || t_near > t_far || !(t_near > kHitEps)) continue;
        if (best && t_near >= best->t) continue;
        Eigen::Vector3d n = Eigen::Vector3d::Zero();
        n[axis_near] = dir[axis_near] > 0.0 ? -1.0 : 1.0;
        best = RayHit{t_near, n, b.albedo};
    }
    return best;
}

Frame render_frame(const Scene& scene, const CameraModel& camera) {
    camera.validate();
    const Eigen::Vector3d eye = camera.position();
    if (!within(eye, scene.bounds_lo, scene.bounds_hi, 0.0)) throw PoseError("render: camera outside scene bounds");
    if (scene.inside_solid(eye)) throw PoseError("render: camera inside a solid");

    Frame frame{Image(camera.height, camera.width), DepthMap(camera.height, camera.width, 0.0, false)};
    const Eigen::Matrix3d rot = camera.rotation();
    parallel_for(camera.height, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            for (std::size_t c = 0; c < camera.width; ++c) {
                // With a z = 1 camera ray, the hit parameter is the camera depth.
                const Eigen::Vector3d dir =
                    rot * camera.ray_camera(static_cast<double>(c), static_cast<double>(r));
                const auto hit = cast_ray(scene, eye, dir);
                if (!hit) continue;
                const std::size_t idx = frame.depth.index(r, c);
                frame.depth.depth[idx] = hit->t;
                frame.depth.valid[idx] = 1;
                Eigen::Vector3d n = hit->normal;
                if (n.dot(dir) > 0.0) n = -n;
                const double shade = 0.35 + 0.65 * std::max(0.0, n.dot(scene.light));
                const Eigen::Vector3d rgb = (hit->albedo * shade).cwiseMin(1.0);
                frame.rgb.set(r, c, rgb.x(), rgb.y(), rgb.z());
            }
        }
    });
    return frame;
}

CameraModel sample_view(const Scene& scene, std::mt19937_64& rng, std::size_t width, std::size_t height,
                        double focal_ratio) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };
    CameraModel cam = CameraModel::centered(width, height, focal_ratio * static_cast<double>(width));
    const double s = scene.scale;
    for (int attempt = 0; attempt < 100; ++attempt) {
        const Eigen::Vector3d eye(uniform(-1.2, 1.2), uniform(0.9, 1.9), uniform(-0.6, 0.4));
        const Eigen::Vector3d target(uniform(-1.2, 1.2), uniform(0.2, 1.4), 3.0);
        const Eigen::Vector3d eye_s = eye * s;
        if (scene.inside_solid(eye_s)) continue;
        cam.pose = CameraModel::look_at(eye_s, target * s, Eigen::Vector3d(0, 1, 0));
        return cam;
    }
    throw PoseError("sample_view: no free viewpoint found");
}

}  // namespace pda
