#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstddef>

namespace pda {

// Pinhole camera; pixel (row, col) has its centre at u = col, v = row.
// Camera frame: x right, y down, z forward. pose maps camera to world.
struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    std::size_t width = 0;
    std::size_t height = 0;
    Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();

    // Throws PoseError for non-positive focal lengths or a non-rigid pose.
    void validate() const;

    Eigen::Matrix3d rotation() const { return pose.topLeftCorner<3, 3>(); }
    Eigen::Vector3d position() const { return pose.topRightCorner<3, 1>(); }

    // Direction (camera frame) through pixel (u, v) with z = 1.
    Eigen::Vector3d ray_camera(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
    Eigen::Vector3d world_to_camera(const Eigen::Vector3d& p) const {
        return rotation().transpose() * (p - position());
    }
    Eigen::Vector3d camera_to_world(const Eigen::Vector3d& p) const { return rotation() * p + position(); }

    // Simple symmetric intrinsics with horizontal focal length fx.
    static CameraModel centered(std::size_t width, std::size_t height, double focal);

    // Camera at eye looking at target; up is the world direction that should
    // appear upwards in the image.
    static Eigen::Matrix4d look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                                   const Eigen::Vector3d& up);
};

}  // namespace pda
