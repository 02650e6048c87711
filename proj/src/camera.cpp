#include "pda/camera.hpp"

#include <cmath>

#include "pda/error.hpp"

namespace pda {

void CameraModel::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw PoseError("camera: focal lengths must be positive");
    const Eigen::Matrix3d r = rotation();
    if (!pose.allFinite()) throw PoseError("camera: pose is not finite");
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
        throw PoseError("camera: pose rotation is not orthonormal");
    }
    if (std::fabs(r.determinant() - 1.0) > 1e-9) throw PoseError("camera: pose rotation is not proper");
    const Eigen::RowVector4d last = pose.row(3);
    if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
        throw PoseError("camera: pose is not an affine rigid transform");
    }
}

CameraModel CameraModel::centered(std::size_t width, std::size_t height, double focal) {
    CameraModel cam;
    cam.fx = focal;
    cam.fy = focal;
    cam.cx = (static_cast<double>(width) - 1.0) / 2.0;
    cam.cy = (static_cast<double>(height) - 1.0) / 2.0;
    cam.width = width;
    cam.height = height;
    return cam;
}

Eigen::Matrix4d CameraModel::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                                     const Eigen::Vector3d& up) {
    const Eigen::Vector3d z = (target - eye).normalized();
    Eigen::Vector3d x = z.cross(up);
    if (x.norm() < 1e-12) throw PoseError("look_at: view direction parallel to up");
    x.normalize();
    const Eigen::Vector3d y = z.cross(x);
    Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
    pose.block<3, 1>(0, 0) = x;
    pose.block<3, 1>(0, 1) = y;
    pose.block<3, 1>(0, 2) = z;
    pose.block<3, 1>(0, 3) = eye;
    return pose;
}

}  // namespace pda
