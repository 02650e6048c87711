#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pda/camera.hpp"
#include "pda/depth_map.hpp"
#include "pda/tsdf.hpp"

namespace pda::io {

// PFM ("Pf" header, little-endian float32, rows stored bottom to top).
// Invalid pixels are written as NaN; on read every non-finite sample becomes
// an invalid pixel with stored value 0. Values are rounded to float32.
void write_pfm(const std::filesystem::path& path, const DepthMap& map);
DepthMap read_pfm(const std::filesystem::path& path);

// Binary PPM (P6, maxval 255).
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

// One camera-to-world pose per line, 16 row-major numbers.
void write_poses(const std::filesystem::path& path, const std::vector<Eigen::Matrix4d>& poses);
std::vector<Eigen::Matrix4d> read_poses(const std::filesystem::path& path);

// "fx fy cx cy width height"; the pose is left at identity.
void write_intrinsics(const std::filesystem::path& path, const CameraModel& camera);
CameraModel read_intrinsics(const std::filesystem::path& path);

// One "x y z" triple per line.
void write_points(const std::filesystem::path& path, const PointCloud& points);
PointCloud read_points(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pda::io
