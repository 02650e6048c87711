#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <vector>

#include "pda/camera.hpp"
#include "pda/depth_map.hpp"

namespace pda {

using Point3 = Eigen::Vector3d;
using PointCloud = std::vector<Point3>;

inline constexpr double kDefaultVoxelSize = 0.04;

// Axis-aligned grid of truncated signed distances. Voxel (i, j, k) has its
// centre at origin + (i + 0.5, j + 0.5, k + 0.5) * voxel_size.
class TsdfVolume {
public:
    TsdfVolume(const Point3& origin, double voxel_size, std::array<std::size_t, 3> extents);

    // Grid covering [lo, hi] with the given voxel size.
    static TsdfVolume covering(const Point3& lo, const Point3& hi, double voxel_size = kDefaultVoxelSize);

    const Point3& origin() const { return origin_; }
    double voxel_size() const { return voxel_size_; }
    const std::array<std::size_t, 3>& extents() const { return extents_; }
    std::size_t voxel_count() const { return tsdf_.size(); }

    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
        return (k * extents_[1] + j) * extents_[0] + i;
    }
    Point3 centre(std::size_t i, std::size_t j, std::size_t k) const;

    double tsdf(std::size_t i, std::size_t j, std::size_t k) const { return tsdf_[index(i, j, k)]; }
    double weight(std::size_t i, std::size_t j, std::size_t k) const { return weight_[index(i, j, k)]; }
    const std::vector<double>& tsdf_values() const { return tsdf_; }
    const std::vector<double>& weights() const { return weight_; }

    // Running-average update with one posed metric depth frame; the depth map
    // is sampled at the nearest pixel of each voxel projection.
    void integrate(const DepthMap& depth, const CameraModel& camera, double truncation);

private:
    Point3 origin_;
    double voxel_size_;
    std::array<std::size_t, 3> extents_;
    std::vector<double> tsdf_;
    std::vector<double> weight_;
};

// Truncation band used when none is given: three voxels.
inline double default_truncation(double voxel_size) { return 3.0 * voxel_size; }

// Surface points at sign changes of the tsdf between axis neighbours whose
// weights are both positive, linearly interpolated.
PointCloud extract_points(const TsdfVolume& volume);

struct ReconMetrics {
    double acc = 0.0;
    double comp = 0.0;
    double prec = 0.0;
    double recall = 0.0;
    double fscore = 0.0;
};

inline constexpr double kDefaultTau = 0.05;

// Exact nearest-neighbour distance from every query to the reference set.
std::vector<double> nearest_distances(const PointCloud& queries, const PointCloud& reference);

// pred = P (reconstructed), gt = P* (reference).
ReconMetrics recon_metrics(const PointCloud& pred, const PointCloud& gt, double tau = kDefaultTau);

}  // namespace pda
