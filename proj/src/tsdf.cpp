#include "pda/tsdf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pda/error.hpp"
#include "pda/parallel.hpp"

namespace pda {

TsdfVolume::TsdfVolume(const Point3& origin, double voxel_size, std::array<std::size_t, 3> extents)
    : origin_(origin), voxel_size_(voxel_size), extents_(extents) {
    if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) throw ParameterError("tsdf: voxel size must be positive");
    if (!origin.allFinite()) throw ParameterError("tsdf: origin must be finite");
    if (extents[0] == 0 || extents[1] == 0 || extents[2] == 0) throw ParameterError("tsdf: empty extents");
    const std::size_t n = extents[0] * extents[1] * extents[2];
    tsdf_.assign(n, 1.0);
    weight_.assign(n, 0.0);
}

TsdfVolume TsdfVolume::covering(const Point3& lo, const Point3& hi, double voxel_size) {
    if (!(voxel_size > 0.0)) throw ParameterError("tsdf: voxel size must be positive");
    if (!((hi.array() > lo.array()).all())) throw ParameterError("tsdf: covering box must have hi > lo");
    std::array<std::size_t, 3> ext{};
    for (int a = 0; a < 3; ++a) {
        ext[a] = static_cast<std::size_t>(std::ceil((hi[a] - lo[a]) / voxel_size));
        ext[a] = std::max<std::size_t>(ext[a], 1);
    }
    return TsdfVolume(lo, voxel_size, ext);
}

Point3 TsdfVolume::centre(std::size_t i, std::size_t j, std::size_t k) const {
    return origin_ + voxel_size_ * Point3(static_cast<double>(i) + 0.5, static_cast<double>(j) + 0.5,
                                          static_cast<double>(k) + 0.5);
}

void TsdfVolume::integrate(const DepthMap& depth, const CameraModel& camera, double truncation) {
    camera.validate();
    if (!(truncation > 0.0)) throw ParameterError("tsdf: truncation must be positive");
    if (depth.height == 0 || depth.width == 0) return;

    const DepthMap* frame = &depth;
    DepthMap resized;
    if (depth.height != camera.height || depth.width != camera.width) {
        resized = resize_nearest(depth, camera.height, camera.width);
        frame = &resized;
    }
    if (frame->valid_count() == 0) return;

    const Eigen::Matrix3d rt = camera.rotation().transpose();
    const Eigen::Vector3d t = camera.position();
    const std::size_t nx = extents_[0], ny = extents_[1], nz = extents_[2];
    const auto h = static_cast<double>(frame->height);
    const auto w = static_cast<double>(frame->width);

    // Slices along k touch disjoint voxels.
    parallel_for(nz, [&](std::size_t k0, std::size_t k1) {
        for (std::size_t k = k0; k < k1; ++k) {
            for (std::size_t j = 0; j < ny; ++j) {
                for (std::size_t i = 0; i < nx; ++i) {
                    const Eigen::Vector3d pc = rt * (centre(i, j, k) - t);
                    if (!(pc.z() > 0.0)) continue;
                    const double u = camera.fx * pc.x() / pc.z() + camera.cx;
                    const double v = camera.fy * pc.y() / pc.z() + camera.cy;
                    const double col = std::round(u);
                    const double row = std::round(v);
                    if (col < 0.0 || row < 0.0 || col >= w || row >= h) continue;
                    const auto r = static_cast<std::size_t>(row);
                    const auto c = static_cast<std::size_t>(col);
                    if (!frame->is_valid(r, c)) continue;
                    const double d = frame->at(r, c);
                    if (!(d > 0.0)) continue;
                    const double sdf = d - pc.z();
                    if (sdf <= -truncation) continue;
                    const double value = std::clamp(sdf / truncation, -1.0, 1.0);
                    const std::size_t idx = index(i, j, k);
                    const double wt = weight_[idx];
                    tsdf_[idx] = (tsdf_[idx] * wt + value) / (wt + 1.0);
                    weight_[idx] = wt + 1.0;
                }
            }
        }
    });
}

PointCloud extract_points(const TsdfVolume& volume) {
    PointCloud points;
    const auto& ext = volume.extents();
    const auto& tsdf = volume.tsdf_values();
    const auto& weight = volume.weights();
    const double vs = volume.voxel_size();
    for (std::size_t k = 0; k < ext[2]; ++k) {
        for (std::size_t j = 0; j < ext[1]; ++j) {
            for (std::size_t i = 0; i < ext[0]; ++i) {
                const std::size_t a = volume.index(i, j, k);
                if (!(weight[a] > 0.0)) continue;
                const double ta = tsdf[a];
                const Point3 pa = volume.centre(i, j, k);
                const std::array<std::array<std::size_t, 3>, 3> next{{{i + 1, j, k}, {i, j + 1, k}, {i, j, k + 1}}};
                for (int axis = 0; axis < 3; ++axis) {
                    const auto& n = next[axis];
                    if (n[axis] >= ext[axis]) continue;
                    const std::size_t b = volume.index(n[0], n[1], n[2]);
                    if (!(weight[b] > 0.0)) continue;
                    const double tb = tsdf[b];
                    // A crossing needs opposite signs; an exact zero counts on the
                    // side where it is, so only emit once.
                    const bool crosses = (ta > 0.0 && tb <= 0.0) || (ta < 0.0 && tb >= 0.0) ||
                                         (ta == 0.0 && tb > 0.0);
                    if (!crosses) continue;
                    const double s = ta / (ta - tb);
                    Point3 p = pa;
                    p[axis] += s * vs;
                    points.push_back(p);
                }
            }
        }
    }
    return points;
}

namespace {

// Uniform grid over the reference points stored in CSR form.
class PointGrid {
public:
    explicit PointGrid(const PointCloud& pts) : pts_(pts) {
        lo_ = pts[0];
        Point3 hi = pts[0];
        for (const auto& p : pts) {
            lo_ = lo_.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const double span = (hi - lo_).maxCoeff();
        const double per_axis = std::max(1.0, std::round(2.0 * std::cbrt(static_cast<double>(pts.size()))));
        cell_ = span > 0.0 ? span / per_axis : 1.0;
        for (int a = 0; a < 3; ++a) {
            dims_[a] = static_cast<long>(std::floor((hi[a] - lo_[a]) / cell_)) + 1;
        }
        const std::size_t cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
        start_.assign(cells + 1, 0);
        std::vector<std::size_t> cell_of(pts.size());
        for (std::size_t n = 0; n < pts.size(); ++n) {
            const auto c = cell_coords(pts[n]);
            cell_of[n] = flat(c[0], c[1], c[2]);
            ++start_[cell_of[n] + 1];
        }
        for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
        order_.resize(pts.size());
        std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
        for (std::size_t n = 0; n < pts.size(); ++n) order_[fill[cell_of[n]]++] = n;
    }

    double nearest(const Point3& q) const {
        const auto qc = cell_coords_unclamped(q);
        long max_ring = 0;
        for (int a = 0; a < 3; ++a) {
            max_ring = std::max({max_ring, std::abs(qc[a]), std::abs(dims_[a] - 1 - qc[a])});
        }
        double best = std::numeric_limits<double>::infinity();
        for (long r = 0; r <= max_ring; ++r) {
            for (long dk = -r; dk <= r; ++dk) {
                const long ck = qc[2] + dk;
                if (ck < 0 || ck >= dims_[2]) continue;
                for (long dj = -r; dj <= r; ++dj) {
                    const long cj = qc[1] + dj;
                    if (cj < 0 || cj >= dims_[1]) continue;
                    const bool face = std::abs(dk) == r || std::abs(dj) == r;
                    for (long di = -r; di <= r; di += (face || r == 0) ? 1 : 2 * r) {
                        const long ci = qc[0] + di;
                        if (ci < 0 || ci >= dims_[0]) continue;
                        const std::size_t c = flat(ci, cj, ck);
                        for (std::size_t s = start_[c]; s < start_[c + 1]; ++s) {
                            best = std::min(best, (pts_[order_[s]] - q).squaredNorm());
                        }
                    }
                }
            }
            // Points in ring r + 1 are at least r cells away along some axis.
            const double bound = static_cast<double>(r) * cell_;
            if (best <= bound * bound) break;
        }
        return std::sqrt(best);
    }

private:
    std::array<long, 3> cell_coords_unclamped(const Point3& p) const {
        std::array<long, 3> c{};
        for (int a = 0; a < 3; ++a) c[a] = static_cast<long>(std::floor((p[a] - lo_[a]) / cell_));
        return c;
    }
    std::array<long, 3> cell_coords(const Point3& p) const {
        auto c = cell_coords_unclamped(p);
        for (int a = 0; a < 3; ++a) c[a] = std::clamp(c[a], 0L, dims_[a] - 1);
        return c;
    }
    std::size_t flat(long i, long j, long k) const {
        return static_cast<std::size_t>((k * dims_[1] + j) * dims_[0] + i);
    }

    const PointCloud& pts_;
    Point3 lo_;
    double cell_ = 1.0;
    std::array<long, 3> dims_{};
    std::vector<std::size_t> start_;
    std::vector<std::size_t> order_;
};

}  // namespace

std::vector<double> nearest_distances(const PointCloud& queries, const PointCloud& reference) {
    if (reference.empty()) throw InputError("nearest_distances: empty reference set");
    for (const auto& p : reference) {
        if (!p.allFinite()) throw InputError("nearest_distances: non-finite reference point");
    }
    for (const auto& p : queries) {
        if (!p.allFinite()) throw InputError("nearest_distances: non-finite query point");
    }
    const PointGrid grid(reference);
    std::vector<double> out(queries.size());
    parallel_for(queries.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t n = b; n < e; ++n) out[n] = grid.nearest(queries[n]);
    });
    return out;
}

ReconMetrics recon_metrics(const PointCloud& pred, const PointCloud& gt, double tau) {
    if (pred.empty() || gt.empty()) throw InputError("recon_metrics: point sets must be non-empty");
    if (!(tau > 0.0)) throw ParameterError("recon_metrics: tau must be positive");
    const auto to_gt = nearest_distances(pred, gt);
    const auto to_pred = nearest_distances(gt, pred);
    ReconMetrics m;
    for (double d : to_gt) {
        m.acc += d;
        m.prec += d < tau ? 1.0 : 0.0;
    }
    for (double d : to_pred) {
        m.comp += d;
        m.recall += d < tau ? 1.0 : 0.0;
    }
    m.acc /= static_cast<double>(to_gt.size());
    m.prec /= static_cast<double>(to_gt.size());
    m.comp /= static_cast<double>(to_pred.size());
    m.recall /= static_cast<double>(to_pred.size());
    m.fscore = m.prec + m.recall > 0.0 ? 2.0 * m.prec * m.recall / (m.prec + m.recall) : 0.0;
    return m;
}

}  // namespace pda
