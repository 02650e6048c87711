#include "pda/align_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "pda/error.hpp"

namespace pda {

namespace {

// Least squares of ref ~ scale * pred + shift over the given indices (all when
// empty). nullopt when pred has (numerically) no spread.
std::optional<ScaleShift> fit(const AlignmentSamples& s, const std::vector<std::size_t>* subset) {
    const std::size_t n = subset ? subset->size() : s.pred.size();
    if (n < 2) return std::nullopt;
    auto idx = [&](std::size_t i) { return subset ? (*subset)[i] : i; };
    double mp = 0.0;
    double mr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mp += s.pred[idx(i)];
        mr += s.ref[idx(i)];
    }
    mp /= static_cast<double>(n);
    mr /= static_cast<double>(n);
    double spp = 0.0;
    double spr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dp = s.pred[idx(i)] - mp;
        spp += dp * dp;
        spr += dp * (s.ref[idx(i)] - mr);
    }
    if (!(spp > 1e-12 * static_cast<double>(n) * std::max(1.0, mp * mp))) return std::nullopt;
    ScaleShift out;
    out.scale = spr / spp;
    out.shift = mr - out.scale * mp;
    out.inlier_count = n;
    return out;
}

double median(std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

std::vector<std::size_t> inliers_of(const AlignmentSamples& s, const ScaleShift& m, double threshold) {
    std::vector<std::size_t> in;
    for (std::size_t i = 0; i < s.pred.size(); ++i) {
        if (std::fabs(m.scale * s.pred[i] + m.shift - s.ref[i]) < threshold) in.push_back(i);
    }
    return in;
}

}  // namespace

DepthMap ScaleShift::apply(const DepthMap& map) const {
    DepthMap out = map;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.valid[i]) out.depth[i] = scale * map.depth[i] + shift;
    }
    return out;
}

AlignmentSamples alignment_samples(const DepthMap& pred, const DepthMap& ref) {
    const DepthMap resized = pred.same_size(ref) ? pred : resize_bilinear(pred, ref.height, ref.width);
    AlignmentSamples s;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (resized.valid[i] && ref.valid[i]) {
            s.pred.push_back(resized.depth[i]);
            s.ref.push_back(ref.depth[i]);
        }
    }
    return s;
}

ScaleShift polyfit_align(const DepthMap& pred, const DepthMap& ref) {
    const auto s = alignment_samples(pred, ref);
    if (s.pred.size() < 2) throw AlignmentError("polyfit_align: fewer than 2 valid pixels");
    auto m = fit(s, nullptr);
    if (!m) throw AlignmentError("polyfit_align: prediction is constant over the valid pixels");
    return *m;
}

ScaleShift ransac_scale_shift(const DepthMap& pred, const DepthMap& ref, const RansacOptions& options) {
    if (options.n_groups == 0 || options.group_size < 2) {
        throw ParameterError("ransac_scale_shift: need at least one group of at least two samples");
    }
    const auto s = alignment_samples(pred, ref);
    const std::size_t n = s.pred.size();
    if (n < 2) throw AlignmentError("ransac_scale_shift: fewer than 2 valid pixels");
    const auto global = fit(s, nullptr);
    if (!global) throw AlignmentError("ransac_scale_shift: prediction is constant over the valid pixels");

    std::vector<double> residuals(n);
    for (std::size_t i = 0; i < n; ++i) residuals[i] = global->scale * s.pred[i] + global->shift - s.ref[i];
    const double centre = median(residuals);
    for (double& r : residuals) r = std::fabs(r - centre);
    const double mad = median(std::move(residuals));
    // An exact fit has a MAD of pure rounding noise; keep a floor relative to
    // the reference magnitude so exact inliers still vote.
    std::vector<double> magnitudes(s.ref.size());
    std::transform(s.ref.begin(), s.ref.end(), magnitudes.begin(), [](double v) { return std::fabs(v); });
    const double threshold = std::max(mad, 1e-9 * (1.0 + median(std::move(magnitudes))));

    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t group_size = std::min(options.group_size, n);
    std::optional<ScaleShift> best;
    std::size_t best_votes = 0;
    std::vector<std::size_t> group;
    for (std::size_t g = 0; g < options.n_groups; ++g) {
        group.clear();
        while (group.size() < group_size) {
            const std::size_t i = pick(rng);
            if (std::find(group.begin(), group.end(), i) == group.end()) group.push_back(i);
        }
        const auto model = fit(s, &group);
        if (!model) continue;
        const std::size_t votes = inliers_of(s, *model, threshold).size();
        if (!best || votes > best_votes) {
            best = model;
            best_votes = votes;
        }
    }
    if (!best) throw AlignmentError("ransac_scale_shift: every sample group was degenerate");

    const auto inliers = inliers_of(s, *best, threshold);
    ScaleShift result = *best;
    if (auto refit = fit(s, &inliers)) result = *refit;
    result.inlier_count = inliers_of(s, result, threshold).size();
    return result;
}

DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt) {
    if (!pred.same_size(gt)) throw ShapeError("depth_metrics: map sizes differ");
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    double rel_sum = 0.0;
    double hits = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!pred.valid[i] || !gt.valid[i]) continue;
        const double d = gt.depth[i];
        const double p = pred.depth[i];
        if (!(d > 0.0)) throw InputError("depth_metrics: ground truth must be positive on the mask");
        const double diff = std::fabs(d - p);
        abs_sum += diff;
        sq_sum += diff * diff;
        rel_sum += diff / d;
        if (p > 0.0 && std::max(d / p, p / d) < kDelta05Threshold) hits += 1.0;
        ++n;
    }
    if (n == 0) throw InputError("depth_metrics: empty mask");
    const double count = static_cast<double>(n);
    return DepthMetrics{abs_sum / count, std::sqrt(sq_sum / count), rel_sum / count, hits / count};
}

}  // namespace pda
