#include "pda/losses.hpp"

#include <algorithm>
#include <limits>

#include "pda/error.hpp"
#include "pda/ops.hpp"

namespace pda {

namespace {

double mask_total(const Tensor& mask) {
    double n = 0.0;
    for (double v : mask.data()) n += v;
    return n;
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

// Lifts [H,W] to [1,H,W] so the spatial ops apply uniformly.
Tensor as_planes(const Tensor& t) {
    if (t.rank() == 3) return t;
    if (t.rank() == 2) return ops::reshape(t, {1, t.dim(0), t.dim(1)});
    throw ShapeError("expected a [C,H,W] or [H,W] map, got " + shape_str(t.shape()));
}

// Pair mask: both pixels of each forward-difference pair are valid.
Tensor pair_mask(const Tensor& mask, bool along_x) {
    const std::size_t c = mask.dim(0);
    const std::size_t h = mask.dim(1);
    const std::size_t w = mask.dim(2);
    const std::size_t oh = along_x ? h : h - 1;
    const std::size_t ow = along_x ? w - 1 : w;
    auto m = mask.data();
    std::vector<double> out(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t q = 0; q < ow; ++q) {
                const std::size_t a = (ch * h + r) * w + q;
                const std::size_t b = along_x ? a + 1 : a + w;
                out[(ch * oh + r) * ow + q] = m[a] * m[b];
            }
        }
    }
    return Tensor::from({c, oh, ow}, std::move(out));
}

Tensor masked_mean_abs(const Tensor& values, const Tensor& mask, double count) {
    return ops::scale(ops::sum(ops::mul(ops::abs(values), mask)), 1.0 / count);
}

Tensor depth_mask(const DepthMap& a, const DepthMap& b) {
    std::vector<double> m(a.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = (a.valid[i] && b.valid[i]) ? 1.0 : 0.0;
    return Tensor::from({1, a.height, a.width}, std::move(m));
}

}  // namespace

void NormScale::validate() const {
    if (!(d_max > d_min)) throw ParameterError("NormScale: degenerate scale (d_max must exceed d_min)");
    if (!(d_min > 0.0)) throw ParameterError("NormScale: d_min must be positive");
}

NormScale NormScale::from_depth(const DepthMap& map) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (!map.valid[i]) continue;
        lo = std::min(lo, map.depth[i]);
        hi = std::max(hi, map.depth[i]);
    }
    if (lo > hi) throw InputError("NormScale::from_depth: map has no valid pixel");
    NormScale s{lo, hi};
    s.validate();
    return s;
}

DepthMap normalize_depth(const DepthMap& map, const NormScale& scale) {
    scale.validate();
    DepthMap out = map;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.valid[i]) out.depth[i] = (map.depth[i] - scale.d_min) / scale.range();
    }
    return out;
}

DepthMap denormalize(const DepthMap& map, const NormScale& scale) {
    scale.validate();
    DepthMap out = map;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.valid[i]) out.depth[i] = map.depth[i] * scale.range() + scale.d_min;
    }
    return out;
}

Tensor normalize_depth(const Tensor& depth, const NormScale& scale) {
    scale.validate();
    return ops::scale(ops::add_scalar(depth, -scale.d_min), 1.0 / scale.range());
}

Tensor denormalize(const Tensor& depth, const NormScale& scale) {
    scale.validate();
    return ops::add_scalar(ops::scale(depth, scale.range()), scale.d_min);
}

Tensor l1_loss(const Tensor& a, const Tensor& b, const Tensor& mask) {
    require_same("l1_loss", a, b);
    require_same("l1_loss", a, mask);
    const double count = mask_total(mask);
    if (count <= 0.0) throw InputError("l1_loss: empty mask");
    return masked_mean_abs(ops::sub(a, b), mask, count);
}

Tensor grad_loss(const Tensor& pred, const Tensor& pseudo, const Tensor& mask) {
    require_same("grad_loss", pred, pseudo);
    require_same("grad_loss", pred, mask);
    if (mask_total(mask) <= 0.0) throw InputError("grad_loss: empty mask");
    const Tensor residual = as_planes(ops::sub(pred, pseudo));
    const Tensor m = as_planes(mask);
    const std::size_t h = residual.dim(1);
    const std::size_t w = residual.dim(2);

    Tensor total;
    auto accumulate_term = [&](Tensor term) { total = total.defined() ? ops::add(total, term) : term; };
    if (w > 1) {
        const Tensor mx = pair_mask(m, true);
        const double nx = mask_total(mx);
        if (nx > 0.0) {
            Tensor dx = ops::sub(ops::crop(residual, 0, h, 1, w - 1), ops::crop(residual, 0, h, 0, w - 1));
            accumulate_term(masked_mean_abs(dx, mx, nx));
        }
    }
    if (h > 1) {
        const Tensor my = pair_mask(m, false);
        const double ny = mask_total(my);
        if (ny > 0.0) {
            Tensor dy = ops::sub(ops::crop(residual, 1, h - 1, 0, w), ops::crop(residual, 0, h - 1, 0, w));
            accumulate_term(masked_mean_abs(dy, my, ny));
        }
    }
    return total.defined() ? total : Tensor::scalar(0.0);
}

LossReport edge_aware_loss(const Tensor& pred, const Tensor& gt, const Tensor& pseudo, double lambda,
                           const Tensor& gt_mask, const Tensor& pseudo_mask) {
    if (lambda < 0.0) throw ParameterError("edge_aware_loss: lambda must be non-negative");
    const bool has_gt = mask_total(gt_mask) > 0.0;
    const bool has_pseudo = mask_total(pseudo_mask) > 0.0;
    if (!has_gt && !has_pseudo) throw InputError("edge_aware_loss: both masks are empty");
    Tensor l1 = has_gt ? l1_loss(gt, pred, gt_mask) : Tensor::scalar(0.0);
    Tensor grad = has_pseudo ? grad_loss(pred, pseudo, pseudo_mask) : Tensor::scalar(0.0);
    LossReport report;
    report.lambda = lambda;
    report.total_tensor = ops::add(l1, ops::scale(grad, lambda));
    report.l1 = l1.item();
    report.grad = grad.item();
    report.total = report.total_tensor.item();
    return report;
}

LossReport synthetic_loss(const Tensor& pred, const Tensor& gt, double lambda_g, const Tensor& mask) {
    if (lambda_g < 0.0) throw ParameterError("synthetic_loss: lambda must be non-negative");
    Tensor l1 = l1_loss(gt, pred, mask);
    Tensor grad = grad_loss(pred, gt, mask);
    LossReport report;
    report.lambda = lambda_g;
    report.total_tensor = ops::add(l1, ops::scale(grad, lambda_g));
    report.l1 = l1.item();
    report.grad = grad.item();
    report.total = report.total_tensor.item();
    return report;
}

double l1_loss(const DepthMap& a, const DepthMap& b) {
    if (!a.same_size(b)) throw ShapeError("l1_loss: map sizes differ");
    return l1_loss(a.to_tensor(), b.to_tensor(), depth_mask(a, b)).item();
}

double grad_loss(const DepthMap& pred, const DepthMap& pseudo) {
    if (!pred.same_size(pseudo)) throw ShapeError("grad_loss: map sizes differ");
    return grad_loss(pred.to_tensor(), pseudo.to_tensor(), depth_mask(pred, pseudo)).item();
}

LossReport edge_aware_loss(const DepthMap& pred, const DepthMap& gt, const DepthMap& pseudo, double lambda) {
    if (!pred.same_size(gt) || !pred.same_size(pseudo)) throw ShapeError("edge_aware_loss: map sizes differ");
    return edge_aware_loss(pred.to_tensor(), gt.to_tensor(), pseudo.to_tensor(), lambda, depth_mask(pred, gt),
                           depth_mask(pred, pseudo));
}

}  // namespace pda
