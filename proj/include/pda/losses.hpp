#pragma once

#include "pda/depth_map.hpp"
#include "pda/tensor.hpp"

namespace pda {

// Linear depth scaling derived from a metric prompt.
struct NormScale {
    double d_min = 0.0;
    double d_max = 1.0;

    // Throws ParameterError unless d_max > d_min > 0.
    void validate() const;
    double range() const { return d_max - d_min; }

    // Min/max over the valid pixels of a metric map.
    static NormScale from_depth(const DepthMap& map);
};

// (d - d_min) / (d_max - d_min) on valid pixels; the mask is preserved.
DepthMap normalize_depth(const DepthMap& map, const NormScale& scale);
DepthMap denormalize(const DepthMap& map, const NormScale& scale);
Tensor normalize_depth(const Tensor& depth, const NormScale& scale);
Tensor denormalize(const Tensor& depth, const NormScale& scale);

inline constexpr double kEdgeLossLambda = 0.5;

struct LossReport {
    double total = 0.0;
    double l1 = 0.0;
    double grad = 0.0;
    double lambda = 0.0;
    // Scalar on the active tape when pred requires a gradient.
    Tensor total_tensor;
};

// Tensor forms: pred, target and mask share a shape ([1,H,W] or [C,H,W]);
// mask entries are 0 or 1. They are differentiable in pred.

// Masked mean |a - b|.
Tensor l1_loss(const Tensor& a, const Tensor& b, const Tensor& mask);

// Forward-difference gradient of the residual pred - pseudo along x and y.
// Each axis contributes the masked mean of |difference| over pixel pairs
// whose two pixels are both valid; an axis with no such pair contributes 0.
Tensor grad_loss(const Tensor& pred, const Tensor& pseudo, const Tensor& mask);

// L1 against scanner depth on its mask plus lambda times the gradient term
// against pseudo depth on the pseudo mask. A term with an empty mask is 0.
LossReport edge_aware_loss(const Tensor& pred, const Tensor& gt, const Tensor& pseudo, double lambda,
                           const Tensor& gt_mask, const Tensor& pseudo_mask);

// L1 + lambda_g * gradient term, both against the same ground truth.
LossReport synthetic_loss(const Tensor& pred, const Tensor& gt, double lambda_g, const Tensor& mask);

// DepthMap conveniences; masks are the intersection of the two maps' masks.
double l1_loss(const DepthMap& a, const DepthMap& b);
double grad_loss(const DepthMap& pred, const DepthMap& pseudo);
LossReport edge_aware_loss(const DepthMap& pred, const DepthMap& gt, const DepthMap& pseudo,
                           double lambda = kEdgeLossLambda);

}  // namespace pda
