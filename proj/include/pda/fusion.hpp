#pragma once

#include <cstdint>

#include "pda/depth_map.hpp"
#include "pda/losses.hpp"
#include "pda/net.hpp"

namespace pda {

// Low-resolution metric depth used as the prompt (meters, with mask).
struct PromptDepth {
    DepthMap depth;

    // H_L <= H, W_L <= W and every valid depth > 0.
    void validate(std::size_t image_h, std::size_t image_w) const;
};

// One fusion block per prompted stage: two 3x3 convs with relu, then a 1x1
// projection to D_i whose weight and bias start at exactly zero.
ModelParams init_fusion_params(const NetConfig& config);

// Fills prompt holes from the nearest valid pixel and normalizes to [0, 1];
// returns [1, H_L, W_L].
Tensor prepare_prompt(const PromptDepth& prompt, const NormScale& scale);

// resize(prompt -> H_i x W_i) -> shallow conv -> zero-init projection -> + F_i.
// The prompt must already be normalized (values within [0, 1]).
Tensor fuse_block(const Tensor& prompt, const Tensor& features, std::size_t stage, const ModelParams& params,
                  const NetConfig& config);

// Foundation forward pass with fuse_block applied to every prompted stage
// between reassemble and blend. params must hold the base and fusion groups.
Tensor forward_prompted(const Tensor& image, const Tensor& prompt, const ModelParams& params,
                        const NetConfig& config);

struct FlopsReport {
    std::uint64_t base = 0;
    std::uint64_t prompted = 0;
    // prompted / base - 1.
    double ratio = 0.0;
};

// Multiply-add counts of both forward passes at the configured image size
// and a prompt of prompt_h x prompt_w (defaults to half the image size).
FlopsReport measure_flops(const NetConfig& config, std::size_t prompt_h = 0, std::size_t prompt_w = 0);
double fusion_overhead(const NetConfig& config);

}  // namespace pda
