#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pda/params.hpp"
#include "pda/tensor.hpp"

namespace pda {

// Shape hyper-parameters of the miniature ViT + DPT depth network, including
// the prompt-fusion branch attached to its decoder.
struct NetConfig {
    std::size_t channels = 3;
    std::size_t height = 64;
    std::size_t width = 96;
    std::size_t patch = 8;
    std::size_t embed = 64;
    std::size_t stages = 4;
    std::size_t blocks_per_stage = 1;
    std::size_t heads = 2;
    std::size_t mlp_hidden = 128;
    // Channel count D_i of each reassembled stage, finest stage first.
    std::vector<std::size_t> stage_dims = {16, 32, 64, 64};
    // Common decoder width after each stage projection.
    std::size_t features = 16;
    std::size_t head_hidden = 8;
    // Prompt fusion: width of the shallow conv net and how many stages
    // (finest first) receive a fusion block.
    std::size_t fusion_hidden = 8;
    std::size_t fusion_stages = 4;
    std::uint64_t seed = 0;

    void validate() const;

    std::size_t grid_height() const { return height / patch; }
    std::size_t grid_width() const { return width / patch; }
    std::size_t token_count() const { return grid_height() * grid_width() + 1; }

    // Resampling factor of stage i relative to the token grid: 4, 2, 1, 0.5, ...
    double stage_scale(std::size_t stage) const;

    // Integer parameters in a fixed order, for checkpoints.
    std::vector<double> encode() const;
    static NetConfig decode(std::span<const double> values);

    bool operator==(const NetConfig&) const = default;
};

// Reassembled image-like features, index 0 is the finest stage.
using FeaturePyramid = std::vector<Tensor>;

// Backbone, decoder and head parameters; the fusion group is separate.
ModelParams init_foundation_params(const NetConfig& config);

// Spatial extent of stage i for a token grid of grid_h x grid_w.
std::pair<std::size_t, std::size_t> stage_extent(const NetConfig& config, std::size_t stage, std::size_t grid_h,
                                                 std::size_t grid_w);

// image[C,H,W] -> tokens[(H/p)(W/p)+1, embed]. H and W may differ from the
// configured size as long as both are multiples of the patch size; the
// positional table is then bilinearly resampled.
Tensor patch_embed(const Tensor& image, const ModelParams& params, const NetConfig& config);

// Self-attention sub-block for one transformer block. When weights_out is
// given it receives the per-head attention matrices.
Tensor multi_head_attention(const Tensor& tokens, const ModelParams& params, const std::string& prefix,
                            std::size_t heads, std::vector<Tensor>* weights_out = nullptr);

// All transformer blocks of one stage.
Tensor vit_stage(const Tensor& tokens, std::size_t stage, const ModelParams& params, const NetConfig& config);

// tokens of stage i -> [D_i, h_i, w_i].
Tensor reassemble(const Tensor& tokens, std::size_t stage, std::size_t grid_h, std::size_t grid_w,
                  const ModelParams& params, const NetConfig& config);

// Coarsest-to-finest fusion of the first pyramid.size() stages; returns
// [features, h_0, w_0].
Tensor blend(const FeaturePyramid& pyramid, const ModelParams& params, const NetConfig& config);

// Decoder features -> [1, out_h, out_w] non-negative normalized depth.
Tensor depth_head(const Tensor& features, std::size_t out_h, std::size_t out_w, const ModelParams& params,
                  const NetConfig& config);

// Encoder and reassemble only.
FeaturePyramid encode_pyramid(const Tensor& image, const ModelParams& params, const NetConfig& config);

// Full unprompted pipeline: image[C,H,W] -> depth[1,H,W].
Tensor forward_base(const Tensor& image, const ModelParams& params, const NetConfig& config);

}  // namespace pda
