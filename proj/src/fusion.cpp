#include "pda/fusion.hpp"

#include <cmath>
#include <random>

#include "pda/error.hpp"
#include "pda/ops.hpp"

namespace pda {

namespace {

constexpr double kNormalizedSlack = 1e-6;

std::string stage_prefix(std::size_t stage) { return "fusion/s" + std::to_string(stage); }

}  // namespace

void PromptDepth::validate(std::size_t image_h, std::size_t image_w) const {
    if (depth.height == 0 || depth.width == 0) throw InputError("prompt is empty");
    if (depth.height > image_h || depth.width > image_w) {
        throw InputError("prompt resolution exceeds the image resolution");
    }
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (depth.valid[i] && !(depth.depth[i] > 0.0)) throw InputError("prompt holds a non-positive valid depth");
    }
}

ModelParams init_fusion_params(const NetConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ull);
    ModelParams params;
    const std::size_t hidden = config.fusion_hidden;
    auto conv_init = [&](std::size_t in, std::size_t out, std::size_t k) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> w(out * in * k * k);
        for (double& v : w) v = dist(rng);
        std::vector<double> b(out);
        for (double& v : b) v = dist(rng);
        return std::pair{Tensor::from({out, in, k, k}, std::move(w)), Tensor::from({out}, std::move(b))};
    };
    for (std::size_t s = 0; s < config.fusion_stages; ++s) {
        const std::string p = "s" + std::to_string(s);
        auto [w1, b1] = conv_init(1, hidden, 3);
        params.add(ParamGroup::fusion, p + ".conv1.w", std::move(w1));
        params.add(ParamGroup::fusion, p + ".conv1.b", std::move(b1));
        auto [w2, b2] = conv_init(hidden, hidden, 3);
        params.add(ParamGroup::fusion, p + ".conv2.w", std::move(w2));
        params.add(ParamGroup::fusion, p + ".conv2.b", std::move(b2));
        params.add(ParamGroup::fusion, p + ".proj.w", Tensor::zeros({config.stage_dims[s], hidden, 1, 1}));
        params.add(ParamGroup::fusion, p + ".proj.b", Tensor::zeros({config.stage_dims[s]}));
    }
    return params;
}

Tensor prepare_prompt(const PromptDepth& prompt, const NormScale& scale) {
    const DepthMap filled = prompt.depth.valid_count() == prompt.depth.size() ? prompt.depth
                                                                               : fill_nearest_valid(prompt.depth);
    return normalize_depth(filled, scale).to_tensor();
}

Tensor fuse_block(const Tensor& prompt, const Tensor& features, std::size_t stage, const ModelParams& params,
                  const NetConfig& config) {
    if (prompt.rank() != 3 || prompt.dim(0) != 1) {
        throw ShapeError("fuse_block: prompt must be [1,H_L,W_L], got " + shape_str(prompt.shape()));
    }
    if (features.rank() != 3 || stage >= config.fusion_stages || features.dim(0) != config.stage_dims[stage]) {
        throw ShapeError("fuse_block: features " + shape_str(features.shape()) + " do not match stage " +
                         std::to_string(stage));
    }
    for (double v : prompt.data()) {
        if (v > 1.0 + kNormalizedSlack || v < -kNormalizedSlack) {
            throw ContractError("fuse_block: prompt is not normalized to [0, 1]");
        }
    }
    FlopsCounter::Scope scope("fusion");
    const std::string p = stage_prefix(stage);
    Tensor x = prompt;
    if (prompt.dim(1) != features.dim(1) || prompt.dim(2) != features.dim(2)) {
        x = ops::bilinear_resize(prompt, features.dim(1), features.dim(2));
    }
    x = ops::relu(ops::conv2d(x, params.get(p + ".conv1.w"), params.get(p + ".conv1.b")));
    x = ops::relu(ops::conv2d(x, params.get(p + ".conv2.w"), params.get(p + ".conv2.b")));
    x = ops::conv2d(x, params.get(p + ".proj.w"), params.get(p + ".proj.b"));
    return ops::add(features, x);
}

Tensor forward_prompted(const Tensor& image, const Tensor& prompt, const ModelParams& params,
                        const NetConfig& config) {
    FeaturePyramid pyramid = encode_pyramid(image, params, config);
    for (std::size_t s = 0; s < config.fusion_stages; ++s) {
        pyramid[s] = fuse_block(prompt, pyramid[s], s, params, config);
    }
    Tensor features = blend(pyramid, params, config);
    return depth_head(features, image.dim(1), image.dim(2), params, config);
}

FlopsReport measure_flops(const NetConfig& config, std::size_t prompt_h, std::size_t prompt_w) {
    config.validate();
    if (prompt_h == 0) prompt_h = std::max<std::size_t>(1, config.height / 2);
    if (prompt_w == 0) prompt_w = std::max<std::size_t>(1, config.width / 2);
    ModelParams params = init_foundation_params(config);
    params.merge(init_fusion_params(config));
    const Tensor image = Tensor::full({config.channels, config.height, config.width}, 0.5);
    const Tensor prompt = Tensor::full({1, prompt_h, prompt_w}, 0.5);

    FlopsReport report;
    {
        FlopsCounter counter;
        forward_base(image, params, config);
        report.base = counter.total();
    }
    {
        FlopsCounter counter;
        forward_prompted(image, prompt, params, config);
        report.prompted = counter.total();
    }
    report.ratio = static_cast<double>(report.prompted) / static_cast<double>(report.base) - 1.0;
    return report;
}

double fusion_overhead(const NetConfig& config) { return measure_flops(config).ratio; }

}  // namespace pda
