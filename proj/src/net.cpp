#include "pda/net.hpp"

#include <cmath>
#include <random>

#include "pda/error.hpp"
#include "pda/ops.hpp"

namespace pda {

namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return Tensor::from(std::move(shape), std::move(v));
}

Tensor normal(Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return Tensor::from(std::move(shape), std::move(v));
}

// Linear layer stored as w[in,out], b[out]; default uniform fan-in init.
void add_linear(ModelParams& params, ParamGroup group, const std::string& path, std::size_t in, std::size_t out,
                std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    params.add(group, path + ".w", uniform({in, out}, bound, rng));
    params.add(group, path + ".b", uniform({out}, bound, rng));
}

void add_conv(ModelParams& params, ParamGroup group, const std::string& path, std::size_t in, std::size_t out,
              std::size_t kernel, bool bias, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
    params.add(group, path + ".w", uniform({out, in, kernel, kernel}, bound, rng));
    if (bias) params.add(group, path + ".b", uniform({out}, bound, rng));
}

Tensor linear(const Tensor& x, const ModelParams& params, const std::string& name) {
    return ops::add_row_bias(ops::matmul(x, params.get(name + ".w")), params.get(name + ".b"));
}

Tensor conv(const Tensor& x, const ModelParams& params, const std::string& name) {
    const Tensor bias = params.contains(name + ".b") ? params.get(name + ".b") : Tensor();
    return ops::conv2d(x, params.get(name + ".w"), bias);
}

std::string block_prefix(std::size_t stage, std::size_t block) {
    return "backbone/s" + std::to_string(stage) + ".b" + std::to_string(block);
}

// Pre-activation residual conv unit: x + conv(relu(conv(relu(x)))).
Tensor residual_conv_unit(const Tensor& x, const ModelParams& params, const std::string& prefix) {
    Tensor h = conv(ops::relu(x), params, prefix + ".conv1");
    h = conv(ops::relu(h), params, prefix + ".conv2");
    return ops::add(x, h);
}

}  // namespace

void NetConfig::validate() const {
    if (channels == 0 || patch == 0 || embed == 0 || heads == 0 || mlp_hidden == 0 || features == 0 ||
        head_hidden == 0 || blocks_per_stage == 0) {
        throw ConfigError("NetConfig: extents must be positive");
    }
    if (height % patch != 0 || width % patch != 0 || height == 0 || width == 0) {
        throw ConfigError("NetConfig: image size must be a positive multiple of the patch size");
    }
    if (stages < 2) throw ConfigError("NetConfig: at least two stages are required");
    if (stage_dims.size() != stages) throw ConfigError("NetConfig: one feature dimension per stage is required");
    for (std::size_t d : stage_dims) {
        if (d == 0) throw ConfigError("NetConfig: stage dimension must be positive");
    }
    if (embed % heads != 0) throw ConfigError("NetConfig: embed dim must be divisible by the head count");
    if (features < 2) throw ConfigError("NetConfig: decoder width must be at least 2");
    if (fusion_stages > stages) throw ConfigError("NetConfig: more fusion stages than decoder stages");
    if (fusion_stages > 0 && fusion_hidden == 0) throw ConfigError("NetConfig: fusion width must be positive");
}

double NetConfig::stage_scale(std::size_t stage) const { return 4.0 / std::pow(2.0, static_cast<double>(stage)); }

std::vector<double> NetConfig::encode() const {
    std::vector<double> v = {static_cast<double>(channels),     static_cast<double>(height),
                             static_cast<double>(width),        static_cast<double>(patch),
                             static_cast<double>(embed),        static_cast<double>(blocks_per_stage),
                             static_cast<double>(heads),        static_cast<double>(mlp_hidden),
                             static_cast<double>(features),     static_cast<double>(head_hidden),
                             static_cast<double>(fusion_hidden), static_cast<double>(fusion_stages),
                             static_cast<double>(stages)};
    for (std::size_t d : stage_dims) v.push_back(static_cast<double>(d));
    return v;
}

NetConfig NetConfig::decode(std::span<const double> v) {
    constexpr std::size_t kFixed = 13;
    if (v.size() < kFixed) throw LoadError("NetConfig record too short");
    for (double x : v) {
        if (!(x >= 0.0) || x != std::floor(x)) throw LoadError("NetConfig record holds a non-integral value");
    }
    auto at = [&](std::size_t i) { return static_cast<std::size_t>(v[i]); };
    NetConfig c;
    c.channels = at(0);
    c.height = at(1);
    c.width = at(2);
    c.patch = at(3);
    c.embed = at(4);
    c.blocks_per_stage = at(5);
    c.heads = at(6);
    c.mlp_hidden = at(7);
    c.features = at(8);
    c.head_hidden = at(9);
    c.fusion_hidden = at(10);
    c.fusion_stages = at(11);
    c.stages = at(12);
    if (v.size() != kFixed + c.stages) throw LoadError("NetConfig record has the wrong stage count");
    c.stage_dims.assign(c.stages, 0);
    for (std::size_t i = 0; i < c.stages; ++i) c.stage_dims[i] = at(kFixed + i);
    c.validate();
    return c;
}

ModelParams init_foundation_params(const NetConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    ModelParams params;
    const std::size_t e = config.embed;

    add_conv(params, ParamGroup::backbone, "patch", config.channels, e, config.patch, true, rng);
    params.add(ParamGroup::backbone, "cls", normal({1, e}, 0.02, rng));
    params.add(ParamGroup::backbone, "pos", normal({config.token_count(), e}, 0.02, rng));
    for (std::size_t s = 0; s < config.stages; ++s) {
        for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
            const std::string p = "s" + std::to_string(s) + ".b" + std::to_string(b);
            params.add(ParamGroup::backbone, p + ".ln1.g", Tensor::full({e}, 1.0));
            params.add(ParamGroup::backbone, p + ".ln1.b", Tensor::zeros({e}));
            add_linear(params, ParamGroup::backbone, p + ".attn.qkv", e, 3 * e, rng);
            add_linear(params, ParamGroup::backbone, p + ".attn.out", e, e, rng);
            params.add(ParamGroup::backbone, p + ".ln2.g", Tensor::full({e}, 1.0));
            params.add(ParamGroup::backbone, p + ".ln2.b", Tensor::zeros({e}));
            add_linear(params, ParamGroup::backbone, p + ".mlp.fc1", e, config.mlp_hidden, rng);
            add_linear(params, ParamGroup::backbone, p + ".mlp.fc2", config.mlp_hidden, e, rng);
        }
    }

    const std::size_t f = config.features;
    for (std::size_t s = 0; s < config.stages; ++s) {
        const std::string i = std::to_string(s);
        add_linear(params, ParamGroup::decoder, "reassemble" + i, e, config.stage_dims[s], rng);
        add_conv(params, ParamGroup::decoder, "proj" + i, config.stage_dims[s], f, 3, false, rng);
        add_conv(params, ParamGroup::decoder, "rcu" + i + ".conv1", f, f, 3, true, rng);
        add_conv(params, ParamGroup::decoder, "rcu" + i + ".conv2", f, f, 3, true, rng);
    }

    const std::size_t half = f / 2;
    add_conv(params, ParamGroup::head, "conv1", f, half, 3, true, rng);
    add_conv(params, ParamGroup::head, "conv2", half, config.head_hidden, 3, true, rng);
    add_conv(params, ParamGroup::head, "conv3", config.head_hidden, 1, 1, true, rng);
    // Start the non-negative output in the middle of the normalized range.
    params.get("head/conv3.b").mutable_data()[0] = 0.5;
    return params;
}

std::pair<std::size_t, std::size_t> stage_extent(const NetConfig& config, std::size_t stage, std::size_t grid_h,
                                                 std::size_t grid_w) {
    const double r = config.stage_scale(stage);
    auto scaled = [r](std::size_t n) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(n) * r)));
    };
    return {scaled(grid_h), scaled(grid_w)};
}

Tensor patch_embed(const Tensor& image, const ModelParams& params, const NetConfig& config) {
    if (image.rank() != 3 || image.dim(0) != config.channels) {
        throw ConfigError("patch_embed: image " + shape_str(image.shape()) + " does not match " +
                          std::to_string(config.channels) + " channels");
    }
    const std::size_t h = image.dim(1);
    const std::size_t w = image.dim(2);
    if (h == 0 || w == 0 || h % config.patch != 0 || w % config.patch != 0) {
        throw ConfigError("patch_embed: image size " + shape_str(image.shape()) +
                          " is not a multiple of the patch size " + std::to_string(config.patch));
    }
    FlopsCounter::Scope scope("backbone");
    const std::size_t gh = h / config.patch;
    const std::size_t gw = w / config.patch;
    const std::size_t e = config.embed;

    Tensor grid = ops::conv2d(image, params.get("backbone/patch.w"), params.get("backbone/patch.b"),
                              {.stride = config.patch, .padding = 0});
    Tensor patches = ops::transpose(ops::reshape(grid, {e, gh * gw}));
    Tensor tokens = ops::concat_rows({params.get("backbone/cls"), patches});

    Tensor pos = params.get("backbone/pos");
    if (gh != config.grid_height() || gw != config.grid_width()) {
        Tensor table = ops::slice_rows(pos, 1, config.grid_height() * config.grid_width());
        table = ops::reshape(ops::transpose(table), {e, config.grid_height(), config.grid_width()});
        table = ops::transpose(ops::reshape(ops::bilinear_resize(table, gh, gw), {e, gh * gw}));
        pos = ops::concat_rows({ops::slice_rows(pos, 0, 1), table});
    }
    return ops::add(tokens, pos);
}

Tensor multi_head_attention(const Tensor& tokens, const ModelParams& params, const std::string& prefix,
                            std::size_t heads, std::vector<Tensor>* weights_out) {
    const std::size_t e = tokens.dim(1);
    if (heads == 0 || e % heads != 0) throw ShapeError("multi_head_attention: embed dim not divisible by heads");
    const std::size_t dh = e / heads;
    Tensor qkv = linear(tokens, params, prefix + ".qkv");
    std::vector<Tensor> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor q = ops::slice_cols(qkv, h * dh, dh);
        Tensor k = ops::slice_cols(qkv, e + h * dh, dh);
        Tensor v = ops::slice_cols(qkv, 2 * e + h * dh, dh);
        Tensor scores = ops::scale(ops::matmul(q, ops::transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
        Tensor weights = ops::softmax(scores, 1);
        if (weights_out) weights_out->push_back(weights);
        outputs.push_back(ops::matmul(weights, v));
    }
    Tensor merged = heads == 1 ? outputs.front() : ops::concat_cols(outputs);
    return linear(merged, params, prefix + ".out");
}

Tensor vit_stage(const Tensor& tokens, std::size_t stage, const ModelParams& params, const NetConfig& config) {
    if (tokens.rank() != 2 || tokens.dim(1) != config.embed) {
        throw ShapeError("vit_stage: tokens " + shape_str(tokens.shape()) + " do not have embed dim " +
                         std::to_string(config.embed));
    }
    FlopsCounter::Scope scope("backbone");
    Tensor x = tokens;
    for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
        const std::string p = block_prefix(stage, b);
        Tensor h = ops::layer_norm(x, params.get(p + ".ln1.g"), params.get(p + ".ln1.b"));
        x = ops::add(x, multi_head_attention(h, params, p + ".attn", config.heads));
        h = ops::layer_norm(x, params.get(p + ".ln2.g"), params.get(p + ".ln2.b"));
        h = linear(ops::gelu(linear(h, params, p + ".mlp.fc1")), params, p + ".mlp.fc2");
        x = ops::add(x, h);
    }
    return x;
}

Tensor reassemble(const Tensor& tokens, std::size_t stage, std::size_t grid_h, std::size_t grid_w,
                  const ModelParams& params, const NetConfig& config) {
    if (tokens.rank() != 2 || tokens.dim(0) != grid_h * grid_w + 1) {
        throw ShapeError("reassemble: " + shape_str(tokens.shape()) + " tokens do not form a " +
                         std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid plus class token");
    }
    if (stage >= config.stages) throw ShapeError("reassemble: stage index out of range");
    FlopsCounter::Scope scope("decoder");
    const std::size_t d = config.stage_dims[stage];
    Tensor patches = ops::slice_rows(tokens, 1, grid_h * grid_w);
    Tensor projected = linear(patches, params, "decoder/reassemble" + std::to_string(stage));
    Tensor grid = ops::reshape(ops::transpose(projected), {d, grid_h, grid_w});
    const auto [h, w] = stage_extent(config, stage, grid_h, grid_w);
    if (h == grid_h && w == grid_w) return grid;
    return ops::bilinear_resize(grid, h, w);
}

Tensor blend(const FeaturePyramid& pyramid, const ModelParams& params, const NetConfig& config) {
    if (pyramid.empty() || pyramid.size() > config.stages) {
        throw ContractError("blend: pyramid must hold between 1 and " + std::to_string(config.stages) + " stages");
    }
    for (std::size_t s = 0; s < pyramid.size(); ++s) {
        if (!pyramid[s].defined()) throw ContractError("blend: stage " + std::to_string(s) + " is missing");
    }
    FlopsCounter::Scope scope("decoder");
    auto project = [&](std::size_t s) {
        return ops::conv2d(pyramid[s], params.get("decoder/proj" + std::to_string(s) + ".w"), Tensor());
    };
    std::size_t s = pyramid.size() - 1;
    Tensor path = residual_conv_unit(project(s), params, "decoder/rcu" + std::to_string(s));
    while (s-- > 0) {
        const Tensor& target = pyramid[s];
        path = ops::bilinear_resize(path, target.dim(1), target.dim(2));
        path = ops::add(path, project(s));
        path = residual_conv_unit(path, params, "decoder/rcu" + std::to_string(s));
    }
    return path;
}

Tensor depth_head(const Tensor& features, std::size_t out_h, std::size_t out_w, const ModelParams& params,
                  const NetConfig& config) {
    if (features.rank() != 3 || features.dim(0) != config.features) {
        throw ShapeError("depth_head: features " + shape_str(features.shape()) + " do not have " +
                         std::to_string(config.features) + " channels");
    }
    FlopsCounter::Scope scope("head");
    Tensor x = conv(features, params, "head/conv1");
    x = ops::bilinear_resize(x, out_h, out_w);
    x = ops::relu(conv(x, params, "head/conv2"));
    x = conv(x, params, "head/conv3");
    return ops::relu(x);
}

FeaturePyramid encode_pyramid(const Tensor& image, const ModelParams& params, const NetConfig& config) {
    Tensor tokens = patch_embed(image, params, config);
    const std::size_t gh = image.dim(1) / config.patch;
    const std::size_t gw = image.dim(2) / config.patch;
    FeaturePyramid pyramid;
    pyramid.reserve(config.stages);
    for (std::size_t s = 0; s < config.stages; ++s) {
        tokens = vit_stage(tokens, s, params, config);
        pyramid.push_back(reassemble(tokens, s, gh, gw, params, config));
    }
    return pyramid;
}

Tensor forward_base(const Tensor& image, const ModelParams& params, const NetConfig& config) {
    FeaturePyramid pyramid = encode_pyramid(image, params, config);
    Tensor features = blend(pyramid, params, config);
    return depth_head(features, image.dim(1), image.dim(2), params, config);
}

}  // namespace pda
