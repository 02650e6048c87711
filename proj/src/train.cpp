#include "pda/train.hpp"

#include <cmath>
#include <string>

#include "pda/error.hpp"
#include "pda/ops.hpp"

namespace pda {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

PromptDepth make_prompt(const Frame& frame, std::mt19937_64& rng, const TrainConfig& config) {
    if (config.prompt_source == PromptSource::naive) {
        const std::size_t ph = config.lidar.prompt_height ? config.lidar.prompt_height : frame.depth.height / 2;
        const std::size_t pw = config.lidar.prompt_width ? config.lidar.prompt_width : frame.depth.width / 2;
        return naive_downsample(frame.depth, ph, pw);
    }
    return simulate_lidar(frame.depth, frame.rgb, rng(), config.lidar);
}

Sample sample_from_layout(const Scene& layout, std::mt19937_64& rng, const TrainConfig& config) {
    std::uniform_real_distribution<double> scale(config.scale_min, config.scale_max);
    const Scene scene = layout.scaled(scale(rng));
    const CameraModel cam = sample_view(scene, rng, config.net.width, config.net.height);
    Frame frame = render_frame(scene, cam);
    PromptDepth prompt = make_prompt(frame, rng, config);
    return Sample{std::move(frame.rgb), std::move(frame.depth), std::move(prompt)};
}

NormScale target_scale(const Sample& sample, bool prompted) {
    return prompted ? NormScale::from_depth(sample.prompt.depth) : kUnpromptedScale;
}

// Mean synthetic loss of a batch as one scalar on the active tape.
Tensor batch_loss(const std::vector<Sample>& batch, const ModelParams& params, const NetConfig& net,
                  bool use_prompt, bool normalize_by_prompt, double lambda) {
    Tensor total;
    for (const auto& s : batch) {
        const NormScale scale = target_scale(s, normalize_by_prompt);
        const Tensor image = s.rgb.to_tensor();
        const Tensor pred = use_prompt ? forward_prompted(image, prepare_prompt(s.prompt, scale), params, net)
                                       : forward_base(image, params, net);
        const Tensor target = normalize_depth(s.gt, scale).to_tensor();
        const LossReport report = synthetic_loss(pred, target, lambda, s.gt.mask_tensor());
        total = total.defined() ? ops::add(total, report.total_tensor) : report.total_tensor;
    }
    return ops::scale(total, 1.0 / static_cast<double>(batch.size()));
}

void add_named(const std::string& name, ModelParams& out, const Tensor& value, ParamGroup group) {
    out.add(group, name.substr(name.find('/') + 1), value.detach());
}

const Tensor& require(const Checkpoint& ckpt, const std::string& name) {
    const Tensor* t = ckpt.find(name);
    if (!t) throw LoadError("checkpoint: missing record " + name);
    return *t;
}

double scalar_record(const Checkpoint& ckpt, const std::string& name) {
    const Tensor& t = require(ckpt, name);
    if (t.numel() != 1) throw LoadError("checkpoint: record " + name + " must hold one value");
    return t.data()[0];
}

}  // namespace

void TrainConfig::validate() const {
    net.validate();
    if (batch == 0) throw ConfigError("train: batch size must be positive");
    if (scene_count == 0) throw ConfigError("train: scene count must be positive");
    if (!(optim.lr_backbone > 0.0) || !(optim.lr_other > 0.0)) {
        throw ConfigError("train: learning rates must be positive");
    }
    if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be non-negative");
    if (!(scale_min > 0.0) || scale_max < scale_min) throw ConfigError("train: invalid scale range");
}

std::vector<Scene> make_layouts(std::uint64_t seed, std::size_t count) {
    std::vector<Scene> layouts;
    layouts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        layouts.push_back(gen_scene(splitmix(seed * 1000003ULL + i), SceneOptions{1.0, 1.0}));
    }
    return layouts;
}

Sample draw_sample(const std::vector<Scene>& layouts, std::mt19937_64& rng, const TrainConfig& config) {
    if (layouts.empty()) throw InputError("draw_sample: no scene layouts");
    const std::size_t idx = static_cast<std::size_t>(rng() % layouts.size());
    return sample_from_layout(layouts[idx], rng, config);
}

std::vector<Sample> make_eval_set(const TrainConfig& config, std::size_t scenes, std::size_t views_per_scene,
                                  std::uint64_t eval_seed) {
    // Offset keeps held-out layouts away from the training seeds.
    const auto layouts = make_layouts(splitmix(eval_seed) ^ 0x5EED0FF5E7ULL, scenes);
    std::mt19937_64 rng(splitmix(eval_seed + 17));
    std::vector<Sample> out;
    for (const auto& layout : layouts) {
        for (std::size_t v = 0; v < views_per_scene; ++v) out.push_back(sample_from_layout(layout, rng, config));
    }
    return out;
}

DepthMap DepthModel::predict(const Image& image, const PromptDepth* prompt) const {
    const Tensor x = image.to_tensor();
    if (!prompted) return denormalize(DepthMap::from_tensor(forward_base(x, params, config)), kUnpromptedScale);
    if (!prompt) throw InputError("predict: prompted model needs a prompt");
    prompt->validate(image.height, image.width);
    const NormScale scale = NormScale::from_depth(prompt->depth);
    const Tensor out = forward_prompted(x, prepare_prompt(*prompt, scale), params, config);
    return denormalize(DepthMap::from_tensor(out), scale);
}

TrainResult train(const TrainConfig& config, const TrainLogger& logger) {
    config.validate();
    NetConfig net = config.net;
    net.seed = config.seed;

    TrainResult result;
    result.meta = TrainMeta{config.lambda,       config.optim.lr_backbone, config.optim.lr_other,
                            config.warmup_steps, config.main_steps,        config.batch,
                            config.seed,         config.prompted};
    ModelParams params = init_foundation_params(net);
    const auto layouts = make_layouts(config.seed, config.scene_count);
    std::mt19937_64 rng(splitmix(config.seed ^ 0xD1CEULL));

    auto run_phase = [&](std::size_t steps, bool use_prompt, const char* phase) {
        AdamW optim(config.optim);
        for (std::size_t step = 1; step <= steps; ++step) {
            std::vector<Sample> batch;
            for (std::size_t b = 0; b < config.batch; ++b) batch.push_back(draw_sample(layouts, rng, config));
            double value = 0.0;
            {
                Tape tape;
                const Tensor loss = batch_loss(batch, params, net, use_prompt, config.prompted, config.lambda);
                value = loss.item();
                if (!std::isfinite(value)) {
                    throw NumericError(std::string("train: loss diverged in ") + phase + " at step " +
                                       std::to_string(step));
                }
                tape.backward(loss);
            }
            optim.step(params, step);
            params.zero_grads();
            result.losses.push_back(value);
            if (logger) logger(step, phase, value);
        }
    };

    run_phase(config.warmup_steps, false, "warmup");
    if (config.prompted) params.merge(init_fusion_params(net));
    run_phase(config.main_steps, config.prompted, "main");

    result.model = DepthModel{net, std::move(params), config.prompted};
    return result;
}

Checkpoint to_checkpoint(const DepthModel& model, const TrainMeta& meta) {
    Checkpoint ckpt = to_checkpoint(model.params);
    const auto cfg = model.config.encode();
    ckpt.tensors.emplace_back("meta/config", Tensor::from({cfg.size()}, cfg));
    ckpt.tensors.emplace_back("meta/prompted", Tensor::scalar(model.prompted ? 1.0 : 0.0));
    ckpt.tensors.emplace_back("meta/lambda", Tensor::scalar(meta.lambda));
    ckpt.tensors.emplace_back("meta/lr_backbone", Tensor::scalar(meta.lr_backbone));
    ckpt.tensors.emplace_back("meta/lr_other", Tensor::scalar(meta.lr_other));
    ckpt.tensors.emplace_back(
        "meta/schedule", Tensor::from({3}, {static_cast<double>(meta.warmup_steps), static_cast<double>(meta.main_steps),
                                            static_cast<double>(meta.batch)}));
    // Split so both halves are exact in a double.
    ckpt.tensors.emplace_back("meta/seed", Tensor::from({2}, {static_cast<double>(meta.seed >> 32),
                                                              static_cast<double>(meta.seed & 0xFFFFFFFFULL)}));
    return ckpt;
}

TrainMeta meta_from_checkpoint(const Checkpoint& checkpoint) {
    TrainMeta meta;
    meta.lambda = scalar_record(checkpoint, "meta/lambda");
    meta.lr_backbone = scalar_record(checkpoint, "meta/lr_backbone");
    meta.lr_other = scalar_record(checkpoint, "meta/lr_other");
    meta.prompted = scalar_record(checkpoint, "meta/prompted") != 0.0;
    const Tensor& sched = require(checkpoint, "meta/schedule");
    const Tensor& seed = require(checkpoint, "meta/seed");
    if (sched.numel() != 3 || seed.numel() != 2) throw LoadError("checkpoint: malformed schedule or seed record");
    meta.warmup_steps = static_cast<std::size_t>(sched.data()[0]);
    meta.main_steps = static_cast<std::size_t>(sched.data()[1]);
    meta.batch = static_cast<std::size_t>(sched.data()[2]);
    meta.seed = (static_cast<std::uint64_t>(seed.data()[0]) << 32) | static_cast<std::uint64_t>(seed.data()[1]);
    return meta;
}

DepthModel model_from_checkpoint(const Checkpoint& checkpoint) {
    DepthModel model;
    try {
        model.config = NetConfig::decode(require(checkpoint, "meta/config").data());
    } catch (const ConfigError& e) {
        throw LoadError(std::string("checkpoint: bad configuration record: ") + e.what());
    }
    model.prompted = scalar_record(checkpoint, "meta/prompted") != 0.0;
    // The initialization seed lives in the training record, not the shape record.
    model.config.seed = meta_from_checkpoint(checkpoint).seed;

    ModelParams expected = init_foundation_params(model.config);
    if (model.prompted) expected.merge(init_fusion_params(model.config));
    const ModelParams stored = params_from_checkpoint(checkpoint);
    if (stored.entries().size() != expected.entries().size()) {
        throw LoadError("checkpoint: expected " + std::to_string(expected.entries().size()) + " parameters, found " +
                        std::to_string(stored.entries().size()));
    }
    for (const auto& e : expected.entries()) {
        if (!stored.contains(e.name)) throw LoadError("checkpoint: missing parameter " + e.name);
        const Tensor& value = stored.get(e.name);
        if (value.shape() != e.value.shape()) {
            throw LoadError("checkpoint: parameter " + e.name + " has shape " + shape_str(value.shape()) +
                            ", configuration expects " + shape_str(e.value.shape()));
        }
        add_named(e.name, model.params, value, e.group);
    }
    return model;
}

DepthMap infer(const Checkpoint& checkpoint, const Image& image, const PromptDepth& prompt) {
    const DepthModel model = model_from_checkpoint(checkpoint);
    if (image.height != model.config.height || image.width != model.config.width) {
        throw InputError("infer: image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                         ", model expects " + std::to_string(model.config.height) + "x" +
                         std::to_string(model.config.width));
    }
    return model.predict(image, &prompt);
}

double evaluate_l1(const DepthModel& model, const std::vector<Sample>& samples) {
    if (samples.empty()) throw InputError("evaluate_l1: no samples");
    double total = 0.0;
    for (const auto& s : samples) total += l1_loss(model.predict(s.rgb, &s.prompt), s.gt);
    return total / static_cast<double>(samples.size());
}

}  // namespace pda
