#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "pda/fusion.hpp"
#include "pda/lidar_sim.hpp"
#include "pda/losses.hpp"
#include "pda/net.hpp"
#include "pda/params.hpp"
#include "pda/scene.hpp"

namespace pda {

enum class PromptSource { anchor, naive };

// Normalization used by an unprompted model: it never sees a metric prompt, so
// its output is read against one fixed depth range covering every scene.
inline const NormScale kUnpromptedScale{0.1, 12.1};

struct TrainConfig {
    NetConfig net;
    std::size_t warmup_steps = 500;
    std::size_t main_steps = 2000;
    std::size_t batch = 2;
    // From-scratch training on a single core: the fine-tuning rates in
    // AdamWConfig leave the model behind the raw prompt after 2500 steps.
    AdamWConfig optim{1e-4, 1e-3};
    // Weight of the gradient term in the synthetic loss.
    double lambda = kEdgeLossLambda;
    std::uint64_t seed = 0;
    std::size_t scene_count = 16;
    // false trains the foundation model alone in both phases.
    bool prompted = true;
    PromptSource prompt_source = PromptSource::anchor;
    LidarSimOptions lidar;
    // Per-sample global scale range of the rendered scenes.
    double scale_min = 0.5;
    double scale_max = 2.0;

    // Throws ConfigError for zero batch/scene count, non-positive learning
    // rates, negative lambda or an invalid scale range.
    void validate() const;
};

// One rendered training or evaluation example.
struct Sample {
    Image rgb;
    DepthMap gt;
    PromptDepth prompt;
};

// Scene layouts at unit scale; layout i only depends on (seed, i).
std::vector<Scene> make_layouts(std::uint64_t seed, std::size_t count);

// Random view of a random layout at a random scale, with its prompt.
Sample draw_sample(const std::vector<Scene>& layouts, std::mt19937_64& rng, const TrainConfig& config);

// Held-out examples from layouts that training never sees (disjoint seeds).
std::vector<Sample> make_eval_set(const TrainConfig& config, std::size_t scenes, std::size_t views_per_scene,
                                  std::uint64_t eval_seed);

// A trained depth model with everything needed to run it.
struct DepthModel {
    NetConfig config;
    ModelParams params;
    bool prompted = true;

    // Metric depth at the image resolution. Prompted models normalize the
    // prompt, run the prompted forward pass and denormalize with the same
    // scale; unprompted models ignore the prompt and use kUnpromptedScale.
    DepthMap predict(const Image& image, const PromptDepth* prompt) const;
};

struct TrainMeta {
    double lambda = 0.0;
    double lr_backbone = 0.0;
    double lr_other = 0.0;
    std::size_t warmup_steps = 0;
    std::size_t main_steps = 0;
    std::size_t batch = 0;
    std::uint64_t seed = 0;
    bool prompted = true;
};

struct TrainResult {
    DepthModel model;
    // Mean batch loss of every step, warm-up first.
    std::vector<double> losses;
    TrainMeta meta;
};

using TrainLogger = std::function<void(std::size_t step, const char* phase, double loss)>;

// Warm-up trains the foundation model on normalized ground truth; the main
// phase attaches zero-initialized fusion blocks (prompted runs) and trains
// everything with the synthetic loss. Deterministic for a given config.
// Throws NumericError if the loss stops being finite.
TrainResult train(const TrainConfig& config, const TrainLogger& logger = {});

Checkpoint to_checkpoint(const DepthModel& model, const TrainMeta& meta);
// Throws LoadError when the tensors do not match the stored configuration.
DepthModel model_from_checkpoint(const Checkpoint& checkpoint);
TrainMeta meta_from_checkpoint(const Checkpoint& checkpoint);

// Metric prediction from a stored checkpoint.
DepthMap infer(const Checkpoint& checkpoint, const Image& image, const PromptDepth& prompt);

// Mean per-sample L1 (meters) of the model over valid ground-truth pixels.
double evaluate_l1(const DepthModel& model, const std::vector<Sample>& samples);

}  // namespace pda
