#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pda/tensor.hpp"

namespace pda {

enum class ParamGroup { backbone, decoder, head, fusion };

std::string_view group_name(ParamGroup group);

struct NamedParam {
    std::string name;
    ParamGroup group;
    Tensor value;
};

// Trainable tensors of a model. Names are "<group>/<path>", so the group of a
// parameter survives a checkpoint round trip.
class ModelParams {
public:
    Tensor& add(ParamGroup group, const std::string& path, Tensor value);

    bool contains(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(ParamGroup group, const std::string& path) const;

    std::vector<NamedParam>& entries() { return entries_; }
    const std::vector<NamedParam>& entries() const { return entries_; }

    std::size_t count(ParamGroup group) const;
    std::size_t scalar_count() const;
    void zero_grads();

    // Deep copy with fresh storage and no gradients.
    ModelParams clone() const;
    // Appends every entry of other (names must not collide).
    void merge(const ModelParams& other);

private:
    std::vector<NamedParam> entries_;
    std::map<std::string, std::size_t> index_;
};

// Ordered named tensors as stored in a "PDAC" file.
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

Checkpoint to_checkpoint(const ModelParams& params);
// Picks every entry whose name starts with a known group prefix; "meta/"
// records are ignored.
ModelParams params_from_checkpoint(const Checkpoint& checkpoint);

struct AdamWConfig {
    double lr_backbone = 5e-6;
    double lr_other = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled-weight-decay Adam with one learning rate for the backbone group and
// another for every other group. Moment buffers live in the optimizer.
class AdamW {
public:
    explicit AdamW(AdamWConfig config);

    // step is the 1-based update count used for bias correction.
    void step(ModelParams& params, std::uint64_t step);

    const AdamWConfig& config() const { return config_; }
    double learning_rate(ParamGroup group) const;

private:
    struct Moments {
        std::vector<double> first;
        std::vector<double> second;
    };

    AdamWConfig config_;
    std::map<std::string, Moments> moments_;
};

}  // namespace pda
