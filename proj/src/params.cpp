#include "pda/params.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <optional>

#include "pda/error.hpp"

namespace pda {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'A', 'C'};

std::optional<ParamGroup> parse_group(std::string_view prefix) {
    if (prefix == "backbone") return ParamGroup::backbone;
    if (prefix == "decoder") return ParamGroup::decoder;
    if (prefix == "head") return ParamGroup::head;
    if (prefix == "fusion") return ParamGroup::fusion;
    return std::nullopt;
}

std::optional<ParamGroup> group_of(const std::string& name) {
    const auto slash = name.find('/');
    if (slash == std::string::npos) return std::nullopt;
    return parse_group(std::string_view(name).substr(0, slash));
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T take() {
        need(sizeof(T));
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return value;
    }

    std::string take_string(std::size_t length) {
        need(length);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), length);
        pos_ += length;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw LoadError("checkpoint truncated");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string_view group_name(ParamGroup group) {
    switch (group) {
        case ParamGroup::backbone: return "backbone";
        case ParamGroup::decoder: return "decoder";
        case ParamGroup::head: return "head";
        case ParamGroup::fusion: return "fusion";
    }
    return "unknown";
}

Tensor& ModelParams::add(ParamGroup group, const std::string& path, Tensor value) {
    std::string name = std::string(group_name(group)) + "/" + path;
    if (index_.contains(name)) throw ContractError("duplicate parameter " + name);
    value.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.push_back(NamedParam{std::move(name), group, std::move(value)});
    return entries_.back().value;
}

bool ModelParams::contains(const std::string& name) const { return index_.contains(name); }

const Tensor& ModelParams::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter " + name);
    return entries_[it->second].value;
}

Tensor& ModelParams::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter " + name);
    return entries_[it->second].value;
}

const Tensor& ModelParams::get(ParamGroup group, const std::string& path) const {
    return get(std::string(group_name(group)) + "/" + path);
}

std::size_t ModelParams::count(ParamGroup group) const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.group == group ? 1 : 0;
    return n;
}

std::size_t ModelParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
}

void ModelParams::zero_grads() {
    for (auto& e : entries_) e.value.clear_grad();
}

ModelParams ModelParams::clone() const {
    ModelParams copy;
    for (const auto& e : entries_) {
        Tensor t = e.value.detach();
        t.set_requires_grad(true);
        copy.index_.emplace(e.name, copy.entries_.size());
        copy.entries_.push_back(NamedParam{e.name, e.group, std::move(t)});
    }
    return copy;
}

void ModelParams::merge(const ModelParams& other) {
    for (const auto& e : other.entries_) {
        if (index_.contains(e.name)) throw ContractError("duplicate parameter " + e.name);
        index_.emplace(e.name, entries_.size());
        entries_.push_back(e);
    }
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.tensors.size()));
    for (const auto& [name, tensor] : checkpoint.tensors) {
        if (name.size() > 0xFFFF) throw ContractError("checkpoint name too long: " + name);
        if (tensor.rank() > 0xFF) throw ContractError("checkpoint tensor rank too large: " + name);
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.rank()));
        for (std::size_t extent : tensor.shape()) {
            if (extent > 0xFFFFFFFFu) throw ContractError("checkpoint extent too large: " + name);
            put_le<std::uint32_t>(out, static_cast<std::uint32_t>(extent));
        }
        for (double v : tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    if (in.take_string(4) != std::string(kMagic, 4)) throw LoadError("not a PDAC checkpoint");
    const auto version = in.take<std::uint32_t>();
    if (version != kCheckpointVersion) throw LoadError("unsupported checkpoint version " + std::to_string(version));
    const auto count = in.take<std::uint32_t>();
    Checkpoint checkpoint;
    checkpoint.tensors.reserve(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto name_len = in.take<std::uint16_t>();
        std::string name = in.take_string(name_len);
        const auto rank = in.take<std::uint8_t>();
        Shape shape(rank);
        for (auto& extent : shape) extent = in.take<std::uint32_t>();
        std::vector<double> values(shape_numel(shape));
        for (double& v : values) v = std::bit_cast<double>(in.take<std::uint64_t>());
        checkpoint.tensors.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    if (!in.done()) throw LoadError("trailing bytes after checkpoint records");
    return checkpoint;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    const auto bytes = encode_checkpoint(checkpoint);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

Checkpoint to_checkpoint(const ModelParams& params) {
    Checkpoint checkpoint;
    for (const auto& e : params.entries()) checkpoint.tensors.emplace_back(e.name, e.value.detach());
    return checkpoint;
}

ModelParams params_from_checkpoint(const Checkpoint& checkpoint) {
    ModelParams params;
    for (const auto& [name, tensor] : checkpoint.tensors) {
        auto group = group_of(name);
        if (!group) continue;
        params.add(*group, name.substr(name.find('/') + 1), tensor.detach());
    }
    return params;
}

// --- AdamW ------------------------------------------------------------------

AdamW::AdamW(AdamWConfig config) : config_(config) {
    if (!(config_.lr_backbone > 0.0) || !(config_.lr_other > 0.0)) {
        throw ParameterError("AdamW: learning rates must be positive");
    }
    if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
        throw ParameterError("AdamW: betas must lie in [0, 1)");
    }
    if (config_.weight_decay < 0.0) throw ParameterError("AdamW: weight decay must be non-negative");
}

double AdamW::learning_rate(ParamGroup group) const {
    return group == ParamGroup::backbone ? config_.lr_backbone : config_.lr_other;
}

void AdamW::step(ModelParams& params, std::uint64_t step) {
    if (step < 1) throw ContractError("AdamW::step: step counts from 1");
    const double t = static_cast<double>(step);
    const double correction1 = 1.0 - std::pow(config_.beta1, t);
    const double correction2 = 1.0 - std::pow(config_.beta2, t);
    for (auto& e : params.entries()) {
        if (!e.value.has_grad()) continue;
        auto& m = moments_[e.name];
        auto values = e.value.mutable_data();
        auto grads = e.value.grad();
        if (m.first.size() != values.size()) {
            m.first.assign(values.size(), 0.0);
            m.second.assign(values.size(), 0.0);
        }
        const double lr = learning_rate(e.group);
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = grads[i];
            m.first[i] = config_.beta1 * m.first[i] + (1.0 - config_.beta1) * g;
            m.second[i] = config_.beta2 * m.second[i] + (1.0 - config_.beta2) * g * g;
            values[i] -= lr * config_.weight_decay * values[i];
            const double m_hat = m.first[i] / correction1;
            const double v_hat = m.second[i] / correction2;
            values[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

}  // namespace pda
