#include "pda/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "pda/error.hpp"

namespace pda {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local FlopsCounter* g_active_counter = nullptr;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    auto impl = std::make_shared<Impl>();
    impl->data.assign(shape_numel(shape), value);
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("Tensor::from: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    }
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor::Impl& Tensor::impl() const {
    if (!impl_) throw ContractError("use of an undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

std::span<const double> Tensor::data() const { return impl().data; }

std::span<double> Tensor::mutable_data() { return impl().data; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl().data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    impl().requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl().grad; }

std::span<double> Tensor::grad_buffer() {
    auto& i = impl();
    if (i.grad.empty()) i.grad.assign(i.data.size(), 0.0);
    return i.grad;
}

void Tensor::zero_grad() {
    auto& i = impl();
    if (!i.grad.empty()) std::fill(i.grad.begin(), i.grad.end(), 0.0);
}

void Tensor::clear_grad() { impl().grad.clear(); }

Tensor Tensor::clone() const {
    auto copy = std::make_shared<Impl>(impl());
    return Tensor(std::move(copy));
}

Tensor Tensor::detach() const {
    auto copy = std::make_shared<Impl>();
    copy->shape = impl().shape;
    copy->data = impl().data;
    return Tensor(std::move(copy));
}

// --- Tape -------------------------------------------------------------------

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::string op, Tensor output, BackwardFn fn) {
    entries_.push_back(Entry{std::move(op), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss, const std::function<void(std::size_t)>& on_visit) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward: loss must be a scalar tensor");
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward: loss is not on the tape");
    }
    Tensor seed = loss;
    auto g = seed.grad_buffer();
    g[0] += 1.0;
    for (std::size_t k = entries_.size(); k-- > 0;) {
        auto& entry = entries_[k];
        if (!entry.output.has_grad()) continue;
        if (on_visit) on_visit(k);
        entry.backward(entry.output.grad());
    }
}

// --- FlopsCounter -----------------------------------------------------------

FlopsCounter::FlopsCounter() : previous_(g_active_counter) { g_active_counter = this; }

FlopsCounter::~FlopsCounter() { g_active_counter = previous_; }

FlopsCounter* FlopsCounter::active() { return g_active_counter; }

FlopsCounter::Scope::Scope(std::string name) : counter_(g_active_counter) {
    if (counter_) counter_->scopes_.push_back(std::move(name));
}

FlopsCounter::Scope::~Scope() {
    if (counter_) counter_->scopes_.pop_back();
}

void FlopsCounter::add(std::uint64_t multiply_adds) {
    const std::string& name = scopes_.empty() ? std::string("main") : scopes_.back();
    counts_[name] += multiply_adds;
}

std::uint64_t FlopsCounter::total() const {
    std::uint64_t sum = 0;
    for (const auto& [name, count] : counts_) sum += count;
    return sum;
}

std::uint64_t FlopsCounter::get(const std::string& name) const {
    auto it = counts_.find(name);
    return it == counts_.end() ? 0 : it->second;
}

void count_flops(std::uint64_t multiply_adds) {
    if (g_active_counter) g_active_counter->add(multiply_adds);
}

}  // namespace pda
