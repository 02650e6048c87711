#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pda {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float64 array. Copies share storage; use clone() for a deep
// copy. Values written by an op are never modified afterwards, only parameter
// leaves are updated in place by the optimizer.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t flat_index) const { return data()[flat_index]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on = true);

    bool has_grad() const;
    std::span<const double> grad() const;
    // Allocates a zero-filled gradient buffer on first use.
    std::span<double> grad_buffer();
    void zero_grad();
    void clear_grad();

    Tensor clone() const;
    // Same values, no gradient bookkeeping.
    Tensor detach() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    struct Impl {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
    };

    explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
    Impl& impl() const;

    std::shared_ptr<Impl> impl_;
};

// Define-by-run record of differentiable ops. Constructing a Tape makes it the
// active tape of the calling thread until it is destroyed; ops executed while
// it is active and that touch a requires_grad input append an entry.
class Tape {
public:
    // Receives the upstream gradient of the op output.
    using BackwardFn = std::function<void(std::span<const double> grad_out)>;

    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(std::string op, Tensor output, BackwardFn fn);

    // Seeds d(loss)/d(loss) = 1 and replays entries in reverse. The optional
    // observer sees the index of every entry visited.
    void backward(const Tensor& loss, const std::function<void(std::size_t)>& on_visit = {});

    std::size_t size() const { return entries_.size(); }
    const std::string& op_name(std::size_t index) const { return entries_.at(index).op; }

private:
    struct Entry {
        std::string op;
        Tensor output;
        BackwardFn backward;
    };

    std::vector<Entry> entries_;
    Tape* previous_ = nullptr;
};

// Multiply-add accountant. Like Tape, it becomes the active counter of the
// thread for its lifetime; ops charge their cost to the innermost scope name.
class FlopsCounter {
public:
    FlopsCounter();
    ~FlopsCounter();
    FlopsCounter(const FlopsCounter&) = delete;
    FlopsCounter& operator=(const FlopsCounter&) = delete;

    static FlopsCounter* active();

    class Scope {
    public:
        explicit Scope(std::string name);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        FlopsCounter* counter_;
    };

    void add(std::uint64_t multiply_adds);
    std::uint64_t total() const;
    std::uint64_t get(const std::string& name) const;
    const std::map<std::string, std::uint64_t>& by_name() const { return counts_; }

private:
    std::map<std::string, std::uint64_t> counts_;
    std::vector<std::string> scopes_;
    FlopsCounter* previous_ = nullptr;
};

// Charges the active counter, if any.
void count_flops(std::uint64_t multiply_adds);

}  // namespace pda
