#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace geogen::nn {

using Shape = std::vector<std::int64_t>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// A graph node. Values are dense row-major doubles; grads are allocated on
// first accumulation.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;
    std::size_t tracked_bytes = 0;

    Node(Shape s, std::vector<double> v);
    ~Node();
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    std::vector<double>& grad_buffer();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::int64_t dim(int axis) const;
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(node_->value.size()); }

    std::span<double> data() { return node_->value; }
    std::span<const double> data() const { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }
    double item() const;
    double at(std::initializer_list<std::int64_t> index) const;

    // Empty span when no gradient has been accumulated.
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad.clear(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }

    // Copy of the value with no graph history.
    Tensor detach() const;

    // Reverse-mode accumulation from a scalar output.
    void backward();

    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

// Graph recording is disabled while a guard is alive on the current thread.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Builds a result node. The backward closure is attached only when recording
// is on and at least one input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> backward_fn);

// Bytes currently held by tensor values and gradients, and the high-water mark.
struct MemoryStats {
    std::size_t current_bytes;
    std::size_t peak_bytes;
};
MemoryStats memory_stats();
void reset_peak_memory();

}  // namespace geogen::nn
