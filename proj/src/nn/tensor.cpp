#include "geogen/nn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace geogen::nn {

namespace {

thread_local bool t_grad_enabled = true;

std::atomic<std::size_t> g_current_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};

void track_alloc(std::size_t bytes) {
    const std::size_t now = g_current_bytes.fetch_add(bytes) + bytes;
    std::size_t peak = g_peak_bytes.load();
    while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now)) {
    }
}

void track_free(std::size_t bytes) { g_current_bytes.fetch_sub(bytes); }

}  // namespace

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
        n *= d;
    }
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Node::Node(Shape s, std::vector<double> v) : shape(std::move(s)), value(std::move(v)) {
    if (numel(shape) != static_cast<std::int64_t>(value.size())) {
        throw ShapeError("value size " + std::to_string(value.size()) + " does not match shape " +
                         to_string(shape));
    }
    tracked_bytes = value.size() * sizeof(double);
    track_alloc(tracked_bytes);
}

Node::~Node() { track_free(tracked_bytes); }

std::vector<double>& Node::grad_buffer() {
    if (grad.size() != value.size()) {
        grad.assign(value.size(), 0.0);
        const std::size_t bytes = grad.size() * sizeof(double);
        tracked_bytes += bytes;
        track_alloc(bytes);
    }
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = numel(shape);
    auto node = std::make_shared<Node>(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    auto node = std::make_shared<Node>(std::move(shape), std::move(values));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

std::int64_t Tensor::dim(int axis) const {
    const int n = ndim();
    if (axis < 0) axis += n;
    if (axis < 0 || axis >= n) throw ShapeError("axis out of range for shape " + to_string(shape()));
    return node_->shape[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
    if (node_->value.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw ShapeError("index rank mismatch for shape " + to_string(s));
    std::int64_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i < 0 || i >= s[axis]) throw ShapeError("index out of range for shape " + to_string(s));
        flat = flat * s[axis] + i;
        ++axis;
    }
    return node_->value[static_cast<std::size_t>(flat)];
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void Tensor::backward() {
    if (node_->value.size() != 1) throw ShapeError("backward() requires a scalar output");
    if (!node_->requires_grad) throw std::logic_error("backward() on a tensor that does not require grad");

    // Iterative post-order DFS yields a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>(std::move(shape), std::move(value));
    if (t_grad_enabled) {
        const bool any = std::any_of(inputs.begin(), inputs.end(),
                                     [](const Tensor& t) { return t.defined() && t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(inputs.size());
            for (const auto& t : inputs) node->parents.push_back(t.node());
            node->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

MemoryStats memory_stats() { return {g_current_bytes.load(), g_peak_bytes.load()}; }

void reset_peak_memory() { g_peak_bytes.store(g_current_bytes.load()); }

}  // namespace geogen::nn
