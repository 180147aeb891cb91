#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "llie/tensor.hpp"

namespace llie {

struct Node;
using BackwardFn = std::function<void(Node& self)>;

/// One vertex of the dynamically recorded computation graph.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;
    const char* op = "leaf";

    /// Gradient storage, zero-filled on first access.
    Tensor& grad_buffer();
    bool is_leaf() const { return !backward; }
};

/// Handle to a graph node. Copies alias the same node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    /// Direct write access, meant for optimizer updates and tests on leaves.
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    /// Accumulated gradient; empty tensor when no gradient reached this node.
    const Tensor& grad() const { return node_->grad; }
    void zero_grad() { node_->grad = Tensor(); }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& ptr() const { return node_; }

private:
    friend Var make_op_result(Tensor, std::vector<Var>, const char*, BackwardFn);
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;
};

/// Creates the output node of a differentiable op. The graph edge and the
/// backward closure are kept only when gradients are enabled and some
/// parent requires a gradient.
Var make_op_result(Tensor value, std::vector<Var> parents, const char* op, BackwardFn fn);

/// Reverse-mode sweep from a scalar root. Seeds d(root)/d(root) = 1 and
/// accumulates into every reachable node that requires a gradient. The
/// interior graph is released afterwards.
void backward(const Var& root);

bool grad_enabled();

/// Disables graph recording for the lifetime of the guard (per thread).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Records the branch taken at every non-differentiable point (activation
/// kinks, absolute values, clamps) evaluated while installed. Two forward
/// passes with equal signatures ran through the same smooth piece of the
/// function, so a finite difference across them is a valid derivative
/// estimate.
class NonsmoothProbe {
public:
    void record(bool branch) {
        signature_ = (signature_ ^ (branch ? 0x9e3779b97f4a7c15ull : 0x51afd7ed558ccd1dull)) *
                     0x100000001b3ull;
        ++count_;
    }
    std::uint64_t signature() const { return signature_; }
    std::size_t count() const { return count_; }
    void reset() {
        signature_ = 0xcbf29ce484222325ull;
        count_ = 0;
    }

private:
    std::uint64_t signature_ = 0xcbf29ce484222325ull;
    std::size_t count_ = 0;
};

/// Installs `probe` for the current thread until the guard is destroyed.
class NonsmoothProbeScope {
public:
    explicit NonsmoothProbeScope(NonsmoothProbe* probe);
    ~NonsmoothProbeScope();
    NonsmoothProbeScope(const NonsmoothProbeScope&) = delete;
    NonsmoothProbeScope& operator=(const NonsmoothProbeScope&) = delete;

private:
    NonsmoothProbe* previous_;
};

NonsmoothProbe* active_nonsmooth_probe();

}  // namespace llie
