#include "llie/autograd.hpp"

#include <unordered_set>

namespace llie {

namespace {
thread_local bool g_grad_enabled = true;
thread_local NonsmoothProbe* g_probe = nullptr;
}  // namespace

Tensor& Node::grad_buffer() {
    if (grad.empty() && value.size() != 0) {
        grad = Tensor(value.shape());
    }
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Var make_op_result(Tensor value, std::vector<Var> parents, const char* op, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = op;
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& p : parents) {
            any = any || (p.defined() && p.requires_grad());
        }
        if (any) {
            node->requires_grad = true;
            node->backward = std::move(fn);
            node->parents.reserve(parents.size());
            for (auto& p : parents) {
                node->parents.push_back(p.ptr());
            }
        }
    }
    return Var(std::move(node));
}

void backward(const Var& root) {
    if (!root.defined()) {
        throw UsageError("backward on undefined variable");
    }
    if (root.value().size() != 1) {
        throw UsageError("backward root must be a scalar, got " + root.shape().str());
    }
    if (!root.requires_grad()) {
        return;
    }

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    visited.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) {
            n->backward(*n);
        }
    }
    for (Node* n : order) {
        if (!n->is_leaf()) {
            n->backward = nullptr;
            n->parents.clear();
            if (n != root.node()) {
                n->grad = Tensor();
            }
        }
    }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

NonsmoothProbeScope::NonsmoothProbeScope(NonsmoothProbe* probe) : previous_(g_probe) {
    g_probe = probe;
}
NonsmoothProbeScope::~NonsmoothProbeScope() { g_probe = previous_; }

NonsmoothProbe* active_nonsmooth_probe() { return g_probe; }

}  // namespace llie
