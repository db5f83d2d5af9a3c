// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "lloom/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lloom::ad {

template <class T>
class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; the tape must
/// outlive every Var that refers to it.
template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    [[nodiscard]] auto value() const -> const Tensor<T>& { return tape->value(*this); }
    [[nodiscard]] auto shape() const -> const Shape& { return value().shape(); }
    [[nodiscard]] auto size() const -> std::size_t { return value().size(); }
};

/// Dynamically recorded computation tape for reverse-mode gradients.
///
/// Nodes are appended in evaluation order, so walking them backwards is a
/// valid topological order. Gradient buffers are allocated lazily and
/// accumulated in a fixed order, which keeps results bitwise reproducible.
template <class T>
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    auto operator=(const Tape&) -> Tape& = delete;

    auto constant(Tensor<T> value) -> Var<T>
    {
        nodes_.push_back(Node{std::move(value), {}, false, {}});
        return {this, nodes_.size() - 1};
    }

    /// A differentiable leaf, typically a model parameter.
    auto leaf(const std::string& name, Tensor<T> value) -> Var<T>
    {
        nodes_.push_back(Node{std::move(value), {}, true, {}});
        const std::size_t id = nodes_.size() - 1;
        leaves_[name] = id;
        return {this, id};
    }

    /// Appends an op result. `backward` runs only if some parent needs a
    /// gradient; it reads grad(self) and accumulates into its parents.
    auto record(Tensor<T> value, std::initializer_list<Var<T>> parents, Backward backward)
        -> Var<T>
    {
        std::vector<std::size_t> ids;
        ids.reserve(parents.size());
        for (const auto& p : parents) {
            ids.push_back(p.id);
        }
        return record(std::move(value), ids, std::move(backward));
    }

    auto record(Tensor<T> value, const std::vector<std::size_t>& parents, Backward backward)
        -> Var<T>
    {
        bool needs = false;
        for (auto id : parents) {
            needs = needs || nodes_[id].requires_grad;
        }
        nodes_.push_back(
            Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
        return {this, nodes_.size() - 1};
    }

    [[nodiscard]] auto value(Var<T> v) const -> const Tensor<T>& { return nodes_[v.id].value; }
    [[nodiscard]] auto value(std::size_t id) const -> const Tensor<T>& { return nodes_[id].value; }

    [[nodiscard]] auto requires_grad(Var<T> v) const -> bool { return nodes_[v.id].requires_grad; }
    [[nodiscard]] auto requires_grad(std::size_t id) const -> bool
    {
        return nodes_[id].requires_grad;
    }

    /// Gradient accumulated for a node, or nullptr when nothing flowed in.
    [[nodiscard]] auto grad(Var<T> v) const -> const Tensor<T>*
    {
        const auto& g = nodes_[v.id].grad;
        return g.empty() ? nullptr : &g;
    }
    [[nodiscard]] auto grad(std::size_t id) const -> const Tensor<T>&
    {
        return nodes_[id].grad;
    }

    /// Mutable gradient buffer for accumulation; zero-initialised on first use.
    auto grad_buffer(std::size_t id) -> Tensor<T>&
    {
        auto& n = nodes_[id];
        if (n.grad.empty()) {
            n.grad = Tensor<T>(n.value.shape());
        }
        return n.grad;
    }
    auto grad_buffer(Var<T> v) -> Tensor<T>& { return grad_buffer(v.id); }

    void backward(Var<T> loss)
    {
        const auto& v = nodes_[loss.id].value;
        if (v.size() != 1) {
            throw Error(ErrorCode::NonScalarLoss,
                        "loss has shape " + shape_string(v.shape()));
        }
        if (!std::isfinite(static_cast<double>(v[0]))) {
            throw Error(ErrorCode::NonFiniteLoss, "loss is not finite");
        }
        for (auto& n : nodes_) {
            n.grad = Tensor<T>();
        }
        grad_buffer(loss.id)[0] = T{1};
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (n.backward && !n.grad.empty()) {
                n.backward(*this, i);
            }
        }
    }

    /// Gradient of a named leaf; zeros (of the leaf's shape) when untouched.
    [[nodiscard]] auto leaf_gradient(const std::string& name) const -> Tensor<T>
    {
        const auto it = leaves_.find(name);
        if (it == leaves_.end()) {
            throw Error(ErrorCode::InvalidArgument, "no leaf named " + name);
        }
        const auto& n = nodes_[it->second];
        return n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad;
    }

    [[nodiscard]] auto has_leaf(const std::string& name) const -> bool
    {
        return leaves_.contains(name);
    }

    [[nodiscard]] auto size() const -> std::size_t { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        Backward backward;
    };

    std::vector<Node> nodes_;
    std::map<std::string, std::size_t> leaves_;
};

} // namespace lloom::ad
