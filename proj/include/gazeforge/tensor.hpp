#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "gazeforge/errors.hpp"

namespace gazeforge {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Dense N-dimensional array of 64-bit reals, row-major. Canonical layout for
// images and feature maps is 4-D (batch, channels, height, width); scalars
// are rank 0. Value-semantic: copies share the immutable payload, mutation
// goes through mutable_values() which unshares first.
//
// A tensor is either detached (a plain value) or recorded on a Tape, in which
// case gradients w.r.t. it are available after Tape::backward. Recorded
// tensors must not outlive their tape.
class Tensor {
  public:
    Tensor();  // rank-0 scalar holding 0

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor from_values(Shape shape, std::vector<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const;

    // 4-D accessors; throw shape_error on other ranks.
    std::size_t batch() const;
    std::size_t channels() const;
    std::size_t height() const;
    std::size_t width() const;

    const std::vector<double>& values() const { return *data_; }
    // Unshares the payload if needed. Throws usage_error on recorded tensors:
    // in-place mutation would corrupt the recorded graph.
    std::vector<double>& mutable_values();

    double scalar_value() const;  // requires numel() == 1
    double at4(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const;

    bool recorded() const { return tape_ != nullptr; }
    bool requires_grad() const { return recorded(); }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }
    Tensor detach() const;

    // Gradient accumulated by the owning tape's backward pass. Detached.
    Tensor grad() const;

    bool all_finite() const;

  private:
    friend class Tape;
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

// Reverse-mode tape. Records one logical thread's forward pass; backward
// walks the recorded ops once, in reverse, accumulating gradients for every
// watched ancestor of the loss. Not copyable; confined to one thread.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Register a leaf. All gradients requested later must trace back to
    // watched leaves.
    Tensor watch(const Tensor& leaf);

    // Op-author interface: assign `result` a node on this tape, then push the
    // backward rule (built with the assigned node id). Rules run in reverse
    // push order; a rule reads its output gradient via grad_buffer and
    // accumulates into input nodes via accum_buffer.
    void record(Tensor& result);
    void push_rule(std::function<void(Tape&)> backward_rule);

    // Runs the backward pass from a scalar loss. Callable exactly once.
    void backward(const Tensor& loss);
    bool backward_done() const { return backward_done_; }

    // Gradient buffer of a node, or nullptr if nothing was accumulated.
    const std::vector<double>* grad_buffer(int node) const;
    // Zero-initialised accumulation buffer for a node.
    std::vector<double>& accum_buffer(int node, std::size_t n);

    std::size_t num_nodes() const { return node_sizes_.size(); }
    std::size_t num_ops() const { return ops_.size(); }

  private:
    int add_node(std::size_t numel);

    std::vector<std::size_t> node_sizes_;
    std::vector<std::unique_ptr<std::vector<double>>> grads_;
    std::vector<std::function<void(Tape&)>> ops_;
    bool backward_done_ = false;
};

// Tape selection for an op: the unique tape of the recorded inputs, or null.
// Throws usage_error when inputs live on different tapes.
Tape* op_tape(std::initializer_list<const Tensor*> inputs);

// ---- elementwise and structural ops (forward + recorded backward) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor offset(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor exp_elem(const Tensor& a);
Tensor log_elem(const Tensor& a);  // throws value_error on nonpositive entries
Tensor clamp_min(const Tensor& a, double lo);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);   // rank-0
Tensor mean(const Tensor& a);  // rank-0

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor matmul(const Tensor& a, const Tensor& b);  // rank-2 [M,K]x[K,N]
Tensor transpose2d(const Tensor& a);

// ---- detached helpers ----

std::uint64_t fnv1a64(const void* data, std::size_t nbytes);
std::uint64_t tensor_checksum(const Tensor& t);

}  // namespace gazeforge
