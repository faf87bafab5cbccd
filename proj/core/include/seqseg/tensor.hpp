#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace seqseg {

// Dimension sizes, outermost first. Data is stored row-major (last axis
// contiguous). Layouts used by the network: [C,H,W] for 2D feature volumes
// and [C,T,H,W] for spatio-temporal volumes.
using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool shape_eq(const Shape& a, const Shape& b);

/// Dense 64-bit tensor with reverse-mode automatic differentiation.
///
/// Tensor is a cheap value-semantic handle onto a shared node. Ops (see
/// ops.hpp) build an acyclic graph of nodes; backward() on a scalar result
/// walks that graph once in reverse topological order and accumulates
/// gradients into every node that requires them.
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until needed, then same size as data
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(Node&)> backward_fn;  // null for leaves

    std::size_t numel() const { return data.size(); }
    void ensure_grad() {
      if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return node_->data.size(); }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Reverse-mode differentiation from a scalar. Every node reachable from
  /// this one gets its backward function invoked exactly once; leaf tensors
  /// with requires_grad end up with a populated grad buffer.
  void backward();

  /// Detached copy: same values, fresh leaf node with no graph history.
  Tensor detach_copy() const;

  std::shared_ptr<Node> node() const { return node_; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  /// Builds a graph node from op results. `parents` are the differentiable
  /// inputs; `backward_fn` pulls from node.grad and accumulates into the
  /// parents' grads. The node participates in the graph only if some parent
  /// requires a gradient.
  static Tensor make_op_result(Shape shape, std::vector<double> data,
                               std::vector<Tensor> parents,
                               std::function<void(Node&)> backward_fn);

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

}  // namespace seqseg
