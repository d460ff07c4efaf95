#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace stpt {

using Shape = std::vector<std::int64_t>;
using Arr = Eigen::ArrayXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  Arr value;
  Arr grad;  // size 0 means absent
  bool requires_grad = false;
  bool consumed = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void(TensorNode&)> backprop;

  std::int64_t numel() const { return value.size(); }
};

// Adds g into n.grad, allocating a zero buffer on first use.
void accumulate(TensorNode& n, const Arr& g);

std::uint64_t next_node_id();

}  // namespace detail

// Dense 64-bit tensor handle with reverse-mode autodiff. Copies share the
// underlying node; kernels live in ops.hpp as free functions.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> v, bool requires_grad = false);
  static Tensor from_array(Shape shape, Arr v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  std::int64_t extent(int axis) const;
  std::int64_t numel() const;
  // Rank-2 helpers.
  std::int64_t rows() const { return extent(0); }
  std::int64_t cols() const { return extent(1); }

  bool requires_grad() const;
  bool is_leaf() const;
  const char* op_name() const;
  std::uint64_t node_id() const;

  double scalar_value() const;  // numel == 1
  double at(std::int64_t i) const;
  double at(std::int64_t r, std::int64_t c) const;

  const Arr& array() const;
  Arr& mutable_array();  // leaves only; used by the optimizer and init

  bool has_grad() const;
  const Arr& grad_array() const;  // throws if absent
  void zero_grad();               // drops the grad buffer

  // Value copy detached from any graph.
  Tensor detach() const;

  Eigen::Map<const RowMat> mat() const;  // rank-2 view
  Eigen::Map<const Eigen::VectorXd> vec() const;  // flat view

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor make_op_tensor(Shape, Arr, const char*, std::vector<Tensor>,
                               std::function<void(detail::TensorNode&)>);
};

// Internal factory used by the op kernels: wires inputs and the backward
// closure only when grad mode is on and some input requires grad.
Tensor make_op_tensor(Shape shape, Arr value, const char* op, std::vector<Tensor> inputs,
                      std::function<void(detail::TensorNode&)> backprop);

// Reverse-mode sweep from a scalar loss. Populates grads of every
// requires-grad tensor reachable through the recorded ops, then releases the
// recording; a second sweep over the same graph is a usage error.
void backward(const Tensor& loss);

bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

}  // namespace stpt
