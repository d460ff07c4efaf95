#include "stpt/num/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace stpt {

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_node_counter{1};
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

namespace detail {

std::uint64_t next_node_id() { return g_node_counter.fetch_add(1); }

void accumulate(TensorNode& n, const Arr& g) {
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) n.grad = Arr::Zero(n.value.size());
  n.grad += g;
}

}  // namespace detail

static std::shared_ptr<detail::TensorNode> make_leaf(Shape shape, Arr value, bool requires_grad) {
  for (auto e : shape) {
    if (e <= 0) throw std::invalid_argument("Tensor: non-positive extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != value.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(value.size()) + " values");
  }
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = detail::next_node_id();
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Arr v = Arr::Zero(shape_numel(shape));
  return Tensor(make_leaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Arr v = Arr::Constant(shape_numel(shape), value);
  return Tensor(make_leaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> v, bool requires_grad) {
  Arr a = Eigen::Map<const Arr>(v.data(), static_cast<Eigen::Index>(v.size()));
  return Tensor(make_leaf(std::move(shape), std::move(a), requires_grad));
}

Tensor Tensor::from_array(Shape shape, Arr v, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(make_leaf(Shape{}, Arr::Constant(1, v), requires_grad));
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::runtime_error("Tensor: undefined handle");
  return node_->shape;
}

std::int64_t Tensor::extent(int axis) const {
  const Shape& s = shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw std::out_of_range("Tensor::extent: axis " + std::to_string(axis) + " out of range for " +
                            shape_str(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const {
  if (!node_) throw std::runtime_error("Tensor: undefined handle");
  return node_->value.size();
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const {
  if (!node_) throw std::runtime_error("Tensor: undefined handle");
  return node_->inputs.empty() && !node_->backprop;
}

const char* Tensor::op_name() const {
  if (!node_) throw std::runtime_error("Tensor: undefined handle");
  return node_->op;
}

std::uint64_t Tensor::node_id() const {
  if (!node_) throw std::runtime_error("Tensor: undefined handle");
  return node_->id;
}

double Tensor::scalar_value() const {
  if (numel() != 1) throw std::invalid_argument("Tensor::scalar_value: tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

double Tensor::at(std::int64_t i) const {
  if (i < 0 || i >= numel()) throw std::out_of_range("Tensor::at: flat index out of range");
  return node_->value[static_cast<Eigen::Index>(i)];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
  if (rank() != 2) throw std::invalid_argument("Tensor::at(r,c): tensor is not rank-2: " + shape_str(shape()));
  if (r < 0 || r >= rows() || c < 0 || c >= cols()) throw std::out_of_range("Tensor::at: index out of range");
  return node_->value[static_cast<Eigen::Index>(r * cols() + c)];
}

const Arr& Tensor::array() const {
  if (!node_) throw std::runtime_error("Tensor: undefined handle");
  return node_->value;
}

Arr& Tensor::mutable_array() {
  if (!node_) throw std::runtime_error("Tensor: undefined handle");
  if (!is_leaf()) throw std::runtime_error("Tensor: in-place mutation is restricted to leaf tensors");
  return node_->value;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() > 0; }

const Arr& Tensor::grad_array() const {
  if (!has_grad()) throw std::runtime_error("Tensor: gradient absent; run backward first");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.resize(0);
}

Tensor Tensor::detach() const {
  if (!node_) throw std::runtime_error("Tensor: undefined handle");
  return Tensor(make_leaf(node_->shape, node_->value, false));
}

Eigen::Map<const RowMat> Tensor::mat() const {
  if (rank() != 2) throw std::invalid_argument("Tensor::mat: tensor is not rank-2: " + shape_str(shape()));
  return Eigen::Map<const RowMat>(node_->value.data(), rows(), cols());
}

Eigen::Map<const Eigen::VectorXd> Tensor::vec() const {
  if (!node_) throw std::runtime_error("Tensor: undefined handle");
  return Eigen::Map<const Eigen::VectorXd>(node_->value.data(), node_->value.size());
}

Tensor make_op_tensor(Shape shape, Arr value, const char* op, std::vector<Tensor> inputs,
                      std::function<void(detail::TensorNode&)> backprop) {
  if (shape_numel(shape) != value.size()) {
    throw std::logic_error(std::string("op ") + op + ": result shape/value mismatch");
  }
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) {
      if (t.requires_grad()) {
        needs_grad = true;
        break;
      }
    }
  }
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  n->id = detail::next_node_id();
  if (needs_grad) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& t : inputs) n->inputs.push_back(t.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  auto root = loss.node();
  if (!root) throw std::runtime_error("backward: undefined tensor");
  if (root->numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(root->shape));
  }
  if (root->consumed) {
    throw std::runtime_error("backward: graph already consumed by a previous backward call");
  }
  if (!root->requires_grad) {
    throw std::runtime_error("backward: loss does not require grad (no recorded graph)");
  }

  // Node ids are assigned monotonically at construction, so every input
  // precedes its consumer; descending-id order is a reverse topological order.
  // Strong references keep interior nodes alive while the recording is torn down.
  std::vector<std::shared_ptr<detail::TensorNode>> nodes;
  std::unordered_set<detail::TensorNode*> seen;
  std::vector<std::shared_ptr<detail::TensorNode>> stack{root};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in);
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a->id > b->id; });

  root->grad = Arr::Constant(1, 1.0);
  for (const auto& n : nodes) {
    if (n->backprop && n->grad.size() > 0) n->backprop(*n);
  }
  // Consume the recording: closures and saved activations are released.
  for (const auto& n : nodes) {
    n->consumed = true;
    n->backprop = nullptr;
    n->inputs.clear();
  }
}

}  // namespace stpt
