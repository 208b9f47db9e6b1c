// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace cmae {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

namespace {
std::atomic<std::uint64_t> g_sequence{0};
thread_local bool t_grad_mode = true;
}  // namespace

std::uint64_t next_sequence_id() { return g_sequence.fetch_add(1, std::memory_order_relaxed) + 1; }

bool grad_mode_enabled() { return t_grad_mode; }

void set_grad_mode(bool enabled) { t_grad_mode = enabled; }

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->seq = next_sequence_id();
  const bool needs_grad =
      grad_mode_enabled() && std::any_of(parents.begin(), parents.end(), [](const auto& p) {
        return p && p->requires_grad;
      });
  if (needs_grad) {
    node->requires_grad = true;
    node->leaf = false;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

template Tensor<float> make_result(Shape, std::vector<float>, std::vector<std::shared_ptr<Node<float>>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    std::vector<std::shared_ptr<Node<double>>>,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::grad_mode_enabled()) { detail::set_grad_mode(false); }

NoGradGuard::~NoGradGuard() { detail::set_grad_mode(previous_); }

namespace {

template <typename T>
std::shared_ptr<detail::Node<T>> new_leaf(Shape shape, std::vector<T> data) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->seq = detail::next_sequence_id();
  return node;
}

void require_defined(bool defined) {
  if (!defined) throw std::logic_error("tensor: use of an undefined tensor");
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape) {
  const std::size_t n = shape_numel(shape);
  node_ = new_leaf<T>(std::move(shape), std::vector<T>(n, T{0}));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : node_(new_leaf<T>(std::move(shape), std::move(data))) {}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  require_defined(defined());
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(int axis) const {
  const auto& s = shape();
  const int r = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[static_cast<std::size_t>(a)];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  require_defined(defined());
  return node_->value.size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  require_defined(defined());
  return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  require_defined(defined());
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("tensor: item() on shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return defined() && node_->requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  require_defined(defined());
  if (!node_->leaf) throw std::logic_error("tensor: requires_grad can only be set on leaves");
  node_->requires_grad = flag;
  return *this;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return defined() && node_->leaf;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return defined() && node_->grad.size() == node_->value.size() && !node_->value.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  require_defined(defined());
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  require_defined(defined());
  return node_->grad_buffer();
}

template <typename T>
void Tensor<T>::zero_grad() {
  require_defined(defined());
  std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template <typename T>
void Tensor<T>::backward() const {
  require_defined(defined());
  if (node_->value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(node_->shape));
  }
  if (!node_->requires_grad) {
    throw std::logic_error("backward: loss does not depend on any tensor that requires grad");
  }

  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<const NodeT*> seen;
  std::vector<NodeT*> pending{node_.get()};
  seen.insert(node_.get());
  while (!pending.empty()) {
    NodeT* n = pending.back();
    pending.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p && p->requires_grad && seen.insert(p.get()).second) pending.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const NodeT* a, const NodeT* b) { return a->seq > b->seq; });

  for (NodeT* n : order) {
    if (!n->leaf) n->grad.assign(n->value.size(), T{0});
  }
  node_->grad_buffer()[0] += T{1};
  for (NodeT* n : order) {
    if (n->backward) n->backward(*n);
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  require_defined(defined());
  return Tensor(node_->shape, node_->value);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace cmae
