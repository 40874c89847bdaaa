#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mgpms/tensor/tensor.hpp"

namespace mgpms {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
  // Whether the L2 penalty applies to this array; `element_decay`, when
  // non-empty, overrides it per scalar.
  bool decay = true;
  std::vector<double> element_decay;
};

/// Ordered collection of named parameter arrays. The order is fixed at
/// construction and defines the flattened layout used by the optimizer and
/// the checkpoint.
class ParameterStore {
 public:
  void add(std::string name, Shape shape, std::vector<double> values, bool decay = true);

  const NamedArray& get(std::string_view name) const;
  NamedArray& get(std::string_view name);
  bool contains(std::string_view name) const;
  std::span<const NamedArray> arrays() const { return arrays_; }
  std::span<NamedArray> arrays() { return arrays_; }

  std::size_t scalar_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
  /// Per-scalar L2 mask matching flatten().
  std::vector<double> decay_mask() const;

 private:
  std::vector<NamedArray> arrays_;
};

/// Graph tensors for one forward/backward pass over a store's values.
class BoundParameters {
 public:
  BoundParameters(const ParameterStore& store, bool requires_grad);
  /// Binds caller-built tensors, one per store array in store order.
  BoundParameters(const ParameterStore& store, std::vector<Tensor> tensors);

  const Tensor& operator[](std::string_view name) const;
  /// Gradients concatenated in store order (zeros where none arrived).
  std::vector<double> flat_grad() const;
  const std::vector<Tensor>& tensors() const { return tensors_; }

 private:
  const ParameterStore* store_;
  std::vector<Tensor> tensors_;
};

}  // namespace mgpms
