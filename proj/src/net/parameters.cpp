#include "mgpms/net/parameters.hpp"

#include <algorithm>

#include "mgpms/error.hpp"

namespace mgpms {

void ParameterStore::add(std::string name, Shape shape, std::vector<double> values, bool decay) {
  if (numel(shape) != values.size()) throw ShapeError("parameter " + name + " has inconsistent shape");
  if (contains(name)) throw ConfigError("duplicate parameter " + name);
  arrays_.push_back({std::move(name), std::move(shape), std::move(values), decay, {}});
}

const NamedArray& ParameterStore::get(std::string_view name) const {
  for (const auto& a : arrays_)
    if (a.name == name) return a;
  throw ConfigError("unknown parameter " + std::string(name));
}

NamedArray& ParameterStore::get(std::string_view name) {
  return const_cast<NamedArray&>(std::as_const(*this).get(name));
}

bool ParameterStore::contains(std::string_view name) const {
  return std::any_of(arrays_.begin(), arrays_.end(), [&](const auto& a) { return a.name == name; });
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& a : arrays_) n += a.values.size();
  return n;
}

std::vector<double> ParameterStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto& a : arrays_) flat.insert(flat.end(), a.values.begin(), a.values.end());
  return flat;
}

void ParameterStore::unflatten(std::span<const double> flat) {
  if (flat.size() != scalar_count()) throw ShapeError("flat parameter vector has the wrong length");
  std::size_t offset = 0;
  for (auto& a : arrays_) {
    std::copy_n(flat.begin() + offset, a.values.size(), a.values.begin());
    offset += a.values.size();
  }
}

std::vector<double> ParameterStore::decay_mask() const {
  std::vector<double> mask;
  mask.reserve(scalar_count());
  for (const auto& a : arrays_) {
    if (!a.element_decay.empty()) {
      mask.insert(mask.end(), a.element_decay.begin(), a.element_decay.end());
    } else {
      mask.insert(mask.end(), a.values.size(), a.decay ? 1.0 : 0.0);
    }
  }
  return mask;
}

BoundParameters::BoundParameters(const ParameterStore& store, bool requires_grad) : store_(&store) {
  tensors_.reserve(store.arrays().size());
  for (const auto& a : store.arrays()) {
    tensors_.push_back(requires_grad ? Tensor::parameter(a.shape, a.values) : Tensor::constant(a.shape, a.values));
  }
}

BoundParameters::BoundParameters(const ParameterStore& store, std::vector<Tensor> tensors)
    : store_(&store), tensors_(std::move(tensors)) {
  const auto arrays = store.arrays();
  if (tensors_.size() != arrays.size()) throw ShapeError("one tensor per parameter array required");
  for (std::size_t i = 0; i < arrays.size(); ++i)
    if (tensors_[i].shape() != arrays[i].shape) throw ShapeError("tensor shape differs for " + arrays[i].name);
}

const Tensor& BoundParameters::operator[](std::string_view name) const {
  const auto arrays = store_->arrays();
  for (std::size_t i = 0; i < arrays.size(); ++i)
    if (arrays[i].name == name) return tensors_[i];
  throw ConfigError("unknown parameter " + std::string(name));
}

std::vector<double> BoundParameters::flat_grad() const {
  std::vector<double> flat;
  flat.reserve(store_->scalar_count());
  for (const auto& t : tensors_) {
    const auto g = t.grad();
    if (g.empty()) {
      flat.insert(flat.end(), t.size(), 0.0);
    } else {
      flat.insert(flat.end(), g.begin(), g.end());
    }
  }
  return flat;
}

}  // namespace mgpms
