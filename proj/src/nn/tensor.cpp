#include "bsim/nn/tensor.hpp"

#include <cmath>
#include <sstream>

#include "bsim/common.hpp"

namespace bsim::nn {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw Error("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  if (shape.size() > 4) throw Error("tensors have at most 4 dimensions");
  data.assign(shape_size(shape), fill);
}

Tensor::Tensor(std::vector<int> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (shape.size() > 4) throw Error("tensors have at most 4 dimensions");
  if (shape_size(shape) != data.size()) {
    throw Error("tensor " + shape_str() + " given " + std::to_string(data.size()) + " values");
  }
}

std::string Tensor::shape_str() const {
  std::ostringstream o;
  o << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) o << (i ? "," : "") << shape[i];
  o << ']';
  return o.str();
}

int ParamStore::add(const std::string& name, Tensor value) {
  if (find(name) >= 0) throw Error("duplicate parameter '" + name + "'");
  Parameter p;
  p.name = name;
  p.grad = Tensor(value.shape);
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

int ParamStore::add_kaiming(const std::string& name, std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / std::max(1, fan_in));
  for (double& v : t.data) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = (2.0 * u - 1.0) * bound;
  }
  return add(name, std::move(t));
}

int ParamStore::add_zeros(const std::string& name, std::vector<int> shape) {
  return add(name, Tensor(std::move(shape)));
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.params_.size() != params_.size()) {
    throw Error("parameter count mismatch: " + std::to_string(other.params_.size()) + " vs " +
                std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other.params_[i];
    auto& dst = params_[i];
    if (src.name != dst.name || src.value.shape != dst.value.shape) {
      throw Error("parameter mismatch at '" + dst.name + "': got '" + src.name + "' " + src.value.shape_str() +
                  ", expected " + dst.value.shape_str());
    }
    dst.value.data = src.value.data;
  }
}

}  // namespace bsim::nn
