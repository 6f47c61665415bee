#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace bsim::nn {

/// Dense row-major tensor of up to four dimensions.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  std::string shape_str() const;
};

std::size_t shape_size(const std::vector<int>& shape);

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Owns the trainable parameters of one model.
class ParamStore {
 public:
  /// Kaiming-uniform initialization with bound sqrt(6 / fan_in).
  int add_kaiming(const std::string& name, std::vector<int> shape, int fan_in, std::mt19937_64& rng);
  int add_zeros(const std::string& name, std::vector<int> shape);
  int add(const std::string& name, Tensor value);

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Parameter& operator[](int i) { return params_.at(static_cast<std::size_t>(i)); }
  const Parameter& operator[](int i) const { return params_.at(static_cast<std::size_t>(i)); }
  int find(const std::string& name) const;
  std::size_t count() const;
  void zero_grad();
  /// Copies values from `other`; names and shapes must match one to one.
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<Parameter> params_;
};

}  // namespace bsim::nn
