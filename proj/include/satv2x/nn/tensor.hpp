#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace satv2x::nn {

using Rng = std::mt19937_64;

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover everything
// this project needs; shape is kept generic anyway.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::size_t>(numel_of(shape)) != data.size())
      throw std::invalid_argument("Tensor: data length does not match shape");
  }

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(numel_of(t.shape), 0.0);
    return t;
  }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t = zeros(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor vec(std::vector<double> d) {
    Tensor t;
    t.shape = {static_cast<int>(d.size())};
    t.data = std::move(d);
    return t;
  }

  static long numel_of(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  int numel() const { return static_cast<int>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator[](int i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<std::size_t>(i)]; }
  double& at2(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double at2(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool all_finite() const;
};

// A learnable value with an accumulated gradient of the same shape.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor::zeros(value.shape);
  }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Owning registry; parameter addresses stay stable so optimizers and tapes
// can hold raw pointers.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, std::vector<int> shape);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::size_t size() const { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }

  void zero_grad();
  // Uniform Xavier/Glorot init for matrices, zeros for vectors/biases.
  void init_xavier(Rng& rng);

  // Flat named-tensor binary checkpoint; layout documented in README.
  void save(const std::filesystem::path& path) const;
  // Loads values into existing parameters; names and shapes must match.
  void load(const std::filesystem::path& path);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

}  // namespace satv2x::nn
