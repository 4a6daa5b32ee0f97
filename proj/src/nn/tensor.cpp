#include "satv2x/nn/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace satv2x::nn {

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Parameter& ParameterSet::add(const std::string& name, std::vector<int> shape) {
  if (find(name)) throw std::invalid_argument("ParameterSet: duplicate name " + name);
  params_.push_back(std::make_unique<Parameter>(name, Tensor::zeros(std::move(shape))));
  return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterSet::init_xavier(Rng& rng) {
  for (auto& p : params_) {
    Tensor& v = p->value;
    if (v.rank() == 2) {
      const double limit = std::sqrt(6.0 / (v.rows() + v.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& x : v.data) x = dist(rng);
    } else {
      std::fill(v.data.begin(), v.data.end(), 0.0);
    }
  }
}

namespace {

constexpr char kMagic[8] = {'S', 'V', 'X', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
}

}  // namespace

void ParameterSet::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, std::uint32_t{1});  // format version
  write_pod(os, static_cast<std::uint32_t>(params_.size()));
  for (const auto& p : params_) {
    write_pod(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_pod(os, static_cast<std::uint32_t>(p->value.shape.size()));
    for (int d : p->value.shape) write_pod(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(p->value.data.data()),
             static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

void ParameterSet::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  std::uint32_t version = 0, count = 0;
  read_pod(is, version);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  read_pod(is, count);
  if (count != params_.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = 0;
    read_pod(is, name_len);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t ndim = 0;
    read_pod(is, ndim);
    std::vector<int> shape(ndim);
    for (auto& d : shape) {
      std::uint32_t x = 0;
      read_pod(is, x);
      d = static_cast<int>(x);
    }
    Parameter* p = find(name);
    if (!p) throw std::runtime_error("checkpoint: unknown parameter " + name);
    if (p->value.shape != shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(p->value.data.data()),
            static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
  }
}

}  // namespace satv2x::nn
