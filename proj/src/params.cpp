#include "gacl/params.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "gacl/common.hpp"

namespace gacl {

Tensor ParameterStore::create(const std::string& name, Shape shape, ParamKind kind) {
  if (index_.count(name)) throw ValidationError("parameter already exists: " + name);
  const int64_t n = shape_numel(shape);
  std::vector<double> v(static_cast<size_t>(n), 0.0);
  Rng rng(mix64(init_seed_, fnv1a64(name)));
  switch (kind) {
    case ParamKind::Weight: {
      if (shape.empty()) throw ShapeError("weight parameter needs a shape: " + name);
      const double bound = 1.0 / std::sqrt(static_cast<double>(shape.back()));
      for (double& x : v) x = rng.uniform(-bound, bound);
      break;
    }
    case ParamKind::Bias:
      break;  // zeros
    case ParamKind::Embedding:
      for (double& x : v) x = 0.1 * rng.normal();
      break;
    case ParamKind::Activation:
      for (double& x : v) x = 0.25;
      break;
    case ParamKind::Norm:
      for (double& x : v) x = 1.0;
      break;
  }
  Tensor t = Tensor::parameter(std::move(shape), std::move(v));
  index_[name] = order_.size();
  order_.push_back(name);
  params_.emplace(name, t);
  kinds_.emplace(name, kind);
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter: " + name);
  return it->second;
}

ParamKind ParameterStore::kind(const std::string& name) const {
  auto it = kinds_.find(name);
  if (it == kinds_.end()) throw ValidationError("unknown parameter: " + name);
  return it->second;
}

std::vector<Tensor> ParameterStore::all() const {
  std::vector<Tensor> out;
  out.reserve(order_.size());
  for (const auto& n : order_) out.push_back(params_.at(n));
  return out;
}

int64_t ParameterStore::total_parameters() const {
  int64_t n = 0;
  for (const auto& name : order_) n += params_.at(name).numel();
  return n;
}

void ParameterStore::zero_grads() {
  for (const auto& name : order_) params_.at(name).zero_grad();
}

AdamW::AdamW(ParameterStore& store, AdamWConfig cfg) : store_(store), cfg_(cfg) {
  if (cfg_.lr <= 0) throw ValidationError("optimizer lr must be positive");
  if (cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1) {
    throw ValidationError("optimizer betas must lie in [0, 1)");
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& name : store_.names()) {
    Tensor p = store_.get(name);
    if (!p.has_grad()) {
      throw ValidationError("optimizer step with no gradient for parameter: " + name);
    }
    const ParamKind kind = store_.kind(name);
    const bool decays = kind == ParamKind::Weight || kind == ParamKind::Embedding ||
                        (cfg_.decay_bias && kind == ParamKind::Bias);
    const double wd = decays ? cfg_.weight_decay : 0.0;
    auto g = p.grad();
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    auto vals = p.mutable_values();
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      const double next =
          vals[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) - cfg_.lr * wd * vals[i];
      if (!std::isfinite(next)) {
        throw NumericError("optimizer produced a non-finite value for parameter: " + name);
      }
      vals[i] = next;
    }
    p.zero_grad();
  }
}

namespace {

constexpr char kMagic[8] = {'G', 'A', 'C', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& f, T& v, const std::string& path) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw IoError("truncated checkpoint: " + path);
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(kMagic, sizeof(kMagic));
  write_pod(f, kFormatVersion);
  write_pod(f, static_cast<uint64_t>(store.names().size()));
  for (const auto& name : store.names()) {
    Tensor p = store.get(name);
    write_pod(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(f, static_cast<uint32_t>(p.rank()));
    for (int64_t d : p.shape()) write_pod(f, static_cast<uint64_t>(d));
    auto v = p.values();
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

void load_checkpoint(ParameterStore& store, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("not a checkpoint file: " + path);
  }
  uint32_t version = 0;
  read_pod(f, version, path);
  if (version != kFormatVersion) {
    throw ValidationError("unsupported checkpoint format version " + std::to_string(version));
  }
  uint64_t count = 0;
  read_pod(f, count, path);
  if (count != store.names().size()) {
    throw ValidationError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                          std::to_string(store.names().size()));
  }
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t name_len = 0;
    read_pod(f, name_len, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f) throw IoError("truncated checkpoint: " + path);
    if (!store.has(name)) throw ValidationError("checkpoint parameter not in model: " + name);
    Tensor p = store.get(name);
    uint32_t rank = 0;
    read_pod(f, rank, path);
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) {
      uint64_t dim = 0;
      read_pod(f, dim, path);
      shape[d] = static_cast<int64_t>(dim);
    }
    if (shape != p.shape()) {
      throw ValidationError("checkpoint shape " + shape_str(shape) + " does not match " +
                            shape_str(p.shape()) + " for parameter: " + name);
    }
    auto vals = p.mutable_values();
    f.read(reinterpret_cast<char*>(vals.data()),
           static_cast<std::streamsize>(vals.size() * sizeof(double)));
    if (!f) throw IoError("truncated checkpoint: " + path);
    p.zero_grad();
  }
}

}  // namespace gacl
