#include "oapt/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include "oapt/errors.hpp"

namespace oapt {

Tensor ParamStore::add(const std::string& name, std::vector<std::int64_t> shape, Tape& tape) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  Tensor t = Tensor::leaf(std::move(shape), tape);
  items_.emplace_back(name, t);
  return t;
}

Tensor& ParamStore::find(const std::string& name) {
  for (auto& [n, t] : items_)
    if (n == name) return t;
  throw ContractError("no parameter named " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

std::int64_t ParamStore::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : items_) t.zero_grad();
}

void ParamStore::init_normal(Tensor& t, Rng& rng, real stddev) {
  for (auto& v : t.data()) v = rng.normal() * stddev;
}

void ParamStore::init_conv(Tensor& t, Rng& rng) {
  std::int64_t fan_in = 1;
  for (std::size_t i = 1; i < t.shape().size(); ++i) fan_in *= t.shape()[i];
  const real stddev = std::sqrt(real(2) / static_cast<real>(fan_in));
  init_normal(t, rng, stddev);
}

void Adam::step() {
  auto& items = params_->items();
  if (m_.empty()) {
    m_.resize(items.size());
    v_.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      m_[i].assign(items[i].second.data().size(), 0);
      v_[i].assign(items[i].second.data().size(), 0);
    }
  }
  ++t_;
  const real bc1 = 1 - std::pow(cfg_.beta1, static_cast<real>(t_));
  const real bc2 = 1 - std::pow(cfg_.beta2, static_cast<real>(t_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& p = items[i].second;
    const auto& g = p.grad();
    for (std::size_t j = 0; j < g.size(); ++j) {
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1 - cfg_.beta1) * g[j];
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1 - cfg_.beta2) * g[j] * g[j];
      const real mhat = m_[i][j] / bc1;
      const real vhat = v_[i][j] / bc2;
      p.data()[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

namespace {

constexpr char kMagic[5] = {'O', 'A', 'P', 'T', 'W'};
constexpr unsigned char kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(os, bits);
}

float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_weights(const std::string& path, const ParamStore& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open weight file for writing: " + path);
  os.write(kMagic, 5);
  os.put(static_cast<char>(kVersion));
  for (const auto& [name, t] : params.items()) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(os, static_cast<std::uint64_t>(t.shape().size()));
    for (auto e : t.shape()) put_u64(os, static_cast<std::uint64_t>(e));
    for (real v : t.data()) put_f32(os, static_cast<float>(v));
  }
  if (!os) throw DataError("write failure on weight file: " + path);
}

void load_weights(const std::string& path, ParamStore& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open weight file: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kMagic, 5) != 0)
    throw DataError("bad magic in weight file: " + path);
  const int version = is.get();
  if (version != kVersion)
    throw DataError("unsupported weight file version " + std::to_string(version));

  std::set<std::string> loaded;
  while (true) {
    const int peek = is.peek();
    if (peek == EOF) break;
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint64_t rank = get_u64(is);
    std::vector<std::int64_t> shape(rank);
    for (auto& e : shape) e = static_cast<std::int64_t>(get_u64(is));
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    if (!is) throw DataError("truncated weight file: " + path);
    if (!params.contains(name)) {
      throw DataError("weight file has extra tensor '" + name + "' not in the model");
    }
    Tensor& t = params.find(name);
    if (t.shape() != shape)
      throw DataError("shape mismatch for '" + name + "': file " + shape_str(shape) +
                      " vs model " + shape_str(t.shape()));
    for (std::int64_t i = 0; i < n; ++i)
      t.data()[static_cast<std::size_t>(i)] = static_cast<real>(get_f32(is));
    if (!is) throw DataError("truncated payload in weight file: " + path);
    loaded.insert(name);
  }
  std::string missing;
  for (const auto& [name, t] : params.items())
    if (!loaded.count(name)) missing += (missing.empty() ? "" : ", ") + name;
  if (!missing.empty())
    throw DataError("weight file is missing tensors: " + missing);
}

}  // namespace oapt
