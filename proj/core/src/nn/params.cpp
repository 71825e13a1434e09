#include "tsdet/nn/params.hpp"

#include <cmath>
#include <stdexcept>

#include "tsdet/rng.hpp"

namespace tsdet::nn {

Var ParamStore::create(const std::string& name, std::vector<std::int64_t> shape, Init init,
                       double scale) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor t(shape);
  Rng rng(mix64(init_seed_ ^ hash_str(name)));
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      for (auto& v : t.data) v = 1.0;
      break;
    case Init::KaimingNormal: {
      std::int64_t fan_in = 0;
      if (t.ndim() == 4) {
        fan_in = t.dim(1) * t.dim(2) * t.dim(3);  // [K,C,kh,kw]
      } else if (t.ndim() == 2) {
        fan_in = t.dim(0);  // [in,out]
      } else {
        throw std::invalid_argument("KaimingNormal needs a 2-d or 4-d shape: " + name);
      }
      double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& v : t.data) v = rng.normal(0.0, stddev);
      break;
    }
    case Init::Normal:
      for (auto& v : t.data) v = rng.normal(0.0, scale);
      break;
  }
  Var p = leaf(std::move(t), name);
  params_.push_back(p);
  return p;
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p;
  }
  return nullptr;
}

std::vector<Var> ParamStore::with_prefix(std::string_view prefix) const {
  std::vector<Var> out;
  for (const auto& p : params_) {
    if (p->name.size() >= prefix.size() && std::string_view(p->name).substr(0, prefix.size()) == prefix) {
      out.push_back(p);
    }
  }
  return out;
}

std::int64_t ParamStore::total_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p->value.numel();
  return n;
}

std::int64_t ParamStore::count_with_prefix(std::string_view prefix) const {
  std::int64_t n = 0;
  for (const auto& p : with_prefix(prefix)) n += p->value.numel();
  return n;
}

}  // namespace tsdet::nn
