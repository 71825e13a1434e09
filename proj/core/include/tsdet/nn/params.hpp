#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tsdet/nn/autograd.hpp"

namespace tsdet::nn {

enum class Init {
  Zeros,
  Ones,
  KaimingNormal,  // N(0, sqrt(2/fan_in)); fan_in inferred from shape
  Normal,         // N(0, scale)
};

// Registry of named parameter leaves. Initialization is a pure function of
// (init_seed, parameter name), so two models sharing a component name and
// seed start from identical weights regardless of what else they contain.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t init_seed) : init_seed_(init_seed) {}

  Var create(const std::string& name, std::vector<std::int64_t> shape, Init init,
             double scale = 0.0);

  const std::vector<Var>& all() const { return params_; }
  Var find(const std::string& name) const;  // nullptr when absent
  std::vector<Var> with_prefix(std::string_view prefix) const;
  std::int64_t total_count() const;
  std::int64_t count_with_prefix(std::string_view prefix) const;
  std::uint64_t init_seed() const { return init_seed_; }

 private:
  std::uint64_t init_seed_;
  std::vector<Var> params_;
};

}  // namespace tsdet::nn
