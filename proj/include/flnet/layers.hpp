#pragma once

#include <string>
#include <utility>
#include <vector>

#include "flnet/autodiff.hpp"
#include "flnet/checkpoint.hpp"
#include "flnet/rng.hpp"

namespace flnet::nn {

// Conv block with trainable weight/bias. Kaiming fan-in init, zero bias.
template <typename T>
struct Conv {
  ad::Tensor<T> w, b;
  int pad = 1;

  Conv() = default;
  Conv(int cin, int cout, int k, int padding, Rng& rng) : pad(padding) {
    std::vector<T> wv(size_t(cout) * cin * k * k);
    const double std_dev = std::sqrt(2.0 / (double(cin) * k * k));
    for (auto& v : wv) v = T(rng.normal(0.0, std_dev));
    w = ad::Tensor<T>::from({cout, cin, k, k}, std::move(wv), true);
    b = ad::Tensor<T>::from({1, cout, 1, 1}, std::vector<T>(size_t(cout), T(0)), true);
  }

  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const {
    return ad::conv2d(x, w, b, pad);
  }

  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, ad::Tensor<T>>>& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }

  static size_t count(int cin, int cout, int k) {
    return size_t(cout) * cin * k * k + size_t(cout);
  }
};

// Shared by the model classes: flat parameter list, checkpoint conversion,
// load-by-name with shape checks.
template <typename T>
std::vector<ad::Tensor<T>> param_tensors(
    const std::vector<std::pair<std::string, ad::Tensor<T>>>& named) {
  std::vector<ad::Tensor<T>> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

std::vector<ParamRecord> to_records(
    const std::vector<std::pair<std::string, ad::TensorF>>& named);
void load_records(const std::vector<std::pair<std::string, ad::TensorF>>& named,
                  const std::vector<ParamRecord>& records);

}  // namespace flnet::nn
