#include "flnet/layers.hpp"

#include <map>

namespace flnet::nn {

std::vector<ParamRecord> to_records(
    const std::vector<std::pair<std::string, ad::TensorF>>& named) {
  std::vector<ParamRecord> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) {
    ParamRecord rec;
    rec.name = name;
    const auto& s = t.shape();
    rec.dims = {uint32_t(s.b), uint32_t(s.c), uint32_t(s.h), uint32_t(s.w)};
    rec.values = t.values();
    out.push_back(std::move(rec));
  }
  return out;
}

void load_records(const std::vector<std::pair<std::string, ad::TensorF>>& named,
                  const std::vector<ParamRecord>& records) {
  std::map<std::string, const ParamRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (const auto& [name, t] : named) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      fail(ErrorCode::bad_format, "checkpoint missing parameter: " + name);
    if (it->second->values.size() != t.values().size())
      fail(ErrorCode::bad_format, "checkpoint shape mismatch for: " + name);
    ad::TensorF handle = t;  // shares the node
    handle.values() = it->second->values;
  }
}

}  // namespace flnet::nn
