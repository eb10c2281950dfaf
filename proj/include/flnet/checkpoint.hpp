#pragma once

#include <string>
#include <vector>

#include "flnet/optim.hpp"

namespace flnet {

// FLCKPT01 container. Layout (little-endian):
//   magic "FLCKPT01", u32 parameter count, then per parameter:
//   u16 name length, name bytes, u8 rank, rank * u32 dims, f32 values.
struct ParamRecord {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> values;
};

std::vector<uint8_t> encode_checkpoint(const std::vector<ParamRecord>& params);
std::vector<ParamRecord> decode_checkpoint(const uint8_t* bytes, size_t size);

void save_checkpoint(const std::string& path, const std::vector<ParamRecord>& params);
std::vector<ParamRecord> load_checkpoint(const std::string& path);

// Loss history CSV: "epoch,train_loss,val_loss,lr".
void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace flnet
