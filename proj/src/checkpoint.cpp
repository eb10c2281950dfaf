#include "flnet/checkpoint.hpp"

#include <cstdio>
#include <cstring>

#include "flnet/raster.hpp"  // file helpers

namespace flnet {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'C', 'K', 'P', 'T', '0', '1'};

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 24));
}

struct Reader {
  const uint8_t* p;
  size_t left;
  void need(size_t n) {
    if (left < n) fail(ErrorCode::bad_format, "FLCKPT01: truncated");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = uint16_t(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
                 uint32_t(p[3]) << 24;
    p += 4;
    left -= 4;
    return v;
  }
  uint8_t u8() {
    need(1);
    uint8_t v = *p++;
    --left;
    return v;
  }
};

}  // namespace

std::vector<uint8_t> encode_checkpoint(const std::vector<ParamRecord>& params) {
  std::vector<uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, uint32_t(params.size()));
  for (const auto& p : params) {
    put_u16(out, uint16_t(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    out.push_back(uint8_t(p.dims.size()));
    size_t n = 1;
    for (uint32_t d : p.dims) {
      put_u32(out, d);
      n *= d;
    }
    if (n != p.values.size())
      fail(ErrorCode::usage, "checkpoint: dims do not match value count for " + p.name);
    const size_t off = out.size();
    out.resize(off + p.values.size() * 4);
    std::memcpy(out.data() + off, p.values.data(), p.values.size() * 4);
  }
  return out;
}

std::vector<ParamRecord> decode_checkpoint(const uint8_t* bytes, size_t size) {
  if (size < 8 || std::memcmp(bytes, kMagic, 8) != 0)
    fail(ErrorCode::bad_format, "FLCKPT01: bad magic");
  Reader rd{bytes + 8, size - 8};
  const uint32_t count = rd.u32();
  if (count > 100000) fail(ErrorCode::bad_format, "FLCKPT01: implausible parameter count");
  std::vector<ParamRecord> params(count);
  for (auto& p : params) {
    const uint16_t nl = rd.u16();
    rd.need(nl);
    p.name.assign(reinterpret_cast<const char*>(rd.p), nl);
    rd.p += nl;
    rd.left -= nl;
    const uint8_t rank = rd.u8();
    size_t n = 1;
    p.dims.resize(rank);
    for (auto& d : p.dims) {
      d = rd.u32();
      n *= d;
    }
    if (n > (1u << 28)) fail(ErrorCode::bad_format, "FLCKPT01: dimension overflow");
    rd.need(n * 4);
    p.values.resize(n);
    std::memcpy(p.values.data(), rd.p, n * 4);
    rd.p += n * 4;
    rd.left -= n * 4;
  }
  return params;
}

void save_checkpoint(const std::string& path, const std::vector<ParamRecord>& params) {
  auto bytes = encode_checkpoint(params);
  write_file_atomic(path, bytes.data(), bytes.size());
}

std::vector<ParamRecord> load_checkpoint(const std::string& path) {
  auto bytes = read_file(path);
  return decode_checkpoint(bytes.data(), bytes.size());
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::string csv = "epoch,train_loss,val_loss,lr\n";
  char line[128];
  for (const auto& e : history) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g\n", e.epoch, e.train_loss,
                  e.val_loss, e.lr);
    csv += line;
  }
  write_file_atomic(path, csv.data(), csv.size());
}

}  // namespace flnet
