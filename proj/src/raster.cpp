#include "flnet/raster.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>

namespace flnet {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'R', 'A', 'S', 'T', 'R', '1'};
constexpr size_t kHeaderBytes = 8 + 3 * 4 + 6 * 8 + 4 + 4;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 24));
}

void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f64(std::vector<uint8_t>& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u32(out, uint32_t(bits));
  put_u32(out, uint32_t(bits >> 32));
}

struct Reader {
  const uint8_t* p;
  size_t left;
  void need(size_t n) {
    if (left < n) fail(ErrorCode::bad_format, "FR1: truncated payload");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
                 uint32_t(p[3]) << 24;
    p += 4;
    left -= 4;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    uint64_t lo = u32();
    uint64_t hi = u32();
    uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

}  // namespace

bool Raster::identical_to(const Raster& o) const {
  return width_ == o.width_ && height_ == o.height_ && bands_ == o.bands_ &&
         geo_ == o.geo_ && flags_ == o.flags_ &&
         std::memcmp(&nodata_, &o.nodata_, 4) == 0 &&
         data_.size() == o.data_.size() &&
         std::memcmp(data_.data(), o.data_.data(), data_.size() * 4) == 0 &&
         mask_ == o.mask_;
}

std::vector<uint8_t> encode_fr1(const Raster& r) {
  std::vector<uint8_t> out;
  size_t npx = r.pixel_count();
  out.reserve(kHeaderBytes + r.data().size() * 4 + (npx + 7) / 8);
  out.insert(out.end(), kMagic, kMagic + 8);
  put_u32(out, uint32_t(r.width()));
  put_u32(out, uint32_t(r.height()));
  put_u32(out, uint32_t(r.bands()));
  put_f64(out, r.geo().origin_x);
  put_f64(out, r.geo().pixel_size_x);
  put_f64(out, 0.0);
  put_f64(out, r.geo().origin_y);
  put_f64(out, 0.0);
  put_f64(out, r.geo().pixel_size_y);
  put_f32(out, r.nodata_value());
  put_u32(out, r.flags());
  size_t payload = out.size();
  out.resize(payload + r.data().size() * 4);
  std::memcpy(out.data() + payload, r.data().data(), r.data().size() * 4);
  size_t mask_off = out.size();
  out.resize(mask_off + (npx + 7) / 8, 0);
  const auto& m = r.mask();
  for (size_t i = 0; i < npx; ++i)
    if (m[i]) out[mask_off + i / 8] |= uint8_t(1u << (i % 8));
  return out;
}

Raster decode_fr1(const uint8_t* bytes, size_t size) {
  if (size < 8 || std::memcmp(bytes, kMagic, 8) != 0)
    fail(ErrorCode::bad_format, "FR1: bad magic");
  Reader rd{bytes + 8, size - 8};
  uint32_t w = rd.u32(), h = rd.u32(), bands = rd.u32();
  if (w == 0 || h == 0 || bands == 0 || w > (1u << 20) || h > (1u << 20) ||
      bands > 1024 || double(w) * h * bands > 1e9)
    fail(ErrorCode::bad_format, "FR1: dimension overflow");
  GeoTransform geo;
  geo.origin_x = rd.f64();
  geo.pixel_size_x = rd.f64();
  rd.f64();
  geo.origin_y = rd.f64();
  rd.f64();
  geo.pixel_size_y = rd.f64();
  float nodata = rd.f32();
  uint32_t flags = rd.u32();

  Raster r(int(w), int(h), int(bands), geo);
  r.set_nodata_value(nodata);
  r.set_flags(flags);
  size_t nvals = size_t(w) * h * bands;
  rd.need(nvals * 4);
  std::memcpy(r.data().data(), rd.p, nvals * 4);
  rd.p += nvals * 4;
  rd.left -= nvals * 4;
  size_t npx = size_t(w) * h;
  size_t mask_bytes = (npx + 7) / 8;
  rd.need(mask_bytes);
  for (size_t i = 0; i < npx; ++i)
    r.mask()[i] = (rd.p[i / 8] >> (i % 8)) & 1u;
  return r;
}

void write_file_atomic(const std::string& path, const void* bytes, size_t size) {
  std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) fail(ErrorCode::missing_file, "cannot open for writing: " + tmp);
  size_t written = size ? std::fwrite(bytes, 1, size, f) : 0;
  bool ok = (written == size) && std::fclose(f) == 0;
  if (!ok) {
    std::remove(tmp.c_str());
    fail(ErrorCode::generic, "short write: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    fail(ErrorCode::generic, "rename failed: " + path);
  }
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) fail(ErrorCode::missing_file, "cannot open: " + path);
  std::fseek(f, 0, SEEK_END);
  long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> bytes(size > 0 ? size_t(size) : 0);
  size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (got != bytes.size()) fail(ErrorCode::bad_format, "short read: " + path);
  return bytes;
}

Raster read_raster(const std::string& path) {
  auto bytes = read_file(path);
  return decode_fr1(bytes.data(), bytes.size());
}

void write_raster(const Raster& r, const std::string& path) {
  auto bytes = encode_fr1(r);
  write_file_atomic(path, bytes.data(), bytes.size());
}

Raster QualityMask::to_raster() const {
  Raster r(width, height, 1, geo);
  for (size_t i = 0; i < bits.size(); ++i) r.data()[i] = float(bits[i]);
  return r;
}

QualityMask QualityMask::from_raster(const Raster& r) {
  QualityMask q(r.width(), r.height(), r.geo());
  for (size_t i = 0; i < q.bits.size(); ++i) {
    float v = r.data()[i];
    if (v < 0 || v > 15 || v != float(int(v)))
      fail(ErrorCode::bad_format, "quality mask raster holds non-flag values");
    q.bits[i] = uint8_t(v);
    if (!r.valid(int(i) / r.width(), int(i) % r.width()))
      q.bits[i] |= kQualityNodata;
  }
  return q;
}

}  // namespace flnet
