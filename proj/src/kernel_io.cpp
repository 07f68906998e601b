#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "vrp/viability.hpp"

namespace vrp {

namespace {

static_assert(std::endian::native == std::endian::little,
              "kernel files are little-endian; serialization assumes the host "
              "matches");

constexpr char kMagic[4] = {'D', 'K', 'R', 'N'};
constexpr std::uint32_t kVersion = 1;

// magic + version + kappa_max + 3 * (min, max, count) + ts
constexpr std::size_t kHeaderSize = 4 + 4 + 8 + 3 * (8 + 8 + 4) + 8;

void put_u32(std::vector<unsigned char>& buf, std::uint32_t x) {
  unsigned char raw[4];
  std::memcpy(raw, &x, 4);
  buf.insert(buf.end(), raw, raw + 4);
}

void put_f64(std::vector<unsigned char>& buf, double x) {
  unsigned char raw[8];
  std::memcpy(raw, &x, 8);
  buf.insert(buf.end(), raw, raw + 8);
}

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size)
      : data_(data), size_(size) {}

  std::uint32_t u32() {
    std::uint32_t x;
    take(&x, 4);
    return x;
  }
  double f64() {
    double x;
    take(&x, 8);
    return x;
  }
  const unsigned char* raw(std::size_t n) {
    if (pos_ + n > size_) fail(ErrorCode::io, "kernel file truncated");
    const unsigned char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }

 private:
  void take(void* out, std::size_t n) { std::memcpy(out, raw(n), n); }

  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const unsigned char* data, std::size_t size) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, data, static_cast<uInt>(size)));
}

void write_file_atomic(const std::string& path,
                       const std::vector<unsigned char>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot open for writing: " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::io, "write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    fail(ErrorCode::io, "cannot replace: " + path);
  }
}

}  // namespace

void save_kernel(const KernelGrid& kernel, const std::string& path) {
  const GridSpec& spec = kernel.spec();
  const std::size_t payload_bytes =
      static_cast<std::size_t>((kernel.cell_count() + 7) / 8);

  std::vector<unsigned char> buf;
  buf.reserve(kHeaderSize + payload_bytes + 4);
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);
  put_f64(buf, kernel.kappa_max());
  put_f64(buf, spec.d_min);
  put_f64(buf, spec.d_max);
  put_u32(buf, static_cast<std::uint32_t>(spec.d_count));
  put_f64(buf, spec.mu_min);
  put_f64(buf, spec.mu_max);
  put_u32(buf, static_cast<std::uint32_t>(spec.mu_count));
  put_f64(buf, spec.v_min);
  put_f64(buf, spec.v_max);
  put_u32(buf, static_cast<std::uint32_t>(spec.v_count));
  put_f64(buf, spec.ts);

  // The in-memory word layout is already LSB-first bytes on a little-endian
  // host, so the payload is a prefix copy of the bit words.
  const auto& words = kernel.bits();
  const unsigned char* word_bytes =
      reinterpret_cast<const unsigned char*>(words.data());
  buf.insert(buf.end(), word_bytes, word_bytes + payload_bytes);

  put_u32(buf, crc32_of(buf.data(), buf.size()));
  write_file_atomic(path, buf);
}

KernelGrid load_kernel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open: " + path);
  std::vector<unsigned char> bytes(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kHeaderSize + 4) {
    fail(ErrorCode::io, "kernel file truncated: " + path);
  }

  Reader r(bytes.data(), bytes.size());
  if (std::memcmp(r.raw(4), kMagic, 4) != 0) {
    fail(ErrorCode::io, "not a kernel file: " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    fail(ErrorCode::io,
         "unsupported kernel file version " + std::to_string(version));
  }

  const double kappa_max = r.f64();
  GridSpec spec;
  spec.d_min = r.f64();
  spec.d_max = r.f64();
  spec.d_count = static_cast<int>(r.u32());
  spec.mu_min = r.f64();
  spec.mu_max = r.f64();
  spec.mu_count = static_cast<int>(r.u32());
  spec.v_min = r.f64();
  spec.v_max = r.f64();
  spec.v_count = static_cast<int>(r.u32());
  spec.ts = r.f64();
  spec.validate();

  const std::size_t payload_bytes =
      static_cast<std::size_t>((spec.cell_count() + 7) / 8);
  if (bytes.size() != kHeaderSize + payload_bytes + 4) {
    fail(ErrorCode::io, "kernel file size mismatch: " + path);
  }
  const unsigned char* payload = r.raw(payload_bytes);
  const std::uint32_t stored_crc = r.u32();
  if (stored_crc != crc32_of(bytes.data(), kHeaderSize + payload_bytes)) {
    fail(ErrorCode::io, "kernel file checksum mismatch: " + path);
  }

  std::vector<std::uint64_t> words(
      static_cast<std::size_t>((spec.cell_count() + 63) / 64), 0);
  std::memcpy(words.data(), payload, payload_bytes);
  return KernelGrid(spec, kappa_max, std::move(words), 0);
}

void export_kernel_csv(const KernelGrid& kernel, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open for writing: " + path);
  out << "d,mu,v\n";
  const GridSpec& spec = kernel.spec();
  char line[96];
  for (int id = 0; id < spec.d_count; ++id) {
    for (int imu = 0; imu < spec.mu_count; ++imu) {
      for (int iv = 0; iv < spec.v_count; ++iv) {
        if (!kernel.cell(id, imu, iv)) continue;
        const int n = std::snprintf(line, sizeof line, "%.9g,%.9g,%.9g\n",
                                    spec.d_value(id), spec.mu_value(imu),
                                    spec.v_value(iv));
        out.write(line, n);
      }
    }
  }
  if (!out) fail(ErrorCode::io, "write failed: " + path);
}

}  // namespace vrp
