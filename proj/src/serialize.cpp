#include "ulmv/serialize.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "ULMV blobs are little-endian; big-endian hosts are not supported");

namespace ulmv {

namespace {

constexpr char kMagic[4] = {'U', 'L', 'M', 'V'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw DataFormatError(what + ": truncated blob");
  return v;
}

}  // namespace

void write_blob(std::ostream& os, const Tensor<float>& t) {
  os.write(kMagic, 4);
  put<uint32_t>(os, kBlobVersion);
  put<uint32_t>(os, kDtypeF32);
  put<uint32_t>(os, static_cast<uint32_t>(t.rank()));
  for (int64_t d : t.shape) put<uint32_t>(os, static_cast<uint32_t>(d));
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

Tensor<float> read_blob(std::istream& is, const std::string& what) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw DataFormatError(what + ": bad magic, not a ULMV blob");
  const uint32_t version = get<uint32_t>(is, what);
  if (version != kBlobVersion)
    throw DataFormatError(what + ": unsupported blob version " + std::to_string(version));
  const uint32_t dtype = get<uint32_t>(is, what);
  if (dtype != kDtypeF32) throw DataFormatError(what + ": unsupported dtype code " + std::to_string(dtype));
  const uint32_t rank = get<uint32_t>(is, what);
  if (rank > 8) throw DataFormatError(what + ": implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = get<uint32_t>(is, what);
    if (shape[i] <= 0) throw DataFormatError(what + ": non-positive dimension");
  }
  Tensor<float> t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!is) throw DataFormatError(what + ": truncated payload");
  return t;
}

std::vector<uint8_t> blob_bytes(const Tensor<float>& t) {
  std::ostringstream os(std::ios::binary);
  write_blob(os, t);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

void write_blob_file(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataFormatError("cannot open " + path.string() + " for writing");
  write_blob(os, t);
  if (!os) throw DataFormatError("write failed for " + path.string());
}

Tensor<float> read_blob_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataFormatError("cannot open " + path.string());
  return read_blob(is, path.string());
}

uint32_t crc32_bytes(const uint8_t* data, size_t len) {
  return static_cast<uint32_t>(::crc32(0L, data, static_cast<uInt>(len)));
}

std::string crc32_hex(const std::vector<uint8_t>& bytes) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", crc32_bytes(bytes.data(), bytes.size()));
  return buf;
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw DataFormatError("cannot open " + path.string());
  const std::streamsize n = is.tellg();
  is.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!is) throw DataFormatError("read failed for " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataFormatError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataFormatError("write failed for " + path.string());
}

std::string fingerprint(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ulmv
