#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ulmv/tensor.hpp"

namespace ulmv {

// "ULMV" tensor blob: magic, u32 format version, u32 dtype code (1 = f32),
// u32 rank, u32 dims[rank], then the little-endian f32 payload.
inline constexpr uint32_t kBlobVersion = 1;
inline constexpr uint32_t kDtypeF32 = 1;

void write_blob(std::ostream& os, const Tensor<float>& t);
Tensor<float> read_blob(std::istream& is, const std::string& what);

std::vector<uint8_t> blob_bytes(const Tensor<float>& t);
void write_blob_file(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> read_blob_file(const std::filesystem::path& path);

uint32_t crc32_bytes(const uint8_t* data, size_t len);
std::string crc32_hex(const std::vector<uint8_t>& bytes);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

// FNV-1a 64-bit, printed as 16 hex chars; used for config fingerprints.
std::string fingerprint(const std::string& text);

}  // namespace ulmv
