#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geomrep/error.hpp"

namespace geomrep {

/// GART container: "GART", u8 version, u8 dtype, u32 rank, u32 dims[rank],
/// raw row-major little-endian payload.
enum class DType : std::uint8_t {
  kF32 = 0,
  kF64 = 1,
  kU8 = 2,
  kBits = 3,  // one bit per element, LSB first, padded to a whole byte
};

inline constexpr std::uint8_t kGartVersion = 1;

struct GartTensor {
  DType dtype = DType::kF32;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t element_count() const;

  static GartTensor from_f32(std::vector<std::uint32_t> dims, std::span<const float> values);
  static GartTensor from_f64(std::vector<std::uint32_t> dims, std::span<const double> values);
  static GartTensor from_bits(std::vector<std::uint32_t> dims, std::span<const std::uint8_t> bits);

  std::vector<float> to_f32() const;
  std::vector<double> to_f64() const;
  /// One byte (0/1) per element.
  std::vector<std::uint8_t> to_bits() const;
};

std::size_t payload_bytes(DType dtype, std::size_t elements);

std::string encode_gart(const GartTensor& t);
/// `origin` names the source in error messages.
GartTensor decode_gart(std::string_view bytes, const std::string& origin);

void write_gart(const std::filesystem::path& path, const GartTensor& t);
GartTensor read_gart(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace geomrep
