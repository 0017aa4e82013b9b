#include "geomrep/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace geomrep {

static_assert(std::endian::native == std::endian::little, "GART payloads assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'A', 'R', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

std::size_t product(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

template <typename T>
GartTensor from_values(DType dtype, std::vector<std::uint32_t> dims, std::span<const T> values) {
  GartTensor t;
  t.dtype = dtype;
  t.dims = std::move(dims);
  if (product(t.dims) != values.size()) {
    throw Error(ErrorKind::kShapeMismatch, "GART dims do not match value count");
  }
  t.payload.resize(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(t.payload.data(), values.data(), t.payload.size());
  return t;
}

template <typename T>
std::vector<T> to_values(const GartTensor& t, DType expected) {
  if (t.dtype != expected) throw Error(ErrorKind::kShapeMismatch, "GART dtype mismatch");
  std::vector<T> out(t.element_count());
  if (!out.empty()) std::memcpy(out.data(), t.payload.data(), out.size() * sizeof(T));
  return out;
}

}  // namespace

std::size_t payload_bytes(DType dtype, std::size_t elements) {
  switch (dtype) {
    case DType::kF32: return elements * 4;
    case DType::kF64: return elements * 8;
    case DType::kU8: return elements;
    case DType::kBits: return (elements + 7) / 8;
  }
  throw Error(ErrorKind::kIo, "unknown GART dtype");
}

std::size_t GartTensor::element_count() const { return product(dims); }

GartTensor GartTensor::from_f32(std::vector<std::uint32_t> dims, std::span<const float> values) {
  return from_values(DType::kF32, std::move(dims), values);
}

GartTensor GartTensor::from_f64(std::vector<std::uint32_t> dims, std::span<const double> values) {
  return from_values(DType::kF64, std::move(dims), values);
}

GartTensor GartTensor::from_bits(std::vector<std::uint32_t> dims,
                                 std::span<const std::uint8_t> bits) {
  GartTensor t;
  t.dtype = DType::kBits;
  t.dims = std::move(dims);
  if (product(t.dims) != bits.size()) {
    throw Error(ErrorKind::kShapeMismatch, "GART dims do not match value count");
  }
  t.payload.assign(payload_bytes(DType::kBits, bits.size()), 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) t.payload[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return t;
}

std::vector<float> GartTensor::to_f32() const { return to_values<float>(*this, DType::kF32); }

std::vector<double> GartTensor::to_f64() const { return to_values<double>(*this, DType::kF64); }

std::vector<std::uint8_t> GartTensor::to_bits() const {
  std::vector<std::uint8_t> out(element_count());
  if (dtype == DType::kU8) {
    std::memcpy(out.data(), payload.data(), out.size());
    return out;
  }
  if (dtype != DType::kBits) throw Error(ErrorKind::kShapeMismatch, "GART dtype mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (payload[i / 8] >> (i % 8)) & 1u;
  return out;
}

std::string encode_gart(const GartTensor& t) {
  if (payload_bytes(t.dtype, t.element_count()) != t.payload.size()) {
    throw Error(ErrorKind::kShapeMismatch, "GART payload size does not match dims");
  }
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kGartVersion));
  out.push_back(static_cast<char>(t.dtype));
  put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(out, d);
  out.append(reinterpret_cast<const char*>(t.payload.data()), t.payload.size());
  return out;
}

GartTensor decode_gart(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < 10) throw Error(ErrorKind::kIo, origin + ": truncated GART header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorKind::kBadMagic, origin + ": not a GART file");
  }
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kGartVersion) {
    throw Error(ErrorKind::kIo, origin + ": unsupported GART version " + std::to_string(version));
  }
  const auto code = static_cast<std::uint8_t>(bytes[5]);
  if (code > static_cast<std::uint8_t>(DType::kBits)) {
    throw Error(ErrorKind::kIo, origin + ": unknown dtype code " + std::to_string(code));
  }
  GartTensor t;
  t.dtype = static_cast<DType>(code);
  const std::uint32_t rank = get_u32(bytes, 6);
  std::size_t at = 10;
  if (bytes.size() < at + 4ull * rank) throw Error(ErrorKind::kIo, origin + ": truncated dims");
  for (std::uint32_t i = 0; i < rank; ++i, at += 4) t.dims.push_back(get_u32(bytes, at));
  const std::size_t need = payload_bytes(t.dtype, t.element_count());
  if (bytes.size() - at != need) {
    std::ostringstream os;
    os << origin << ": payload has " << bytes.size() - at << " bytes, dims require " << need;
    throw Error(ErrorKind::kIo, os.str());
  }
  t.payload.assign(reinterpret_cast<const std::uint8_t*>(bytes.data() + at),
                   reinterpret_cast<const std::uint8_t*>(bytes.data() + bytes.size()));
  return t;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

void write_gart(const std::filesystem::path& path, const GartTensor& t) {
  write_file(path, encode_gart(t));
}

GartTensor read_gart(const std::filesystem::path& path) {
  return decode_gart(read_file(path), path.string());
}

}  // namespace geomrep
