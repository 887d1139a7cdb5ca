#include "pvvae/tensor_io.hpp"

#include "pvvae/errors.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace pvvae {

namespace {

static_assert(std::endian::native == std::endian::little,
              "PVT1 payloads are little-endian; add byte swapping for this host");

constexpr size_t kPrefixBytes = 8;  // magic + header length

uint32_t load_u32_le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void store_u32_le(uint8_t* p, uint32_t v) {
  p[0] = static_cast<uint8_t>(v);
  p[1] = static_cast<uint8_t>(v >> 8);
  p[2] = static_cast<uint8_t>(v >> 16);
  p[3] = static_cast<uint8_t>(v >> 24);
}

}  // namespace

std::vector<uint8_t> encode_tensor(const torch::Tensor& t, std::string_view layout) {
  if (!t.defined()) throw InputError("encode_tensor: undefined tensor");
  const auto cpu = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();

  nlohmann::ordered_json header;
  header["dtype"] = "f32";
  header["shape"] = cpu.sizes().vec();
  header["layout"] = std::string(layout);
  const std::string text = header.dump();
  if (text.size() > std::numeric_limits<uint32_t>::max()) throw FormatError("PVT1 header too large");

  const size_t payload = static_cast<size_t>(cpu.numel()) * sizeof(float);
  std::vector<uint8_t> out(kPrefixBytes + text.size() + payload);
  std::memcpy(out.data(), kTensorMagic.data(), 4);
  store_u32_le(out.data() + 4, static_cast<uint32_t>(text.size()));
  std::memcpy(out.data() + kPrefixBytes, text.data(), text.size());
  if (payload > 0) std::memcpy(out.data() + kPrefixBytes + text.size(), cpu.data_ptr<float>(), payload);
  return out;
}

DecodedTensor decode_tensor(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < kPrefixBytes) throw FormatError("PVT1: truncated prefix");
  if (std::memcmp(bytes.data(), kTensorMagic.data(), 4) != 0) throw FormatError("PVT1: bad magic");
  const uint64_t header_len = load_u32_le(bytes.data() + 4);
  if (header_len > bytes.size() - kPrefixBytes) throw FormatError("PVT1: header length exceeds file size");

  const std::string text(reinterpret_cast<const char*>(bytes.data() + kPrefixBytes), header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("PVT1: header parse failure: ") + e.what());
  }
  if (!header.is_object()) throw FormatError("PVT1: header is not an object");
  if (!header.contains("dtype") || header["dtype"] != "f32") throw FormatError("PVT1: dtype must be \"f32\"");
  if (!header.contains("shape") || !header["shape"].is_array()) throw FormatError("PVT1: missing shape array");

  std::string layout;
  if (header.contains("layout")) {
    if (!header["layout"].is_string()) throw FormatError("PVT1: layout must be a string");
    layout = header["layout"].get<std::string>();
  }

  std::vector<int64_t> shape;
  uint64_t count = 1;
  constexpr uint64_t kMaxElements = std::numeric_limits<uint64_t>::max() / sizeof(float);
  for (const auto& d : header["shape"]) {
    if (!d.is_number_integer()) throw FormatError("PVT1: shape entries must be integers");
    const auto dim = d.get<int64_t>();
    if (dim < 0) throw FormatError("PVT1: negative dimension");
    if (dim > 0 && count > kMaxElements / static_cast<uint64_t>(dim)) throw FormatError("PVT1: shape overflows");
    count *= static_cast<uint64_t>(dim);
    shape.push_back(dim);
  }

  const uint64_t payload = bytes.size() - kPrefixBytes - header_len;
  if (count * sizeof(float) != payload) throw FormatError("PVT1: shape product does not match payload size");

  auto data = torch::empty(shape, torch::kFloat32);
  if (payload > 0) std::memcpy(data.data_ptr<float>(), bytes.data() + kPrefixBytes + header_len, payload);
  return {data, layout};
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<size_t>(in.tellg());
  in.seekg(0);
  std::vector<uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
    throw IoError("short read on " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed on " + path.string());
}

void write_tensor(const std::filesystem::path& path, const torch::Tensor& t, std::string_view layout) {
  write_file_bytes(path, encode_tensor(t, layout));
}

DecodedTensor read_tensor_with_layout(const std::filesystem::path& path) {
  return decode_tensor(read_file_bytes(path));
}

torch::Tensor read_tensor(const std::filesystem::path& path) { return read_tensor_with_layout(path).data; }

}  // namespace pvvae
