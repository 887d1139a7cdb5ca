#pragma once

#include <torch/types.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pvvae {

// PVT1 container:
//   "PVT1" | u32 LE header length | UTF-8 JSON header | f32 LE payload (row-major)
// Header: {"dtype":"f32","shape":[...],"layout":"THWC"}

inline constexpr std::string_view kTensorMagic = "PVT1";
inline constexpr std::string_view kDefaultLayout = "THWC";

struct DecodedTensor {
  torch::Tensor data;  // float32, contiguous
  std::string layout;
};

std::vector<uint8_t> encode_tensor(const torch::Tensor& t, std::string_view layout = kDefaultLayout);

/// Throws FormatError on any structural defect; never reads past `bytes`.
DecodedTensor decode_tensor(const std::vector<uint8_t>& bytes);

void write_tensor(const std::filesystem::path& path, const torch::Tensor& t,
                  std::string_view layout = kDefaultLayout);
torch::Tensor read_tensor(const std::filesystem::path& path);
DecodedTensor read_tensor_with_layout(const std::filesystem::path& path);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

}  // namespace pvvae
