#include "pvvae/errors.hpp"
#include "pvvae/tensor_io.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <cstring>
#include <filesystem>
#include <random>

namespace pvvae {
namespace {

std::vector<uint8_t> with_header(const std::string& header, size_t payload_bytes, bool fix_length = true,
                                 uint32_t length = 0) {
  std::vector<uint8_t> out{'P', 'V', 'T', '1'};
  const uint32_t len = fix_length ? static_cast<uint32_t>(header.size()) : length;
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((len >> (8 * i)) & 0xff));
  out.insert(out.end(), header.begin(), header.end());
  out.resize(out.size() + payload_bytes, 0);
  return out;
}

bool same_bits(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes() || a.scalar_type() != b.scalar_type()) return false;
  auto x = a.contiguous(), y = b.contiguous();
  return std::memcmp(x.data_ptr(), y.data_ptr(), static_cast<size_t>(x.numel()) * sizeof(float)) == 0;
}

TEST(Pvt1, LayoutOfEncodedBytes) {
  auto bytes = encode_tensor(torch::tensor({1.0f, -2.0f}), "THWC");
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PVT1");
  const uint32_t len = bytes[4] | (bytes[5] << 8) | (bytes[6] << 16) | (static_cast<uint32_t>(bytes[7]) << 24);
  auto header = nlohmann::json::parse(std::string(bytes.begin() + 8, bytes.begin() + 8 + len));
  EXPECT_EQ(header["dtype"], "f32");
  EXPECT_EQ(header["shape"], nlohmann::json::array({2}));
  EXPECT_EQ(header["layout"], "THWC");
  EXPECT_EQ(bytes.size(), 8 + len + 8);
  float first;
  std::memcpy(&first, bytes.data() + 8 + len, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(Pvt1, FuzzRoundTripBitExact) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int rank = static_cast<int>(gen() % 6);
    std::vector<int64_t> shape;
    for (int r = 0; r < rank; ++r) shape.push_back(static_cast<int64_t>(gen() % 6));
    auto t = torch::empty(shape, torch::kFloat32);
    auto* p = reinterpret_cast<uint32_t*>(t.data_ptr<float>());
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<uint32_t>(gen());  // includes NaN/Inf patterns
    auto decoded = decode_tensor(encode_tensor(t, trial % 2 ? "raw" : "THWC"));
    ASSERT_TRUE(same_bits(decoded.data, t)) << "trial " << trial;
    EXPECT_EQ(decoded.layout, trial % 2 ? "raw" : "THWC");
  }
}

TEST(Pvt1, NonContiguousAndDoubleInputs) {
  auto t = torch::arange(24, torch::kFloat64).view({2, 3, 4}).transpose(0, 2);
  auto decoded = decode_tensor(encode_tensor(t)).data;
  EXPECT_TRUE(torch::equal(decoded, t.to(torch::kFloat32).contiguous()));
}

TEST(Pvt1, AdversarialHeaders) {
  EXPECT_THROW(decode_tensor({}), FormatError);
  EXPECT_THROW(decode_tensor({'P', 'V', 'T'}), FormatError);
  auto bad_magic = with_header(R"({"dtype":"f32","shape":[1]})", 4);
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_tensor(bad_magic), FormatError);
  EXPECT_THROW(decode_tensor(with_header(R"({"dtype":"f32","shape":[1]})", 4, false, 0xffffffffu)), FormatError);
  EXPECT_THROW(decode_tensor(with_header("not json", 0)), FormatError);
  EXPECT_THROW(decode_tensor(with_header("[1,2]", 0)), FormatError);
  EXPECT_THROW(decode_tensor(with_header(R"({"dtype":"f64","shape":[1]})", 8)), FormatError);
  EXPECT_THROW(decode_tensor(with_header(R"({"shape":[1]})", 4)), FormatError);
  EXPECT_THROW(decode_tensor(with_header(R"({"dtype":"f32"})", 4)), FormatError);
  EXPECT_THROW(decode_tensor(with_header(R"({"dtype":"f32","shape":[-1]})", 4)), FormatError);
  EXPECT_THROW(decode_tensor(with_header(R"({"dtype":"f32","shape":[1.5]})", 4)), FormatError);
  EXPECT_THROW(decode_tensor(with_header(R"({"dtype":"f32","shape":["2"]})", 8)), FormatError);
  EXPECT_THROW(decode_tensor(with_header(R"({"dtype":"f32","shape":[3]})", 8)), FormatError);
  EXPECT_THROW(decode_tensor(with_header(R"({"dtype":"f32","shape":[1]})", 8)), FormatError);
  EXPECT_THROW(decode_tensor(with_header(R"({"dtype":"f32","shape":[4294967296,4294967296,4294967296]})", 4)),
               FormatError);
  EXPECT_THROW(decode_tensor(with_header(R"({"dtype":"f32","shape":[1],"layout":7})", 4)), FormatError);
  EXPECT_NO_THROW(decode_tensor(with_header(R"({"dtype":"f32","shape":[0,5]})", 0)));
  EXPECT_NO_THROW(decode_tensor(with_header(R"({"dtype":"f32","shape":[]})", 4)));
}

TEST(Pvt1, RandomCorruptionNeverCrashes) {
  std::mt19937_64 gen(7);
  auto valid = encode_tensor(torch::rand({2, 3, 4}));
  int decoded = 0, rejected = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto bytes = valid;
    const int edits = 1 + static_cast<int>(gen() % 4);
    for (int e = 0; e < edits; ++e) {
      switch (gen() % 3) {
        case 0:
          bytes[gen() % bytes.size()] ^= static_cast<uint8_t>(1u << (gen() % 8));
          break;
        case 1:
          bytes.resize(gen() % (bytes.size() + 1));
          if (bytes.empty()) bytes.push_back(0);
          break;
        default:
          bytes.insert(bytes.begin() + static_cast<std::ptrdiff_t>(gen() % bytes.size()), static_cast<uint8_t>(gen()));
      }
    }
    try {
      auto t = decode_tensor(bytes);
      EXPECT_LE(static_cast<size_t>(t.data.numel()) * 4 + 8, bytes.size());
      ++decoded;
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  EXPECT_EQ(decoded + rejected, 1000);
  EXPECT_GT(rejected, 0);
}

TEST(Pvt1, FileRoundTrip) {
  auto path = std::filesystem::temp_directory_path() / "pvvae_tensor_io_roundtrip.pvt";
  auto t = torch::randn({3, 4, 5, 2});
  write_tensor(path, t, "THWC");
  auto back = read_tensor_with_layout(path);
  EXPECT_TRUE(same_bits(back.data, t));
  EXPECT_EQ(back.layout, "THWC");
  std::filesystem::remove(path);
  EXPECT_THROW(read_tensor(path), IoError);
}

}  // namespace
}  // namespace pvvae
