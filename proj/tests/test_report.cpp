#include "pvvae/errors.hpp"
#include "pvvae/plots.hpp"
#include "pvvae/run_manifest.hpp"
#include "pvvae/tensor_io.hpp"

#include <gtest/gtest.h>
#include <torch/torch.h>

#include <filesystem>
#include <fstream>

namespace pvvae {
namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pvvae_report_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TEST(Png, RoundTripsUint8) {
  auto dir = scratch("png");
  auto img = torch::randint(0, 256, {7, 5, 3}, torch::kUInt8);
  write_png(dir / "a.png", img);
  EXPECT_TRUE(torch::equal(read_png(dir / "a.png"), img));
}

TEST(Png, FloatIsClampedAndRounded) {
  auto dir = scratch("pngf");
  auto img = torch::tensor({-0.5f, 0.5f, 2.0f}).view({1, 1, 3});
  write_png(dir / "b.png", img);
  auto back = read_png(dir / "b.png");
  EXPECT_EQ(back[0][0][0].item<uint8_t>(), 0);
  EXPECT_EQ(back[0][0][1].item<uint8_t>(), 128);
  EXPECT_EQ(back[0][0][2].item<uint8_t>(), 255);
  EXPECT_THROW(write_png(dir / "c.png", torch::zeros({4, 4})), DimensionError);
  EXPECT_THROW(write_png(dir / "missing" / "c.png", torch::zeros({4, 4, 3})), IoError);
}

TEST(Plots, GridLayout) {
  std::vector<torch::Tensor> cells(5, torch::zeros({4, 6, 3}));
  auto grid = tile_grid(cells, 3, 2, 2);
  EXPECT_EQ(grid.sizes(), (std::vector<int64_t>{2 * 8 + 3 * 2, 3 * 12 + 4 * 2, 3}));
  EXPECT_FLOAT_EQ(grid[2][2][0].item<float>(), 0.0f);
  EXPECT_FLOAT_EQ(grid[0][0][0].item<float>(), 1.0f);
}

TEST(Plots, ChartsDrawSomething) {
  auto bars = bar_chart({1.0, 3.0, 2.0});
  EXPECT_EQ(bars.sizes(), (std::vector<int64_t>{240, 320, 3}));
  EXPECT_LT(bars.min().item<float>(), 1.0f);
  auto lines = line_chart({{1, 2, 3, 4}, {1, 1.5, 1.2, 1.1}}, {{1, 0, 0}, {0, 0, 1}});
  EXPECT_GT((lines.select(2, 0) - lines.select(2, 2)).max().item<float>(), 0.5f);
  EXPECT_THROW(line_chart({{1, 2}}, {}), InputError);
}

TEST(Manifest, GitBlobHash) {
  // Reference value from `git hash-object` on the bytes "hello\n".
  std::vector<uint8_t> bytes{'h', 'e', 'l', 'l', 'o', '\n'};
  EXPECT_EQ(git_blob_sha1(bytes), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(git_blob_sha1({}), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(Manifest, ArtifactHashTracksContent) {
  auto dir = scratch("hash");
  write_file_bytes(dir / "x.bin", {1, 2, 3});
  std::filesystem::create_directories(dir / "sub");
  write_file_bytes(dir / "sub" / "y.bin", {4});
  const auto h1 = artifact_hash({dir});
  EXPECT_EQ(h1, artifact_hash({dir}));
  write_file_bytes(dir / "sub" / "y.bin", {5});
  EXPECT_NE(h1, artifact_hash({dir}));
  EXPECT_THROW(artifact_hash({dir / "nope"}), IoError);
}

TEST(Manifest, WritesJson) {
  auto dir = scratch("manifest");
  RunManifest m;
  m.command = "eval-recon";
  m.seed = 3;
  m.metrics = {{"psnr", 20.0}};
  m.write(dir / "run_manifest.json");
  std::ifstream in(dir / "run_manifest.json");
  auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["command"], "eval-recon");
  EXPECT_EQ(j["seed"], 3);
  EXPECT_DOUBLE_EQ(j["metrics"]["psnr"].get<double>(), 20.0);
}

}  // namespace
}  // namespace pvvae
