#pragma once

#include "pvvae/core_model.hpp"

#include <nlohmann/json.hpp>
#include <torch/types.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pvvae {

enum class ShapeKind { kCircle, kRectangle };
enum class Background { kSolid, kNoiseTexture };

struct Shape {
  ShapeKind kind = ShapeKind::kCircle;
  double x0 = 0.0;  // center at frame 1, pixels
  double y0 = 0.0;
  double vx = 0.0;  // pixels per frame
  double vy = 0.0;
  double size = 4.0;      // radius, or half-width for rectangles
  double aspect = 1.0;    // rectangle half-height = size * aspect
  std::array<float, 3> color{0.8f, 0.8f, 0.8f};
};

/// Fully specified scene. Shapes are drawn in order; later shapes occlude
/// earlier ones and own the flow where they overlap.
struct SceneSpec {
  std::vector<Shape> shapes;
  Background background = Background::kSolid;
  std::array<float, 3> background_color{-0.5f, -0.5f, -0.5f};
  int64_t frames = 17;
  int64_t height = 64;
  int64_t width = 64;
  uint64_t seed = 0;  // drives the noise texture

  /// Throws ConfigError when a velocity exceeds a quarter of the frame.
  void validate() const;
};

/// Sampling ranges for randomly generated scenes.
struct SceneRanges {
  int64_t min_shapes = 1;
  int64_t max_shapes = 3;
  int64_t max_speed = 2;  // integer velocity components in [-max_speed, max_speed]
  double min_size = 4.0;
  double max_size = 12.0;
  double texture_probability = 0.5;
  int64_t frames = 17;
  int64_t height = 64;
  int64_t width = 64;

  void validate() const;
};

nlohmann::json to_json(const SceneRanges& r);
SceneRanges scene_ranges_from_json(const nlohmann::json& j);

SceneSpec sample_scene(const SceneRanges& ranges, uint64_t seed);

struct SyntheticClip {
  VideoClip clip;      // (1+T, H, W, 3) in [-1, 1]
  torch::Tensor flow;  // (T, H, W, 2) forward flow (dx, dy), pixels/frame
};

SyntheticClip generate_clip(const SceneSpec& spec);

/// Center of `shape` at 1-indexed frame i, wrapped onto the torus.
std::array<double, 2> shape_center(const Shape& shape, int64_t frame, int64_t height, int64_t width);

enum class Split { kTrain, kVal };

/// Every tenth clip (index % 10 == 9) goes to validation.
Split split_for_index(int64_t index);

struct CorpusEntry {
  int64_t index = 0;
  uint64_t seed = 0;
  std::string clip_path;  // relative to the corpus root
  std::string flow_path;
  Split split = Split::kTrain;
};

struct CorpusManifest {
  uint64_t base_seed = 0;
  SceneRanges ranges;
  std::vector<CorpusEntry> entries;
};

/// Writes clip i with seed base_seed + i plus manifest.json under `dir`.
CorpusManifest generate_corpus(const std::filesystem::path& dir, int64_t count, uint64_t base_seed,
                               const SceneRanges& ranges);

CorpusManifest read_corpus_manifest(const std::filesystem::path& dir);

/// In-memory view of one split.
struct VideoSet {
  torch::Tensor videos;  // (N, 3, 1+T, H, W)
  torch::Tensor flows;   // (N, T, H, W, 2)
  std::vector<uint64_t> seeds;

  int64_t size() const { return videos.defined() ? videos.size(0) : 0; }
};

struct Corpus {
  CorpusManifest manifest;
  VideoSet train;
  VideoSet val;
};

Corpus load_corpus(const std::filesystem::path& dir);

/// Generates the clips in memory without touching the disk.
Corpus synthesize_corpus(int64_t count, uint64_t base_seed, const SceneRanges& ranges);

}  // namespace pvvae
