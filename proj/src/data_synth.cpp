#include "pvvae/data_synth.hpp"

#include "pvvae/errors.hpp"
#include "pvvae/rng.hpp"
#include "pvvae/tensor_io.hpp"

#include <torch/torch.h>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace pvvae {

void SceneSpec::validate() const {
  if (frames < 1 || height < 1 || width < 1) throw ConfigError("scene dimensions must be positive");
  for (const auto& s : shapes) {
    if (std::abs(s.vx) > width / 4.0 || std::abs(s.vy) > height / 4.0)
      throw ConfigError("shape velocity exceeds a quarter of the frame per step");
    if (s.size <= 0.0 || s.aspect <= 0.0) throw ConfigError("shape size must be positive");
  }
}

void SceneRanges::validate() const {
  if (min_shapes < 0 || max_shapes < min_shapes) throw ConfigError("invalid shape count range");
  if (max_speed < 0 || max_speed > std::min(height, width) / 4) throw ConfigError("max_speed out of range");
  if (min_size <= 0.0 || max_size < min_size) throw ConfigError("invalid size range");
  if (frames < 1 || height < 1 || width < 1) throw ConfigError("scene dimensions must be positive");
}

nlohmann::json to_json(const SceneRanges& r) {
  nlohmann::ordered_json j;
  j["min_shapes"] = r.min_shapes;
  j["max_shapes"] = r.max_shapes;
  j["max_speed"] = r.max_speed;
  j["min_size"] = r.min_size;
  j["max_size"] = r.max_size;
  j["texture_probability"] = r.texture_probability;
  j["frames"] = r.frames;
  j["height"] = r.height;
  j["width"] = r.width;
  return j;
}

SceneRanges scene_ranges_from_json(const nlohmann::json& j) {
  SceneRanges r;
  r.min_shapes = j.value("min_shapes", r.min_shapes);
  r.max_shapes = j.value("max_shapes", r.max_shapes);
  r.max_speed = j.value("max_speed", r.max_speed);
  r.min_size = j.value("min_size", r.min_size);
  r.max_size = j.value("max_size", r.max_size);
  r.texture_probability = j.value("texture_probability", r.texture_probability);
  r.frames = j.value("frames", r.frames);
  r.height = j.value("height", r.height);
  r.width = j.value("width", r.width);
  r.validate();
  return r;
}

SceneSpec sample_scene(const SceneRanges& ranges, uint64_t seed) {
  ranges.validate();
  Rng rng(seed);
  SceneSpec spec;
  spec.frames = ranges.frames;
  spec.height = ranges.height;
  spec.width = ranges.width;
  spec.seed = seed;
  spec.background = rng.uniform() < ranges.texture_probability ? Background::kNoiseTexture : Background::kSolid;
  for (auto& c : spec.background_color) c = static_cast<float>(rng.uniform() * 1.2 - 0.9);

  const int64_t n = rng.uniform_int(ranges.min_shapes, ranges.max_shapes);
  for (int64_t i = 0; i < n; ++i) {
    Shape s;
    s.kind = rng.uniform() < 0.5 ? ShapeKind::kCircle : ShapeKind::kRectangle;
    s.x0 = static_cast<double>(rng.uniform_int(0, ranges.width - 1));
    s.y0 = static_cast<double>(rng.uniform_int(0, ranges.height - 1));
    // Integer velocities keep rendered motion exactly equal to the flow label.
    do {
      s.vx = static_cast<double>(rng.uniform_int(-ranges.max_speed, ranges.max_speed));
      s.vy = static_cast<double>(rng.uniform_int(-ranges.max_speed, ranges.max_speed));
    } while (ranges.max_speed > 0 && s.vx == 0.0 && s.vy == 0.0);
    s.size = ranges.min_size + rng.uniform() * (ranges.max_size - ranges.min_size);
    s.aspect = 0.5 + rng.uniform();
    for (auto& c : s.color) c = static_cast<float>(rng.uniform() * 1.8 - 0.9);
    spec.shapes.push_back(s);
  }
  return spec;
}

namespace {

double wrap_delta(double d, double period) { return d - period * std::round(d / period); }

double wrap_coord(double v, double period) {
  double r = std::fmod(v, period);
  return r < 0 ? r + period : r;
}

bool covers(const Shape& s, double cx, double cy, double px, double py, int64_t height, int64_t width) {
  const double dx = wrap_delta(px - cx, static_cast<double>(width));
  const double dy = wrap_delta(py - cy, static_cast<double>(height));
  if (s.kind == ShapeKind::kCircle) return dx * dx + dy * dy <= s.size * s.size;
  return std::abs(dx) <= s.size && std::abs(dy) <= s.size * s.aspect;
}

torch::Tensor noise_texture(int64_t height, int64_t width, uint64_t seed) {
  Rng rng(derive_seed(seed, 0x7e47));
  const int64_t gh = std::max<int64_t>(2, height / 8), gw = std::max<int64_t>(2, width / 8);
  auto grid = rng.uniform({1, 3, gh, gw}) * 1.2 - 0.6;
  auto up = torch::nn::functional::interpolate(
      grid, torch::nn::functional::InterpolateFuncOptions()
                .size(std::vector<int64_t>{height, width})
                .mode(torch::kBilinear)
                .align_corners(false));
  return up[0].permute({1, 2, 0}).contiguous();  // (H, W, 3)
}

}  // namespace

std::array<double, 2> shape_center(const Shape& shape, int64_t frame, int64_t height, int64_t width) {
  const double i = static_cast<double>(frame - 1);
  return {wrap_coord(shape.x0 + shape.vx * i, static_cast<double>(width)),
          wrap_coord(shape.y0 + shape.vy * i, static_cast<double>(height))};
}

SyntheticClip generate_clip(const SceneSpec& spec) {
  spec.validate();
  const int64_t F = spec.frames, H = spec.height, W = spec.width;
  auto video = torch::empty({F, H, W, 3}, torch::kFloat32);
  auto flow = torch::zeros({std::max<int64_t>(F - 1, 0), H, W, 2}, torch::kFloat32);

  torch::Tensor background;
  if (spec.background == Background::kNoiseTexture) {
    background = noise_texture(H, W, spec.seed);
  } else {
    background = torch::tensor(std::vector<float>(spec.background_color.begin(), spec.background_color.end()))
                     .view({1, 1, 3})
                     .expand({H, W, 3})
                     .contiguous();
  }
  auto bg = background.accessor<float, 3>();
  auto px = video.accessor<float, 4>();
  auto fl = flow.accessor<float, 4>();

  std::vector<std::array<double, 2>> centers(spec.shapes.size());
  for (int64_t f = 0; f < F; ++f) {
    for (size_t s = 0; s < spec.shapes.size(); ++s) centers[s] = shape_center(spec.shapes[s], f + 1, H, W);
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        int64_t owner = -1;
        for (size_t s = 0; s < spec.shapes.size(); ++s)
          if (covers(spec.shapes[s], centers[s][0], centers[s][1], static_cast<double>(x), static_cast<double>(y),
                     H, W))
            owner = static_cast<int64_t>(s);
        for (int c = 0; c < 3; ++c)
          px[f][y][x][c] = owner < 0 ? bg[y][x][c] : spec.shapes[static_cast<size_t>(owner)].color[c];
        if (f + 1 < F && owner >= 0) {
          fl[f][y][x][0] = static_cast<float>(spec.shapes[static_cast<size_t>(owner)].vx);
          fl[f][y][x][1] = static_cast<float>(spec.shapes[static_cast<size_t>(owner)].vy);
        }
      }
    }
  }
  return {VideoClip{video.clamp(-1.0, 1.0), 0.0}, flow};
}

Split split_for_index(int64_t index) { return index % 10 == 9 ? Split::kVal : Split::kTrain; }

namespace {

std::string indexed_name(const char* prefix, int64_t index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06lld.pvt", prefix, static_cast<long long>(index));
  return buf;
}

}  // namespace

CorpusManifest generate_corpus(const std::filesystem::path& dir, int64_t count, uint64_t base_seed,
                               const SceneRanges& ranges) {
  if (count < 1) throw InputError("corpus size must be >= 1");
  ranges.validate();
  std::filesystem::create_directories(dir / "clips");
  std::filesystem::create_directories(dir / "flows");

  CorpusManifest manifest{base_seed, ranges, {}};
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (int64_t i = 0; i < count; ++i) {
    CorpusEntry e;
    e.index = i;
    e.seed = base_seed + static_cast<uint64_t>(i);
    e.clip_path = "clips/" + indexed_name("clip", i);
    e.flow_path = "flows/" + indexed_name("flow", i);
    e.split = split_for_index(i);
    const auto clip = generate_clip(sample_scene(ranges, e.seed));
    write_tensor(dir / e.clip_path, clip.clip.data, "THWC");
    write_tensor(dir / e.flow_path, clip.flow, "THWC");
    entries.push_back({{"index", e.index},
                       {"seed", e.seed},
                       {"clip", e.clip_path},
                       {"flow", e.flow_path},
                       {"split", e.split == Split::kVal ? "val" : "train"}});
    manifest.entries.push_back(e);
  }
  nlohmann::ordered_json j;
  j["format"] = "pvvae-corpus";
  j["version"] = 1;
  j["base_seed"] = base_seed;
  j["count"] = count;
  j["ranges"] = to_json(ranges);
  j["entries"] = entries;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write corpus manifest in " + dir.string());
  out << j.dump(2) << "\n";
  return manifest;
}

CorpusManifest read_corpus_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("missing corpus manifest in " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corpus manifest: ") + e.what());
  }
  if (j.value("format", "") != "pvvae-corpus") throw FormatError("not a pvvae corpus manifest");
  CorpusManifest m;
  m.base_seed = j.at("base_seed").get<uint64_t>();
  m.ranges = scene_ranges_from_json(j.at("ranges"));
  for (const auto& e : j.at("entries")) {
    CorpusEntry c;
    c.index = e.at("index").get<int64_t>();
    c.seed = e.at("seed").get<uint64_t>();
    c.clip_path = e.at("clip").get<std::string>();
    c.flow_path = e.at("flow").get<std::string>();
    c.split = e.at("split").get<std::string>() == "val" ? Split::kVal : Split::kTrain;
    m.entries.push_back(c);
  }
  return m;
}

namespace {

VideoSet stack_set(const std::vector<torch::Tensor>& clips, const std::vector<torch::Tensor>& flows,
                   std::vector<uint64_t> seeds) {
  VideoSet set;
  if (clips.empty()) return set;
  std::vector<torch::Tensor> batch;
  batch.reserve(clips.size());
  for (const auto& c : clips) batch.push_back(c.permute({3, 0, 1, 2}));
  set.videos = torch::stack(batch).contiguous();
  set.flows = torch::stack(flows).contiguous();
  set.seeds = std::move(seeds);
  return set;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  corpus.manifest = read_corpus_manifest(dir);
  std::vector<torch::Tensor> tc, tf, vc, vf;
  std::vector<uint64_t> ts, vs;
  for (const auto& e : corpus.manifest.entries) {
    auto clip = read_tensor(dir / e.clip_path);
    auto flow = read_tensor(dir / e.flow_path);
    if (clip.dim() != 4 || clip.size(3) != 3) throw FormatError(e.clip_path + ": expected (F, H, W, 3)");
    if (e.split == Split::kVal) {
      vc.push_back(clip), vf.push_back(flow), vs.push_back(e.seed);
    } else {
      tc.push_back(clip), tf.push_back(flow), ts.push_back(e.seed);
    }
  }
  corpus.train = stack_set(tc, tf, ts);
  corpus.val = stack_set(vc, vf, vs);
  return corpus;
}

Corpus synthesize_corpus(int64_t count, uint64_t base_seed, const SceneRanges& ranges) {
  if (count < 1) throw InputError("corpus size must be >= 1");
  Corpus corpus;
  corpus.manifest.base_seed = base_seed;
  corpus.manifest.ranges = ranges;
  std::vector<torch::Tensor> tc, tf, vc, vf;
  std::vector<uint64_t> ts, vs;
  for (int64_t i = 0; i < count; ++i) {
    const uint64_t seed = base_seed + static_cast<uint64_t>(i);
    auto clip = generate_clip(sample_scene(ranges, seed));
    if (split_for_index(i) == Split::kVal) {
      vc.push_back(clip.clip.data), vf.push_back(clip.flow), vs.push_back(seed);
    } else {
      tc.push_back(clip.clip.data), tf.push_back(clip.flow), ts.push_back(seed);
    }
  }
  corpus.train = stack_set(tc, tf, ts);
  corpus.val = stack_set(vc, vf, vs);
  return corpus;
}

}  // namespace pvvae
