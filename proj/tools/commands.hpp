#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pvvae::cli {

/// Bad flag combinations detected after parsing; mapped to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  std::vector<std::string> argv;
};

struct GenerateDataOptions {
  int64_t n = 0;
  std::optional<int64_t> frames;
  std::optional<int64_t> res;
};

struct TrainOptions {
  std::string data;
  std::string preset = "pr_motion_ft";
  std::string stage = "all";
  std::optional<int64_t> steps;
  std::optional<int64_t> image_steps, video_steps, finetune_steps;
  std::string init;
  std::string resume;
  std::optional<int64_t> checkpoint_every;
  std::vector<double> ablate_drop_ratio;
  std::vector<std::string> ablate_padding;
  std::vector<std::string> ablate_preset;
  std::string reference;
  bool no_generation = false;
};

struct FinetuneOptions {
  std::string data;
  std::string init;
  std::optional<int64_t> steps;
};

struct TrainFlowOptions {
  std::string data;
  std::string latents_from;
  std::optional<int64_t> steps;
};

struct EvalOptions {
  std::string data;
  std::string checkpoint;
  bool self_eval = false;
};

struct EvalGenOptions {
  std::string data;
  std::string flow;
  std::string vae;
  int64_t n = 256;
  std::string report;
};

struct VisualizeOptions {
  std::string data;
  std::string checkpoint;
  bool pca = false;
  bool flow = false;
  int64_t clips = 4;
};

int cmd_generate_data(const GlobalOptions& g, const GenerateDataOptions& o);
int cmd_train(const GlobalOptions& g, const TrainOptions& o);
int cmd_finetune_decoder(const GlobalOptions& g, const FinetuneOptions& o);
int cmd_train_flow(const GlobalOptions& g, const TrainFlowOptions& o);
int cmd_eval_recon(const GlobalOptions& g, const EvalOptions& o);
int cmd_eval_latent(const GlobalOptions& g, const EvalOptions& o);
int cmd_eval_gen(const GlobalOptions& g, const EvalGenOptions& o);
int cmd_visualize(const GlobalOptions& g, const VisualizeOptions& o);

}  // namespace pvvae::cli
