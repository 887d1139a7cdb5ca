#include "commands.hpp"

#include "pvvae/errors.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace pvvae::cli;

namespace {

void add_globals(CLI::App* cmd, GlobalOptions& g) {
  cmd->add_option("--config", g.config, "experiment config JSON (missing keys keep toy defaults)");
  cmd->add_option("--seed", g.seed, "seed for every random stream (overrides PVVAE_SEED and the config)");
  cmd->add_option("--out", g.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predictive video VAE toolkit: data, staged training, evaluation and plots"};
  app.require_subcommand(1);
  GlobalOptions g;
  for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);

  GenerateDataOptions gen;
  auto* c_gen = app.add_subcommand("generate-data", "write a synthetic moving-shapes corpus");
  add_globals(c_gen, g);
  c_gen->add_option("--n", gen.n, "number of clips")->required();
  c_gen->add_option("--frames", gen.frames, "frames per clip (1 + multiple of p_t)");
  c_gen->add_option("--res", gen.res, "square frame resolution");

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "staged training, or one ablation row per listed value");
  add_globals(c_train, g);
  c_train->add_option("--data", train.data, "corpus directory")->required();
  c_train->add_option("--preset", train.preset, "baseline | pr | pr_motion | pr_motion_ft");
  c_train->add_option("--stage", train.stage, "all | image | video | finetune");
  c_train->add_option("--steps", train.steps, "step budget of a single --stage");
  c_train->add_option("--image-steps", train.image_steps, "image pretraining budget for --stage all");
  c_train->add_option("--video-steps", train.video_steps, "video stage budget for --stage all");
  c_train->add_option("--finetune-steps", train.finetune_steps, "decoder fine-tuning budget for --stage all");
  c_train->add_option("--init", train.init, "start from this checkpoint's weights (skips image pretraining)");
  c_train->add_option("--resume", train.resume, "continue an interrupted run from its checkpoint");
  c_train->add_option("--checkpoint-every", train.checkpoint_every, "write a checkpoint every N steps");
  c_train->add_option("--ablate-drop-ratio", train.ablate_drop_ratio, "comma-separated max drop ratios")->delimiter(',');
  c_train->add_option("--ablate-padding", train.ablate_padding, "comma-separated padding strategies")->delimiter(',');
  c_train->add_option("--ablate-preset", train.ablate_preset, "comma-separated presets")->delimiter(',');
  c_train->add_option("--reference", train.reference, "real clips for frechet_proxy (default: the training corpus)");
  c_train->add_flag("--no-generation", train.no_generation, "skip the generation probe in ablation rows");

  FinetuneOptions ft;
  auto* c_ft = app.add_subcommand("finetune-decoder", "decoder-only stage with a frozen encoder");
  add_globals(c_ft, g);
  c_ft->add_option("--data", ft.data, "corpus directory")->required();
  c_ft->add_option("--init", ft.init, "checkpoint to fine-tune")->required();
  c_ft->add_option("--steps", ft.steps, "step budget");

  TrainFlowOptions flow;
  auto* c_flow = app.add_subcommand("train-flow", "fit a rectified-flow model on VAE latents");
  add_globals(c_flow, g);
  c_flow->add_option("--data", flow.data, "corpus directory")->required();
  c_flow->add_option("--latents-from", flow.latents_from, "VAE checkpoint")->required();
  c_flow->add_option("--steps", flow.steps, "flow-model training steps");

  EvalOptions recon;
  auto* c_recon = app.add_subcommand("eval-recon", "PSNR / SSIM on the val split");
  add_globals(c_recon, g);
  c_recon->add_option("--data", recon.data, "corpus directory")->required();
  c_recon->add_option("--ckpt", recon.checkpoint, "VAE checkpoint");
  c_recon->add_flag("--self-eval", recon.self_eval, "score the val clips against themselves");

  EvalOptions latent;
  auto* c_latent = app.add_subcommand("eval-latent", "LTD, prediction error and flow probe on the val split");
  add_globals(c_latent, g);
  c_latent->add_option("--data", latent.data, "corpus directory")->required();
  c_latent->add_option("--ckpt", latent.checkpoint, "VAE checkpoint")->required();

  EvalGenOptions egen;
  auto* c_egen = app.add_subcommand("eval-gen", "sample a flow model and score frechet_proxy");
  add_globals(c_egen, g);
  c_egen->add_option("--data", egen.data, "corpus of real clips")->required();
  c_egen->add_option("--flow", egen.flow, "flow model directory")->required();
  c_egen->add_option("--vae", egen.vae, "VAE checkpoint")->required();
  c_egen->add_option("--n", egen.n, "generated clips");
  c_egen->add_option("--report", egen.report, "metrics JSON path (default <out>/metrics.json)");

  VisualizeOptions vis;
  auto* c_vis = app.add_subcommand("visualize", "PCA, flow and prediction PNGs");
  add_globals(c_vis, g);
  c_vis->add_option("--data", vis.data, "corpus directory")->required();
  c_vis->add_option("--ckpt", vis.checkpoint, "VAE checkpoint")->required();
  c_vis->add_flag("--pca", vis.pca, "latent PCA grid");
  c_vis->add_flag("--flow", vis.flow, "ground-truth flow panels");
  c_vis->add_option("--clips", vis.clips, "val clips to show");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_gen) return cmd_generate_data(g, gen);
    if (*c_train) return cmd_train(g, train);
    if (*c_ft) return cmd_finetune_decoder(g, ft);
    if (*c_flow) return cmd_train_flow(g, flow);
    if (*c_recon) return cmd_eval_recon(g, recon);
    if (*c_latent) return cmd_eval_latent(g, latent);
    if (*c_egen) return cmd_eval_gen(g, egen);
    if (*c_vis) return cmd_visualize(g, vis);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const pvvae::TrainingAborted& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return 1;
  } catch (const pvvae::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
