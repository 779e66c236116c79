#include <CLI11.hpp>

#include <optional>
#include <string>

#include "shadoc/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Document shadow removal: train, infer, eval and mask."};
  app.require_subcommand(1);

  std::string config;
  auto* train = app.add_subcommand("train", "Train a model from a key = value config file");
  train->add_option("--config", config, "Config file")->required();

  std::string ckpt, in, out, mask;
  auto* infer = app.add_subcommand("infer", "Remove shadows from one image");
  infer->add_option("--ckpt", ckpt, "Checkpoint (.sdcf)")->required();
  infer->add_option("--in", in, "Input image")->required();
  infer->add_option("--out", out, "Output PNG")->required();
  infer->add_option("--emit-mask", mask, "Also write the soft shadow mask here");

  std::string pred, gt;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--pred", pred, "Directory of predictions")->required();
  eval->add_option("--gt", gt, "Directory of ground-truth images with the same names")->required();

  std::string mask_in, prefix, mask_ckpt;
  auto* maskc = app.add_subcommand("mask", "Write the Otsu prior and optionally the detector mask");
  maskc->add_option("--in", mask_in, "Input image")->required();
  maskc->add_option("--out-prefix", prefix, "Output prefix")->required();
  maskc->add_option("--ckpt", mask_ckpt, "Checkpoint for the soft mask");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : shadoc::cli::bad_config;
  }

  using namespace shadoc::cli;
  if (*train) return cmd_train(config);
  if (*infer) return cmd_infer(ckpt, in, out, mask.empty() ? std::nullopt : std::optional<std::filesystem::path>(mask));
  if (*eval) return cmd_eval(pred, gt);
  return cmd_mask(mask_in, prefix,
                  mask_ckpt.empty() ? std::nullopt : std::optional<std::filesystem::path>(mask_ckpt));
}
