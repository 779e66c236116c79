#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "shadoc/cli.hpp"
#include "support/fixtures.hpp"

namespace {

namespace fs = std::filesystem;
using namespace shadoc;
using imaging::image;

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "shadoc_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SHADOC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

/// input/ and target/ holding two small band pairs.
fs::path make_dataset(const fs::path& root) {
  fs::create_directories(root / "input");
  fs::create_directories(root / "target");
  const auto a = fixtures::flat_page(16, 16, {230, 226, 214});
  const auto b = fixtures::flat_page(16, 16, {212, 222, 236});
  imaging::save_image(fixtures::with_band(a, true, 3, 8, 0.4), root / "input" / "a.png");
  imaging::save_image(a, root / "target" / "a.png");
  imaging::save_image(fixtures::with_band(b, false, 9, 13, 0.4), root / "input" / "b.png");
  imaging::save_image(b, root / "target" / "b.png");
  return root;
}

std::string tiny_config(const fs::path& data, const fs::path& out, std::size_t steps) {
  return "model.base_channels = 4\nmodel.std_channels = 4\nmodel.std_blocks = 1\nmodel.blocks_per_level = 1\n"
         "model.spp_scales = 1,2\n"
         "train.steps = " + std::to_string(steps) + "\ntrain.seed = 11\ntrain.eval_every = 0\n"
         "data.train_dir = " + data.string() + "\ntrain.out_dir = " + out.string() + "\n";
}

// ---- config ----------------------------------------------------------------------

TEST(Config, ParsesKeysCommentsAndLists) {
  const auto cfg = cli::parse_config(
      "# comment\nmodel.base_channels = 8   # trailing\n\nmodel.spp_scales = 1, 3\ntrain.lr=0.001\n"
      "model.use_std = false\nloss.w_p = 0\ndata.resize = 32\n");
  EXPECT_EQ(cfg.model.base_channels, 8u);
  EXPECT_EQ(cfg.model.spp_scales, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(cfg.train.adam.lr, 0.001);
  EXPECT_FALSE(cfg.model.use_std);
  EXPECT_EQ(cfg.loss.perc, 0.0);
  EXPECT_EQ(cfg.resize, 32u);
  EXPECT_EQ(cfg.out_dir, ".");
}

TEST(Config, RejectsBadInput) {
  for (const char* text : {"model.base_chanels = 8\n", "model.base_channels 8\n", "model.base_channels = eight\n",
                           "train.lr = -1\n", "model.use_std = maybe\n", "train.steps = 1\ntrain.steps = 2\n",
                           "model.heads = 3\n", "loss.w_ssim = -0.5\n"})
    EXPECT_THROW(cli::parse_config(text), config_error) << text;
  try {
    cli::parse_config("\n\nbogus.key = 1\n");
  } catch (const config_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bogus.key"), std::string::npos);
  }
}

TEST(Config, EchoRoundTrips) {
  const auto cfg = cli::parse_config("train.lr = 0.1\ntrain.flip_p = 0.3\nmodel.spp_scales = 1,2,4,8\ndata.val_dir = v\n");
  const auto echo = cli::format_config(cfg);
  EXPECT_EQ(cli::parse_config(echo), cfg);
  EXPECT_EQ(cli::format_config(cli::parse_config(echo)), echo);
  EXPECT_NE(echo.find("train.lr = 0.10000000000000001\n"), std::string::npos);
  EXPECT_EQ(cli::parse_config(cli::format_config({})), cli::run_config{});
}

// ---- dataset ----------------------------------------------------------------------

TEST(Dataset, PairsByName) {
  const auto root = make_dataset(fresh_dir("pairs"));
  const auto idx = cli::index_dataset(root);
  ASSERT_EQ(idx.size(), 2u);
  EXPECT_EQ(idx[0].name, "a.png");
  EXPECT_EQ(idx[1].name, "b.png");
  const auto data = cli::load_pairs(idx);
  EXPECT_EQ(data[0].input.shape(), (ad::shape_t{1, 3, 16, 16}));
  EXPECT_EQ(cli::load_pairs(idx, 24)[1].target.shape(), (ad::shape_t{1, 3, 24, 24}));
}

TEST(Dataset, UnpairedFileIsNamed) {
  const auto root = make_dataset(fresh_dir("unpaired"));
  imaging::save_image(fixtures::flat_page(16, 16, {1, 2, 3}), root / "input" / "orphan.png");
  try {
    cli::index_dataset(root);
    FAIL() << "orphan accepted";
  } catch (const cli::data_error& e) {
    EXPECT_NE(std::string(e.what()).find("orphan.png"), std::string::npos);
  }
  EXPECT_THROW(cli::index_dataset(fresh_dir("empty")), cli::data_error);
  EXPECT_THROW(cli::index_dataset(root / "missing"), cli::data_error);
}

TEST(Dataset, ExtentMismatchIsDataError) {
  const auto root = make_dataset(fresh_dir("extents"));
  imaging::save_image(fixtures::flat_page(16, 12, {1, 2, 3}), root / "target" / "a.png");
  EXPECT_THROW(cli::load_pairs(cli::index_dataset(root)), cli::data_error);
}

// ---- train ------------------------------------------------------------------------

TEST(Train, WritesCheckpointLogAndIsDeterministic) {
  const auto dir = fresh_dir("train");
  const auto data = make_dataset(dir / "data");
  write_text(dir / "one.cfg", tiny_config(data, dir / "one", 3));
  write_text(dir / "two.cfg", tiny_config(data, dir / "two", 3));
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_train(dir / "one.cfg", out, err), cli::ok) << err.str();
  ASSERT_EQ(run_cli("train --config " + (dir / "two.cfg").string()), 0);
  EXPECT_EQ(imaging::read_file(dir / "one" / "model.sdcf"), imaging::read_file(dir / "two" / "model.sdcf"));
  const auto log = read_text(dir / "one" / "train.log");
  EXPECT_EQ(log.rfind("# config\n", 0), 0u);
  EXPECT_NE(log.find("model.base_channels = 4\n"), std::string::npos);
  EXPECT_NE(log.find("train.mixup_p = 0.5\n"), std::string::npos);
  EXPECT_NE(log.find("# end config\nstep=1 mse="), std::string::npos);
  EXPECT_NE(log.find("step=3 mse="), std::string::npos);
  EXPECT_NE(log.find("final mean psnr="), std::string::npos);
  EXPECT_NE(out.str().find("final a.png psnr="), std::string::npos);
  EXPECT_NE(out.str().find("checkpoint "), std::string::npos);
}

TEST(Train, ExitCodes) {
  const auto dir = fresh_dir("train_codes");
  const auto data = make_dataset(dir / "data");
  write_text(dir / "bad.cfg", "model.nonsense = 1\n");
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.cfg").string()), 4);
  EXPECT_EQ(run_cli("train --config " + (dir / "absent.cfg").string()), 4);
  EXPECT_EQ(run_cli("train"), 4);
  EXPECT_EQ(run_cli("frobnicate"), 4);
  imaging::save_image(fixtures::flat_page(16, 16, {1, 2, 3}), data / "target" / "orphan.png");
  write_text(dir / "orphan.cfg", tiny_config(data, dir / "out", 1));
  EXPECT_EQ(run_cli("train --config " + (dir / "orphan.cfg").string()), 2);
  write_text(dir / "nodata.cfg", "train.steps = 1\n");
  EXPECT_EQ(run_cli("train --config " + (dir / "nodata.cfg").string()), 4);
}

// ---- infer ------------------------------------------------------------------------

class InferTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fresh_dir("infer");
    const auto data = make_dataset(dir_ / "data");
    write_text(dir_ / "zero.cfg", tiny_config(data, dir_ / "zero", 0));
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_train(dir_ / "zero.cfg", out, err), cli::ok) << err.str();
  }
  static fs::path ckpt() { return dir_ / "zero" / "model.sdcf"; }
  static inline fs::path dir_;
};

TEST_F(InferTest, FreshModelReproducesInputAtAnyExtent) {
  rng gen(7);
  const auto img = fixtures::random_image(gen, 100, 77, 3);
  imaging::save_image(img, dir_ / "odd.png");
  ASSERT_EQ(run_cli("infer --ckpt " + ckpt().string() + " --in " + (dir_ / "odd.png").string() + " --out " +
                    (dir_ / "odd_out.png").string() + " --emit-mask " + (dir_ / "odd_mask.png").string()),
            0);
  const auto back = imaging::load_image(dir_ / "odd_out.png");
  EXPECT_EQ(back.width, 100u);
  EXPECT_EQ(back.height, 77u);
  EXPECT_EQ(back.pixels, img.pixels);
  const auto m = imaging::load_image(dir_ / "odd_mask.png");
  EXPECT_EQ(m.channels, 1u);
  EXPECT_EQ(m.width, 100u);
}

TEST_F(InferTest, GrayInputIsReplicated) {
  rng gen(8);
  const auto g = fixtures::random_image(gen, 20, 18, 1);
  imaging::save_image(g, dir_ / "gray.png");
  ASSERT_EQ(cli::cmd_infer(ckpt(), dir_ / "gray.png", dir_ / "gray_out.png"), cli::ok);
  const auto back = imaging::load_image(dir_ / "gray_out.png");
  EXPECT_EQ(back.channels, 3u);
  EXPECT_EQ(back.pixels, imaging::to_rgb(g).pixels);
}

TEST_F(InferTest, CheckpointFailuresExitThree) {
  rng gen(9);
  imaging::save_image(fixtures::random_image(gen, 16, 16, 3), dir_ / "x.png");
  const std::string io = " --in " + (dir_ / "x.png").string() + " --out " + (dir_ / "y.png").string();
  EXPECT_EQ(run_cli("infer --ckpt " + (dir_ / "missing.sdcf").string() + io), 3);
  write_text(dir_ / "garbage.sdcf", "not a checkpoint");
  EXPECT_EQ(run_cli("infer --ckpt " + (dir_ / "garbage.sdcf").string() + io), 3);

  const auto good = train::load_checkpoint(ckpt());
  train::checkpoint bad;
  for (const auto& e : good.entries()) {
    if (e.name == "embed.conv.bias")
      bad.add(e.name, {e.shape[0] + 1}, std::vector<float>(e.values.size() + 1, 0.f));
    else
      bad.add(e.name, e.shape, e.values);
  }
  train::save_checkpoint(bad, dir_ / "shape.sdcf");
  EXPECT_EQ(run_cli("infer --ckpt " + (dir_ / "shape.sdcf").string() + io), 3);
  EXPECT_EQ(run_cli("infer --ckpt " + ckpt().string() + " --in " + (dir_ / "nothing.png").string() + " --out " +
                    (dir_ / "y.png").string()),
            2);
}

// ---- eval -------------------------------------------------------------------------

TEST(Eval, IdenticalDirectories) {
  const auto root = make_dataset(fresh_dir("eval_same"));
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_eval(root / "target", root / "target", out, err), cli::ok) << err.str();
  EXPECT_EQ(out.str(),
            "a.png psnr=inf ssim=1.0000 rmse=0.0000\n"
            "b.png psnr=inf ssim=1.0000 rmse=0.0000\n"
            "mean psnr=inf ssim=1.0000 rmse=0.0000\n");
}

TEST(Eval, UnitOffset) {
  const auto dir = fresh_dir("eval_offset");
  fs::create_directories(dir / "p");
  fs::create_directories(dir / "g");
  rng gen(10);
  auto g = fixtures::random_image(gen, 16, 16, 3);
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(std::min<int>(p, 254));
  auto p = g;
  for (auto& v : p.pixels) ++v;
  imaging::save_image(g, dir / "g" / "x.png");
  imaging::save_image(p, dir / "p" / "x.png");
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_eval(dir / "p", dir / "g", out, err), cli::ok);
  EXPECT_NE(out.str().find("x.png psnr=48.1308 "), std::string::npos) << out.str();
  EXPECT_NE(out.str().find("rmse=1.0000"), std::string::npos);
}

TEST(Eval, UnpairedExitsTwo) {
  const auto root = make_dataset(fresh_dir("eval_unpaired"));
  imaging::save_image(fixtures::flat_page(16, 16, {5, 5, 5}), root / "input" / "extra.png");
  EXPECT_EQ(run_cli("eval --pred " + (root / "input").string() + " --gt " + (root / "target").string()), 2);
  EXPECT_EQ(run_cli("eval --pred " + (root / "target").string() + " --gt " + (root / "target").string()), 0);
}

// ---- mask -------------------------------------------------------------------------

TEST(Mask, OtsuBandAndConstantPage) {
  const auto dir = fresh_dir("mask");
  auto page = fixtures::flat_page(24, 20, {230, 230, 230});
  for (std::size_t y = 6; y < 11; ++y)
    for (std::size_t x = 0; x < 24; ++x)
      for (std::size_t c = 0; c < 3; ++c) page.at(x, y, c) = 90;
  imaging::save_image(page, dir / "band.png");
  ASSERT_EQ(cli::cmd_mask(dir / "band.png", (dir / "band").string()), cli::ok);
  const auto m = imaging::load_image(dir / "band_otsu.png");
  ASSERT_EQ(m.channels, 1u);
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 0; x < 24; ++x) ASSERT_EQ(m.at(x, y, 0), (y >= 6 && y < 11) ? 255 : 0) << x << "," << y;
  EXPECT_FALSE(fs::exists(dir / "band_soft.png"));

  imaging::save_image(fixtures::flat_page(12, 12, {128, 128, 128}), dir / "flat.png");
  ASSERT_EQ(run_cli("mask --in " + (dir / "flat.png").string() + " --out-prefix " + (dir / "flat").string()), 0);
  for (auto v : imaging::load_image(dir / "flat_otsu.png").pixels) ASSERT_EQ(v, 0);
}

TEST(Mask, SoftMaskWithCheckpoint) {
  const auto dir = fresh_dir("mask_soft");
  const auto data = make_dataset(dir / "data");
  write_text(dir / "c.cfg", tiny_config(data, dir / "m", 0));
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_train(dir / "c.cfg", out, err), cli::ok) << err.str();
  ASSERT_EQ(run_cli("mask --in " + (data / "input" / "a.png").string() + " --out-prefix " + (dir / "a").string() +
                    " --ckpt " + (dir / "m" / "model.sdcf").string()),
            0);
  const auto soft = imaging::load_image(dir / "a_soft.png");
  EXPECT_EQ(soft.width, 16u);
  EXPECT_EQ(soft.channels, 1u);
  EXPECT_EQ(run_cli("mask --in " + (data / "input" / "a.png").string() + " --out-prefix " + (dir / "b").string() +
                    " --ckpt " + (dir / "none.sdcf").string()),
            3);
}

}  // namespace
