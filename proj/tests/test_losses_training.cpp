#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <regex>
#include <sstream>

#include "shadoc/imaging.hpp"
#include "shadoc/train.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

namespace {

using namespace shadoc;
using ad::shape_t;
using ad::tensor;
using gradcheck::dtensor;

nn::model_config tiny() {
  nn::model_config c;
  c.base_channels = 4;
  c.std_channels = 4;
  c.std_blocks = 1;
  c.blocks_per_level = 1;
  c.spp_scales = {1, 2};
  return c;
}

std::vector<train::sample_pair<float>> tiny_pairs() {
  std::vector<train::sample_pair<float>> out;
  for (const auto& p : {fixtures::document_pair{"a", fixtures::with_band(fixtures::flat_page(16, 16, {230, 225, 215}), true, 4, 9, 0.4),
                                                fixtures::flat_page(16, 16, {230, 225, 215})},
                        fixtures::document_pair{"b", fixtures::with_band(fixtures::flat_page(16, 16, {210, 220, 235}), false, 6, 12, 0.4),
                                                fixtures::flat_page(16, 16, {210, 220, 235})}})
    out.push_back({p.name, imaging::to_tensor<float>(p.input), imaging::to_tensor<float>(p.target)});
  return out;
}

train::train_options quick(std::size_t steps) {
  train::train_options o;
  o.steps = steps;
  o.seed = 3;
  o.eval_every = 0;
  return o;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "shadoc_training_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// ---- losses -------------------------------------------------------------------

TEST(MseLoss, ClosedFormsAndOracle) {
  rng gen(90);
  const auto a = gradcheck::random(gen, {1, 3, 4, 4});
  EXPECT_EQ(train::mse_loss(a, a).item(), 0.0);
  EXPECT_NEAR(train::mse_loss(ad::affine(a, 1.0, 0.1), a).item(), 0.01, 1e-12);
  tensor x({1, 1, 4, 4}), y({1, 1, 4, 4});
  double s = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    x.mutable_values()[i] = static_cast<float>(gen.uniform());
    y.mutable_values()[i] = static_cast<float>(gen.uniform());
    s += std::pow(double(x.values()[i]) - double(y.values()[i]), 2);
  }
  EXPECT_NEAR(train::mse_loss(x, y).item(), s / 16, 1e-7);
  EXPECT_THROW(train::mse_loss(x, tensor({1, 1, 4, 5})), dimension_error);
}

TEST(SsimLoss, AgreesWithTheImageMetric) {
  rng gen(91);
  for (int i = 0; i < 5; ++i) {
    const auto a = fixtures::random_image(gen, 12 + gen.index(5), 11 + gen.index(5), 3);
    auto b = a;
    for (auto& p : b.pixels) p = static_cast<std::uint8_t>(std::clamp<int>(p + int(gen.index(41)) - 20, 0, 255));
    const double loss = train::ssim_loss(imaging::to_tensor<double>(a), imaging::to_tensor<double>(b)).item();
    EXPECT_NEAR(1 - loss, imaging::ssim(a, b), 1e-9);
  }
}

TEST(SsimLoss, ZeroAtIdentityAndBounded) {
  rng gen(92);
  const auto a = gradcheck::random(gen, {1, 3, 12, 12}, 0, 1);
  EXPECT_NEAR(train::ssim_loss(a, a).item(), 0.0, 1e-12);
  for (int i = 0; i < 20; ++i) {
    const auto b = gradcheck::random(gen, {1, 3, 12, 12}, 0, 1);
    const double l = train::ssim_loss(a, b).item();
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 2.0);
  }
  EXPECT_THROW(train::ssim_loss(dtensor({1, 1, 10, 12}), dtensor({1, 1, 10, 12})), dimension_error);
}

TEST(SsimLoss, StationaryAtTarget) {
  rng gen(93);
  const auto target = gradcheck::random(gen, {1, 2, 12, 12}, 0, 1);
  auto pred = target.detach();
  pred.set_requires_grad(true);
  {
    gradcheck::dtape tp;
    auto s = tp.activate();
    tp.backward(train::ssim_loss(pred, target));
  }
  for (double g : pred.grad()) EXPECT_NEAR(g, 0.0, 1e-9);
  const double h = 1e-4;
  for (std::size_t i : {0u, 37u, 200u}) {
    auto up = target.detach(), down = target.detach();
    up.mutable_values()[i] += h;
    down.mutable_values()[i] -= h;
    EXPECT_NEAR((train::ssim_loss(up, target).item() - train::ssim_loss(down, target).item()) / (2 * h), 0.0, 1e-6);
  }
}

TEST(PerceptualLoss, IdentitySymmetryAndPositivity) {
  train::perceptual_extractor<double> ex;
  rng gen(94);
  const auto a = gradcheck::random(gen, {1, 3, 16, 16}, 0, 1);
  const auto b = gradcheck::random(gen, {1, 3, 16, 16}, 0, 1);
  EXPECT_EQ(train::perceptual_loss(a, a, ex).item(), 0.0);
  EXPECT_NEAR(train::perceptual_loss(a, b, ex).item(), train::perceptual_loss(b, a, ex).item(), 1e-7);
  dtensor page({1, 3, 16, 16}, 0.8);
  auto patched = page.detach();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 4; y < 10; ++y)
      for (std::size_t x = 4; x < 10; ++x) patched.mutable_values()[(c * 16 + y) * 16 + x] -= 0.5;
  EXPECT_GT(train::perceptual_loss(page, patched, ex).item(), 0.0);
}

TEST(PerceptualLoss, ExtractorIsFrozenAndSeeded) {
  train::perceptual_extractor<float> a, b, c(12345);
  ASSERT_EQ(a.params().size(), 6u);
  EXPECT_EQ(a.params().parameter_count(true), 0u);
  EXPECT_EQ(a.params().at("perc.stage0.weight").shape(), (shape_t{8, 3, 3, 3}));
  EXPECT_EQ(a.params().at("perc.stage2.weight").shape(), (shape_t{32, 16, 3, 3}));
  const auto& wa = a.params().at("perc.stage1.weight");
  EXPECT_EQ(0, std::memcmp(wa.data(), b.params().at("perc.stage1.weight").data(), wa.numel() * sizeof(float)));
  EXPECT_NE(0, std::memcmp(wa.data(), c.params().at("perc.stage1.weight").data(), wa.numel() * sizeof(float)));
  const auto feats = a.features(tensor({1, 3, 16, 16}, 0.5f));
  ASSERT_EQ(feats.size(), 3u);
  EXPECT_EQ(feats[2].shape(), (shape_t{1, 32, 2, 2}));
}

TEST(TotalLoss, PaperWeights) {
  const auto t = ad::weighted_sum<double>({dtensor::scalar(1), dtensor::scalar(0.5), dtensor::scalar(0.2)}, {1, 0.3, 0.7});
  EXPECT_NEAR(t.item(), 1.29, 1e-15);
  EXPECT_EQ(ad::weighted_sum<double>({dtensor::scalar(0), dtensor::scalar(0), dtensor::scalar(0)}, {1, 0.3, 0.7}).item(), 0.0);
}

TEST(TotalLoss, ExactWeightedSumOfComponents) {
  train::perceptual_extractor<float> ex;
  rng gen(95);
  const train::loss_weights w;
  for (int i = 0; i < 10; ++i) {
    tensor a({1, 3, 16, 16}), b({1, 3, 16, 16});
    for (auto& v : a.mutable_values()) v = static_cast<float>(gen.uniform());
    for (auto& v : b.mutable_values()) v = static_cast<float>(gen.uniform());
    const auto t = train::total_loss(a, b, w, ex);
    const double expect = 1.0 * double(t.mse.item()) + 0.3 * double(t.ssim.item()) + 0.7 * double(t.perc.item());
    EXPECT_EQ(t.weighted(w), expect);
    EXPECT_EQ(t.total.item(), static_cast<float>(expect));
    EXPECT_GE(t.mse.item(), 0.f);
    EXPECT_GE(t.ssim.item(), 0.f);
    EXPECT_GE(t.perc.item(), 0.f);
  }
  tensor a({1, 3, 12, 12}, 0.4f);
  const auto z = train::total_loss(a, a, w, ex);
  EXPECT_EQ(z.total.item(), 0.f);
}

TEST(TotalLoss, RejectsNegativeWeights) {
  train::loss_weights w;
  w.ssim = -0.1;
  EXPECT_THROW(w.validate(), config_error);
}

TEST(Losses, Gradients) {
  rng gen(96);
  train::perceptual_extractor<double> ex;
  auto p = gradcheck::random(gen, {1, 3, 12, 12}, 0, 1);
  const auto t = gradcheck::random(gen, {1, 3, 12, 12}, 0, 1);
  for (const auto& [name, f] : std::vector<std::pair<const char*, std::function<dtensor()>>>{
           {"mse", [&] { return train::mse_loss(p, t); }},
           {"ssim", [&] { return train::ssim_loss(p, t); }},
           {"perceptual", [&] { return train::perceptual_loss(p, t, ex); }},
           {"total", [&] { return train::total_loss(p, t, {}, ex).total; }}}) {
    const auto r = gradcheck::check({&p}, f);
    EXPECT_TRUE(r.ok) << name << ": " << r.where;
  }
}

// ---- Adam ---------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParameters) {
  rng gen(97);
  nn::basic_param_store<double> store;
  auto w = store.add("w", {5}, nn::init::fan_in_uniform, gen);
  const std::vector<double> before(w.values().begin(), w.values().end());
  train::basic_adam<double> opt(store, {});
  opt.step(store);
  EXPECT_EQ(std::vector<double>(w.values().begin(), w.values().end()), before);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, FirstStepClosedForm) {
  rng gen(98);
  nn::basic_param_store<double> store;
  auto w = store.add("w", {1}, nn::init::zeros, gen);
  w.mutable_grad()[0] = 10;
  train::basic_adam<double> opt(store, {});
  opt.step(store);
  EXPECT_NEAR(w.item(), -1e-4 * 10 / (10 + 1e-8), 1e-15);
}

TEST(Adam, TwoStepsMatchHandRolledOracle) {
  rng gen(99);
  nn::basic_param_store<double> store;
  auto w = store.add("w", {3}, nn::init::fan_in_uniform, gen);
  const std::vector<double> g{0.3, -2.0, 1e-3};
  std::vector<double> theta(w.values().begin(), w.values().end()), m(3, 0), v(3, 0);
  train::adam_options o;
  o.lr = 1e-2;
  train::basic_adam<double> opt(store, o);
  for (int t = 1; t <= 2; ++t) {
    for (std::size_t i = 0; i < 3; ++i) {
      w.mutable_grad()[i] = g[i];
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      theta[i] -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
    }
    opt.step(store);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(w.values()[i], theta[i], 1e-9);
  for (const auto& vv : opt.second_moments())
    for (double x : vv) EXPECT_GE(x, 0.0);
}

TEST(Adam, ZeroLearningRateFreezes) {
  rng gen(100);
  nn::basic_param_store<float> store;
  auto w = store.add("w", {4, 4}, nn::init::fan_in_uniform, gen, 4);
  const std::vector<float> before(w.values().begin(), w.values().end());
  train::adam_options o;
  o.lr = 0;
  train::adam opt(store, o);
  for (int s = 0; s < 20; ++s) {
    for (auto& x : w.mutable_grad()) x = static_cast<float>(gen.uniform(-5, 5));
    opt.step(store);
  }
  EXPECT_EQ(std::vector<float>(w.values().begin(), w.values().end()), before);
  EXPECT_EQ(opt.steps(), 20u);
}

TEST(Adam, StateMismatch) {
  rng gen(101);
  nn::basic_param_store<float> a, b;
  a.add("w", {2}, nn::init::zeros, gen);
  b.add("w", {3}, nn::init::zeros, gen);
  train::adam opt(a, {});
  EXPECT_THROW(opt.step(b), state_error);
  b = {};
  b.add("v", {2}, nn::init::zeros, gen);
  EXPECT_THROW(opt.step(b), state_error);
}

// ---- augmentation ---------------------------------------------------------------

TEST(Augment, FlipIsAnInvolution) {
  rng gen(102);
  const auto x = gradcheck::random(gen, {1, 3, 5, 6});
  const auto y = train::flip_horizontal(train::flip_horizontal(x));
  EXPECT_EQ(0, std::memcmp(x.data(), y.data(), x.numel() * sizeof(double)));
  const auto row = train::flip_horizontal(tensor({1, 1, 1, 2}, std::vector<float>{3, 7}));
  EXPECT_EQ(row.values()[0], 7.f);
  EXPECT_EQ(row.values()[1], 3.f);
}

TEST(Augment, CropWindowAlwaysInBounds) {
  rng gen(103);
  train::augment_options o;
  o.crop = 24;
  for (int i = 0; i < 10000; ++i) {
    const auto t = train::draw_transform(32, 40, o, gen);
    ASSERT_GE(t.height, 26u);
    ASSERT_LE(t.height, 38u);
    ASSERT_LE(t.top + t.crop_h, t.height);
    ASSERT_LE(t.left + t.crop_w, t.width);
    ASSERT_EQ(t.crop_h, 24u);
  }
}

TEST(Augment, CropLargerThanImageIsAConfigError) {
  rng gen(104);
  train::augment_options o;
  o.crop = 64;
  EXPECT_THROW(train::draw_transform(32, 32, o, gen), config_error);
}

TEST(Augment, InputAndTargetShareTheTransform) {
  rng gen(105);
  train::augment_options o;
  o.crop = 12;
  for (int i = 0; i < 50; ++i) {
    train::sample_pair<double> p{"p", gradcheck::random(gen, {1, 3, 16, 20}), gradcheck::random(gen, {1, 3, 16, 20})};
    const auto seed = gen.next();
    rng g1(seed), g2(seed);
    const auto out = train::augment(p, g1, o);
    const auto t = train::draw_transform(16, 20, o, g2);
    const auto wi = train::apply_transform(p.input, t), wt = train::apply_transform(p.target, t);
    EXPECT_EQ(0, std::memcmp(out.input.data(), wi.data(), wi.numel() * sizeof(double)));
    EXPECT_EQ(0, std::memcmp(out.target.data(), wt.data(), wt.numel() * sizeof(double)));
  }
}

TEST(Mixup, ConvexCombination) {
  rng gen(106);
  train::sample_pair<double> a{"a", gradcheck::random(gen, {1, 3, 4, 4}), gradcheck::random(gen, {1, 3, 4, 4})};
  train::sample_pair<double> b{"b", gradcheck::random(gen, {1, 3, 4, 4}), gradcheck::random(gen, {1, 3, 4, 4})};
  const auto one = train::mixup(a, b, 1.0);
  EXPECT_EQ(0, std::memcmp(one.input.data(), a.input.data(), a.input.numel() * sizeof(double)));
  EXPECT_EQ(0, std::memcmp(one.target.data(), a.target.data(), a.target.numel() * sizeof(double)));
  const auto ab = train::mixup(a, b, 0.5), ba = train::mixup(b, a, 0.5);
  EXPECT_EQ(0, std::memcmp(ab.input.data(), ba.input.data(), ab.input.numel() * sizeof(double)));
  train::sample_pair<double> z{"z", dtensor({1}, 0.0), dtensor({1}, 0.0)}, t{"t", dtensor({1}, 10.0), dtensor({1}, 10.0)};
  EXPECT_NEAR(train::mixup(z, t, 0.3).input.item(), 7.0, 1e-12);
  EXPECT_THROW(train::mixup(a, z, 0.5), dimension_error);
}

// ---- checkpoint -------------------------------------------------------------------

TEST(Checkpoint, SingleTensorLayoutArithmetic) {
  train::checkpoint ck;
  ck.add("w", {1}, {1.0f});
  const auto bytes = train::encode_checkpoint(ck);
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 4 + 1 + 4 + 8 + 1 + 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SDCF");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[12], 1);
  EXPECT_EQ(bytes[16], 'w');
  EXPECT_EQ(bytes[17], 1);
  EXPECT_EQ(bytes[21], 1);
  EXPECT_EQ(bytes[29], 0);
  const std::vector<std::uint8_t> one{0x00, 0x00, 0x80, 0x3f};
  EXPECT_TRUE(std::equal(one.begin(), one.end(), bytes.end() - 4));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  train::trainer tr(tiny(), quick(0), {});
  const auto ck = tr.to_checkpoint();
  const auto path = scratch("round_trip.sdcf");
  train::save_checkpoint(ck, path);
  const auto back = train::load_checkpoint(path);
  EXPECT_EQ(back, ck);
  EXPECT_EQ(train::encode_checkpoint(back), train::encode_checkpoint(ck));
  const auto net = train::load_model(back);
  for (const auto& e : tr.net().params().entries()) {
    const auto& got = net.params().at(e.name);
    EXPECT_EQ(0, std::memcmp(got.data(), e.value.data(), got.numel() * sizeof(float))) << e.name;
  }
  EXPECT_EQ(net.config(), tiny());
}

TEST(Checkpoint, CorruptionIsReported) {
  train::checkpoint ck;
  ck.add("a", {2, 2}, {1, 2, 3, 4});
  auto bytes = train::encode_checkpoint(ck);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(train::decode_checkpoint(bad), format_error);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(train::decode_checkpoint(bad), format_error);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(train::decode_checkpoint(bad), format_error);
  for (std::size_t cut : {std::size_t(2), std::size_t(10), bytes.size() - 1}) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + cut);
    try {
      train::decode_checkpoint(part);
      FAIL() << "truncated at " << cut;
    } catch (const decode_error& e) {
      EXPECT_EQ(e.offset(), cut);
    }
  }
}

TEST(Checkpoint, ShapeConflictLeavesModelUntouched) {
  auto ck = train::trainer(tiny(), quick(0), {}).to_checkpoint();
  nn::model other(tiny(), 77);
  const auto before = std::vector<float>(other.params().entries()[0].value.values().begin(),
                                         other.params().entries()[0].value.values().end());
  auto wide = tiny();
  wide.base_channels = 8;
  nn::model mismatched(wide, 1);
  EXPECT_THROW(train::restore_params(mismatched.params(), ck), format_error);
  EXPECT_EQ(std::vector<float>(other.params().entries()[0].value.values().begin(),
                               other.params().entries()[0].value.values().end()),
            before);
}

TEST(Checkpoint, ExtractorIsSerialisedButNotTrainable) {
  train::trainer tr(tiny(), quick(0), {});
  const auto ck = tr.to_checkpoint();
  EXPECT_TRUE(ck.contains("perc.stage0.weight"));
  EXPECT_FALSE(tr.net().params().contains("perc.stage0.weight"));
  EXPECT_EQ(std::find(tr.optimiser().names().begin(), tr.optimiser().names().end(), "perc.stage0.weight"),
            tr.optimiser().names().end());
}

// ---- training loop ---------------------------------------------------------------

TEST(Trainer, SameSeedGivesIdenticalCheckpoints) {
  const auto data = tiny_pairs();
  std::ostringstream l1, l2;
  train::trainer a(tiny(), quick(4), {}), b(tiny(), quick(4), {});
  a.run(data, {}, l1);
  b.run(data, {}, l2);
  EXPECT_EQ(train::encode_checkpoint(a.to_checkpoint()), train::encode_checkpoint(b.to_checkpoint()));
  EXPECT_EQ(l1.str(), l2.str());
  auto other = quick(4);
  other.seed = 4;
  train::trainer c(tiny(), other, {});
  std::ostringstream l3;
  c.run(data, {}, l3);
  EXPECT_NE(train::encode_checkpoint(a.to_checkpoint()), train::encode_checkpoint(c.to_checkpoint()));
}

TEST(Trainer, ZeroStepsKeepsInitialisation) {
  std::ostringstream log;
  train::trainer a(tiny(), quick(0), {});
  a.run(tiny_pairs(), {}, log);
  nn::model fresh(tiny(), quick(0).seed);
  const auto ck = a.to_checkpoint();
  for (const auto& e : fresh.params().entries()) {
    const auto& v = ck.at(e.name).values;
    EXPECT_EQ(0, std::memcmp(v.data(), e.value.data(), v.size() * sizeof(float))) << e.name;
  }
  EXPECT_EQ(ck.at("adam.t").values[0], 0.f);
}

TEST(Trainer, LogLinesAndWeighting) {
  std::ostringstream log;
  auto o = quick(3);
  o.eval_every = 2;
  train::trainer tr(tiny(), o, {});
  const auto data = tiny_pairs();
  tr.run(data, data, log);
  const std::regex step_re(R"(step=(\d+) mse=(\S+) ssim=(\S+) perc=(\S+) total=(\S+))");
  std::istringstream in(log.str());
  std::string line;
  std::size_t steps = 0, evals = 0, finals = 0;
  while (std::getline(in, line)) {
    std::smatch m;
    if (std::regex_match(line, m, step_re)) {
      ++steps;
      const double want = 1.0 * std::stod(m[2]) + 0.3 * std::stod(m[3]) + 0.7 * std::stod(m[4]);
      EXPECT_NEAR(std::stod(m[5]), want, 1e-7) << line;
    } else if (line.rfind("eval step=2 psnr=", 0) == 0) {
      ++evals;
    } else if (line.rfind("final ", 0) == 0) {
      ++finals;
    }
  }
  EXPECT_EQ(steps, 3u);
  EXPECT_EQ(evals, 1u);
  EXPECT_EQ(finals, 3u);
  EXPECT_EQ(tr.history().size(), 3u);
}

TEST(Trainer, LossFallsOnTwoPairs) {
  auto o = quick(1500);
  o.augment.flip_p = 0;
  o.augment.scale_min = o.augment.scale_max = 1;
  o.mixup_p = 0;
  train::trainer tr(tiny(), o, {});
  std::ostringstream log;
  tr.run(tiny_pairs(), {}, log);
  const auto& h = tr.history();
  ASSERT_EQ(h.size(), 1500u);
  double avg = 0;
  for (std::size_t i = h.size() - 100; i < h.size(); ++i) avg += h[i].total / 100;
  EXPECT_LT(avg, 0.25 * h.front().total) << "first " << h.front().total << " last-100 mean " << avg;
}

TEST(Trainer, EmptyDatasetIsAConfigError) {
  std::ostringstream log;
  train::trainer tr(tiny(), quick(1), {});
  EXPECT_THROW(tr.run({}, {}, log), config_error);
}

TEST(Trainer, NonFiniteLossNamesTheOp) {
  train::trainer tr(tiny(), quick(1), {});
  auto bias = tr.net().params().at("embed.conv.bias");
  bias.mutable_values()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    tr.step(tiny_pairs()[0]);
    FAIL() << "NaN loss accepted";
  } catch (const numeric_error& e) {
    EXPECT_NE(std::string(e.what()).find("conv2d"), std::string::npos) << e.what();
  }
}

TEST(Trainer, OptionValidation) {
  auto o = quick(1);
  o.mixup_p = 1.5;
  EXPECT_THROW(o.validate(), config_error);
  o = quick(1);
  o.augment.scale_min = 1.3;
  EXPECT_THROW(o.validate(), config_error);
}

}  // namespace
