#pragma once

// Single-pair (batch 1) training loop. A run is fully determined by its seed:
// model initialisation and every sampling/augmentation draw come from one stream.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "shadoc/imaging/image.hpp"
#include "shadoc/imaging/metrics.hpp"
#include "shadoc/nn/model.hpp"
#include "shadoc/train/adam.hpp"
#include "shadoc/train/augment.hpp"
#include "shadoc/train/losses.hpp"
#include "shadoc/train/model_io.hpp"

namespace shadoc::train {

struct train_options {
  std::size_t steps = 1000;
  std::uint64_t seed = 1;
  adam_options adam;
  augment_options augment;
  double mixup_alpha = 0.2;
  double mixup_p = 0.5;
  std::size_t eval_every = 100;  // 0 disables periodic evaluation

  void validate() const {
    if (!(adam.lr >= 0)) throw config_error("train.lr must be non-negative");
    if (!(augment.flip_p >= 0 && augment.flip_p <= 1)) throw config_error("train.flip_p must lie in [0, 1]");
    if (!(mixup_p >= 0 && mixup_p <= 1)) throw config_error("train.mixup_p must lie in [0, 1]");
    if (!(mixup_alpha > 0)) throw config_error("train.mixup_alpha must be positive");
    if (!(augment.scale_min > 0 && augment.scale_min <= augment.scale_max))
      throw config_error("train.scale_min/scale_max must satisfy 0 < min <= max");
  }
};

struct step_record {
  std::size_t step = 0;
  double mse = 0, ssim = 0, perc = 0, total = 0;
};

struct pair_score {
  std::string name;
  imaging::metric_report metrics;
};

/// Model output for an 8-bit image, quantised back to 8 bits.
inline imaging::image predict(const nn::model& net, const imaging::image& img) {
  return imaging::from_tensor(net.forward(imaging::to_tensor<float>(img)).image);
}

inline std::vector<pair_score> score_pairs(const nn::model& net, const std::vector<sample_pair<float>>& pairs) {
  std::vector<pair_score> out;
  for (const auto& p : pairs) {
    const auto pred = predict(net, imaging::from_tensor(p.input));
    out.push_back({p.name, imaging::evaluate(pred, imaging::from_tensor(p.target))});
  }
  return out;
}

/// Arithmetic mean PSNR (infinite if any pair is exact).
inline double mean_psnr(const std::vector<pair_score>& s) {
  double sum = 0;
  for (const auto& x : s) sum += x.metrics.psnr;
  return s.empty() ? 0.0 : sum / static_cast<double>(s.size());
}

inline std::string format_step(const step_record& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "step=%zu mse=%.9g ssim=%.9g perc=%.9g total=%.9g", r.step, r.mse, r.ssim, r.perc,
                r.total);
  return buf;
}

class trainer {
 public:
  trainer(const nn::model_config& cfg, const train_options& opt, const loss_weights& weights)
      : opt_(opt), weights_(weights), gen_(opt.seed), net_(cfg, gen_), optimiser_(net_.params(), opt.adam) {
    opt_.validate();
    weights_.validate();
  }

  const nn::model& net() const { return net_; }
  nn::model& net() { return net_; }
  const perceptual_extractor<float>& extractor() const { return extractor_; }
  const adam& optimiser() const { return optimiser_; }
  const std::vector<step_record>& history() const { return history_; }

  checkpoint to_checkpoint() const { return make_checkpoint(net_, extractor_, &optimiser_); }

  /// One optimisation step on an already prepared pair.
  step_record step(const sample_pair<float>& pair) {
    net_.params().zero_grad();
    ad::tape tp;
    auto scope = tp.activate();
    const auto pred = net_.forward_raw(pair.input);
    const auto terms = total_loss(pred, pair.target, weights_, extractor_);
    step_record r;
    r.step = optimiser_.steps() + 1;
    r.mse = terms.mse.item();
    r.ssim = terms.ssim.item();
    r.perc = terms.perc.item();
    r.total = terms.weighted(weights_);
    if (!std::isfinite(r.total)) {
      const auto where = tp.first_nonfinite();
      throw numeric_error("step " + std::to_string(r.step) + ": non-finite loss; first non-finite value from " +
                          (where ? *where : std::string("an input")));
    }
    tp.backward(terms.total);
    optimiser_.step(net_.params());
    history_.push_back(r);
    return r;
  }

  /// Draws the training pair for the next step: a random pair, augmented, and
  /// with probability mixup_p blended with a second augmented pair.
  sample_pair<float> draw(const std::vector<sample_pair<float>>& data) {
    auto a = augment(data[gen_.index(data.size())], gen_, opt_.augment);
    if (opt_.mixup_p > 0 && gen_.bernoulli(opt_.mixup_p)) {
      const auto b = augment(data[gen_.index(data.size())], gen_, opt_.augment);
      if (b.input.shape() == a.input.shape()) a = mixup(a, b, gen_.beta(opt_.mixup_alpha, opt_.mixup_alpha));
    }
    return a;
  }

  /// Runs the configured number of steps, logging every step, periodic held-out
  /// PSNR and the final per-pair scores on the training set.
  std::vector<pair_score> run(const std::vector<sample_pair<float>>& data, const std::vector<sample_pair<float>>& val,
                              std::ostream& log) {
    if (data.empty()) throw config_error("train: dataset is empty");
    for (std::size_t s = 0; s < opt_.steps; ++s) {
      const auto r = step(draw(data));
      log << format_step(r) << '\n';
      if (opt_.eval_every && r.step % opt_.eval_every == 0 && !val.empty()) {
        const auto scores = score_pairs(net_, val);
        log << "eval step=" << r.step << " psnr=" << imaging::format_metric(mean_psnr(scores)) << '\n';
      }
    }
    const auto scores = score_pairs(net_, data);
    for (const auto& s : scores)
      log << "final " << s.name << " psnr=" << imaging::format_metric(s.metrics.psnr)
          << " ssim=" << imaging::format_metric(s.metrics.ssim) << " rmse=" << imaging::format_metric(s.metrics.rmse)
          << '\n';
    log << "final mean psnr=" << imaging::format_metric(mean_psnr(scores)) << '\n';
    log.flush();
    return scores;
  }

 private:
  train_options opt_;
  loss_weights weights_;
  rng gen_;
  nn::model net_;
  perceptual_extractor<float> extractor_;
  adam optimiser_;
  std::vector<step_record> history_;
};

}  // namespace shadoc::train
