#pragma once

// train / infer / eval / mask. Each returns a process exit code:
// 0 success, 1 unexpected failure, 2 data error, 3 checkpoint error, 4 config error.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "shadoc/cli/config.hpp"
#include "shadoc/cli/dataset.hpp"
#include "shadoc/imaging.hpp"
#include "shadoc/nn.hpp"
#include "shadoc/train.hpp"

namespace shadoc::cli {

enum exit_code : int { ok = 0, failure = 1, bad_data = 2, bad_checkpoint = 3, bad_config = 4 };

class checkpoint_error : public error {
 public:
  using error::error;
};

inline constexpr const char* checkpoint_file = "model.sdcf";
inline constexpr const char* log_file = "train.log";

namespace detail {

inline int guarded(std::ostream& err, const std::function<void()>& body) {
  try {
    body();
    return ok;
  } catch (const data_error& e) {
    err << "error: " << e.what() << '\n';
    return bad_data;
  } catch (const checkpoint_error& e) {
    err << "error: " << e.what() << '\n';
    return bad_checkpoint;
  } catch (const config_error& e) {
    err << "error: " << e.what() << '\n';
    return bad_config;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return failure;
  }
}

inline nn::model open_model(const std::filesystem::path& path) {
  try {
    if (!std::filesystem::is_regular_file(path)) throw io_error("'" + path.string() + "' does not exist");
    return train::load_model(train::load_checkpoint(path));
  } catch (const std::exception& e) {
    throw checkpoint_error("checkpoint '" + path.string() + "': " + e.what());
  }
}

inline void save(const imaging::image& img, const std::filesystem::path& path) {
  try {
    imaging::save_image(img, path);
  } catch (const error& e) {
    throw data_error(e.what(), path.string());
  }
}

inline imaging::image soft_mask(const nn::model& net, const imaging::image& rgb) {
  return imaging::mask_to_image(imaging::mask_from_tensor(net.mask(imaging::to_tensor<float>(rgb))));
}

inline void print_scores(std::ostream& out, const std::string& prefix, const std::string& name,
                         const imaging::metric_report& m) {
  out << prefix << name << " psnr=" << imaging::format_metric(m.psnr) << " ssim=" << imaging::format_metric(m.ssim)
      << " rmse=" << imaging::format_metric(m.rmse) << '\n';
}

}  // namespace detail

/// Trains from a config file, writing `<out_dir>/model.sdcf` and `<out_dir>/train.log`.
inline int cmd_train(const std::filesystem::path& config_path, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    run_config cfg;
    try {
      cfg = load_config(config_path);
    } catch (const io_error& e) {
      throw config_error(e.what());
    }
    if (cfg.train_dir.empty()) throw config_error("data.train_dir is required");
    const auto data = load_pairs(index_dataset(cfg.train_dir), cfg.resize);
    const auto val = cfg.val_dir.empty() ? std::vector<train::sample_pair<float>>{}
                                         : load_pairs(index_dataset(cfg.val_dir), cfg.resize);
    const std::filesystem::path dir = cfg.out_dir;
    std::filesystem::create_directories(dir);
    std::ofstream log(dir / log_file);
    if (!log) throw io_error("cannot write '" + (dir / log_file).string() + "'");
    log << "# config\n" << format_config(cfg) << "# end config\n";
    train::trainer tr(cfg.model, cfg.train, cfg.loss);
    const auto scores = tr.run(data, val, log);
    train::save_checkpoint(tr.to_checkpoint(), dir / checkpoint_file);
    for (const auto& s : scores) detail::print_scores(out, "final ", s.name, s.metrics);
    out << "final mean psnr=" << imaging::format_metric(train::mean_psnr(scores)) << '\n';
    out << "checkpoint " << (dir / checkpoint_file).string() << '\n';
  });
}

/// Restores one image; extents are preserved. Optionally writes the soft mask.
inline int cmd_infer(const std::filesystem::path& ckpt, const std::filesystem::path& input,
                     const std::filesystem::path& output, const std::optional<std::filesystem::path>& mask_out = {},
                     std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const auto net = detail::open_model(ckpt);
    const auto img = load_rgb(input);
    detail::save(train::predict(net, img), output);
    if (mask_out) detail::save(detail::soft_mask(net, img), *mask_out);
  });
}

/// Scores every prediction against the same-named ground truth.
inline int cmd_eval(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                    std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const auto pairs = pair_directories(pred_dir, gt_dir);
    if (pairs.empty()) throw data_error("no image pairs in '" + pred_dir.string() + "'", pred_dir.string());
    imaging::metric_report sum{};
    for (const auto& p : pairs) {
      auto a = load_rgb(p.input);
      auto b = load_rgb(p.target);
      if (!a.same_extents(b)) throw data_error("'" + p.name + "': extents differ", p.name);
      const auto m = imaging::evaluate(a, b);
      detail::print_scores(out, "", p.name, m);
      sum.psnr += m.psnr;
      sum.ssim += m.ssim;
      sum.rmse += m.rmse;
    }
    const double n = static_cast<double>(pairs.size());
    detail::print_scores(out, "", "mean", {sum.psnr / n, sum.ssim / n, sum.rmse / n});
  });
}

/// Writes `<prefix>_otsu.png` and, given a checkpoint, `<prefix>_soft.png`.
inline int cmd_mask(const std::filesystem::path& input, const std::string& prefix,
                    const std::optional<std::filesystem::path>& ckpt = {}, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    std::optional<nn::model> net;
    if (ckpt) net.emplace(detail::open_model(*ckpt));
    const auto img = load_rgb(input);
    detail::save(imaging::mask_to_image(nn::otsu_prior(img)), prefix + "_otsu.png");
    if (net) detail::save(detail::soft_mask(*net, img), prefix + "_soft.png");
  });
}

}  // namespace shadoc::cli
