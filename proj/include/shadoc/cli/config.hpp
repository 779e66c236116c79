#pragma once

// Flat `key = value` run configuration with `#` comments.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "shadoc/error.hpp"
#include "shadoc/imaging/io.hpp"
#include "shadoc/nn/config.hpp"
#include "shadoc/train/losses.hpp"
#include "shadoc/train/trainer.hpp"

namespace shadoc::cli {

struct run_config {
  nn::model_config model;
  train::train_options train;
  train::loss_weights loss;
  std::string train_dir;
  std::string val_dir;
  std::size_t resize = 0;  // 0 keeps the native extents
  std::string out_dir = ".";

  bool operator==(const run_config& o) const {
    const auto& a = train;
    const auto& b = o.train;
    return model == o.model && loss == o.loss && train_dir == o.train_dir && val_dir == o.val_dir &&
           resize == o.resize && out_dir == o.out_dir && a.steps == b.steps && a.seed == b.seed &&
           a.adam.lr == b.adam.lr && a.augment.crop == b.augment.crop && a.augment.flip_p == b.augment.flip_p &&
           a.augment.scale_min == b.augment.scale_min && a.augment.scale_max == b.augment.scale_max &&
           a.mixup_alpha == b.mixup_alpha && a.mixup_p == b.mixup_p && a.eval_every == b.eval_every;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw config_error(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  is.imbue(std::locale::classic());
  double out = 0;
  is >> out;
  if (!is || !is.eof()) throw config_error(key + ": expected a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_count(key, trim(item)));
  if (out.empty()) throw config_error(key + ": expected a comma-separated list");
  return out;
}

inline std::string real_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct field {
  std::string key;
  std::function<void(run_config&, const std::string&)> set;
  std::function<std::string(const run_config&)> get;
};

inline const std::vector<field>& fields() {
  using rc = run_config;
  static const std::vector<field> table = {
      {"model.base_channels", [](rc& c, const std::string& v) { c.model.base_channels = parse_count("model.base_channels", v); },
       [](const rc& c) { return std::to_string(c.model.base_channels); }},
      {"model.blocks_per_level", [](rc& c, const std::string& v) { c.model.blocks_per_level = parse_count("model.blocks_per_level", v); },
       [](const rc& c) { return std::to_string(c.model.blocks_per_level); }},
      {"model.heads", [](rc& c, const std::string& v) { c.model.heads = parse_count("model.heads", v); },
       [](const rc& c) { return std::to_string(c.model.heads); }},
      {"model.dgfn_expansion", [](rc& c, const std::string& v) { c.model.dgfn_expansion = parse_count("model.dgfn_expansion", v); },
       [](const rc& c) { return std::to_string(c.model.dgfn_expansion); }},
      {"model.spp_scales", [](rc& c, const std::string& v) { c.model.spp_scales = parse_list("model.spp_scales", v); },
       [](const rc& c) {
         std::string s;
         for (std::size_t i = 0; i < c.model.spp_scales.size(); ++i) s += (i ? "," : "") + std::to_string(c.model.spp_scales[i]);
         return s;
       }},
      {"model.std_channels", [](rc& c, const std::string& v) { c.model.std_channels = parse_count("model.std_channels", v); },
       [](const rc& c) { return std::to_string(c.model.std_channels); }},
      {"model.std_blocks", [](rc& c, const std::string& v) { c.model.std_blocks = parse_count("model.std_blocks", v); },
       [](const rc& c) { return std::to_string(c.model.std_blocks); }},
      {"model.use_std", [](rc& c, const std::string& v) { c.model.use_std = parse_bool("model.use_std", v); },
       [](const rc& c) { return std::string(c.model.use_std ? "true" : "false"); }},
      {"model.use_aggregation", [](rc& c, const std::string& v) { c.model.use_aggregation = parse_bool("model.use_aggregation", v); },
       [](const rc& c) { return std::string(c.model.use_aggregation ? "true" : "false"); }},
      {"model.use_cdgf", [](rc& c, const std::string& v) { c.model.use_cdgf = parse_bool("model.use_cdgf", v); },
       [](const rc& c) { return std::string(c.model.use_cdgf ? "true" : "false"); }},
      {"train.lr", [](rc& c, const std::string& v) { c.train.adam.lr = parse_real("train.lr", v); },
       [](const rc& c) { return real_text(c.train.adam.lr); }},
      {"train.steps", [](rc& c, const std::string& v) { c.train.steps = parse_count("train.steps", v); },
       [](const rc& c) { return std::to_string(c.train.steps); }},
      {"train.crop", [](rc& c, const std::string& v) { c.train.augment.crop = parse_count("train.crop", v); },
       [](const rc& c) { return std::to_string(c.train.augment.crop); }},
      {"train.flip_p", [](rc& c, const std::string& v) { c.train.augment.flip_p = parse_real("train.flip_p", v); },
       [](const rc& c) { return real_text(c.train.augment.flip_p); }},
      {"train.scale_min", [](rc& c, const std::string& v) { c.train.augment.scale_min = parse_real("train.scale_min", v); },
       [](const rc& c) { return real_text(c.train.augment.scale_min); }},
      {"train.scale_max", [](rc& c, const std::string& v) { c.train.augment.scale_max = parse_real("train.scale_max", v); },
       [](const rc& c) { return real_text(c.train.augment.scale_max); }},
      {"train.mixup_alpha", [](rc& c, const std::string& v) { c.train.mixup_alpha = parse_real("train.mixup_alpha", v); },
       [](const rc& c) { return real_text(c.train.mixup_alpha); }},
      {"train.mixup_p", [](rc& c, const std::string& v) { c.train.mixup_p = parse_real("train.mixup_p", v); },
       [](const rc& c) { return real_text(c.train.mixup_p); }},
      {"train.seed", [](rc& c, const std::string& v) { c.train.seed = parse_count("train.seed", v); },
       [](const rc& c) { return std::to_string(c.train.seed); }},
      {"train.eval_every", [](rc& c, const std::string& v) { c.train.eval_every = parse_count("train.eval_every", v); },
       [](const rc& c) { return std::to_string(c.train.eval_every); }},
      {"train.out_dir", [](rc& c, const std::string& v) { c.out_dir = v; }, [](const rc& c) { return c.out_dir; }},
      {"loss.w_mse", [](rc& c, const std::string& v) { c.loss.mse = parse_real("loss.w_mse", v); },
       [](const rc& c) { return real_text(c.loss.mse); }},
      {"loss.w_ssim", [](rc& c, const std::string& v) { c.loss.ssim = parse_real("loss.w_ssim", v); },
       [](const rc& c) { return real_text(c.loss.ssim); }},
      {"loss.w_p", [](rc& c, const std::string& v) { c.loss.perc = parse_real("loss.w_p", v); },
       [](const rc& c) { return real_text(c.loss.perc); }},
      {"data.train_dir", [](rc& c, const std::string& v) { c.train_dir = v; }, [](const rc& c) { return c.train_dir; }},
      {"data.val_dir", [](rc& c, const std::string& v) { c.val_dir = v; }, [](const rc& c) { return c.val_dir; }},
      {"data.resize", [](rc& c, const std::string& v) { c.resize = parse_count("data.resize", v); },
       [](const rc& c) { return std::to_string(c.resize); }},
  };
  return table;
}

}  // namespace detail

/// Parses config text. Unknown or repeated keys and malformed values raise config_error.
inline run_config parse_config(const std::string& text) {
  run_config cfg;
  std::map<std::string, const detail::field*> known;
  for (const auto& f : detail::fields()) known.emplace(f.key, &f);
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    const auto it = known.find(key);
    if (it == known.end()) throw config_error("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (const auto [pos, fresh] = seen.emplace(key, lineno); !fresh)
      throw config_error("line " + std::to_string(lineno) + ": key '" + key + "' already set on line " +
                         std::to_string(pos->second));
    it->second->set(cfg, value);
  }
  cfg.model.validate();
  cfg.train.validate();
  cfg.loss.validate();
  return cfg;
}

inline run_config load_config(const std::filesystem::path& path) {
  const auto bytes = imaging::read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

/// Every key with its effective value, one `key = value` per line.
inline std::string format_config(const run_config& cfg) {
  std::string out;
  for (const auto& f : detail::fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace shadoc::cli
