#pragma once

// Paired-directory discovery: `<dir>/input/<name>` matches `<dir>/target/<name>`.

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "shadoc/error.hpp"
#include "shadoc/imaging/color.hpp"
#include "shadoc/imaging/io.hpp"
#include "shadoc/train/augment.hpp"

namespace shadoc::cli {

/// Missing directories, unpaired files or unreadable images.
class data_error : public error {
 public:
  data_error(const std::string& what, std::string subject) : error(what), subject_(std::move(subject)) {}
  const std::string& subject() const { return subject_; }

 private:
  std::string subject_;
};

struct pair_paths {
  std::string name;
  std::filesystem::path input, target;
};

namespace detail {

inline bool is_image_file(const std::filesystem::directory_entry& e) {
  if (!e.is_regular_file()) return false;
  const auto ext = e.path().extension().string();
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

inline std::set<std::string> image_names(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw data_error("directory '" + dir.string() + "' does not exist", dir.string());
  std::set<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (is_image_file(e)) names.insert(e.path().filename().string());
  return names;
}

}  // namespace detail

/// Pairs files with identical names in two flat directories, sorted by name.
inline std::vector<pair_paths> pair_directories(const std::filesystem::path& a, const std::filesystem::path& b) {
  const auto left = detail::image_names(a);
  const auto right = detail::image_names(b);
  for (const auto& n : left)
    if (!right.count(n)) throw data_error("'" + (a / n).string() + "' has no counterpart in '" + b.string() + "'", n);
  for (const auto& n : right)
    if (!left.count(n)) throw data_error("'" + (b / n).string() + "' has no counterpart in '" + a.string() + "'", n);
  std::vector<pair_paths> out;
  for (const auto& n : left) out.push_back({n, a / n, b / n});
  return out;
}

/// `<dir>/input` against `<dir>/target`. An empty set is a data error.
inline std::vector<pair_paths> index_dataset(const std::filesystem::path& dir) {
  auto pairs = pair_directories(dir / "input", dir / "target");
  if (pairs.empty()) throw data_error("no image pairs under '" + dir.string() + "'", dir.string());
  return pairs;
}

/// Loads an image as RGB, reporting failures as data errors naming the file.
inline imaging::image load_rgb(const std::filesystem::path& path) {
  try {
    return imaging::to_rgb(imaging::load_image(path));
  } catch (const data_error&) {
    throw;
  } catch (const error& e) {
    throw data_error("'" + path.string() + "': " + e.what(), path.filename().string());
  }
}

/// Decodes every pair; `resize` > 0 rescales both images to resize x resize.
inline std::vector<train::sample_pair<float>> load_pairs(const std::vector<pair_paths>& index, std::size_t resize = 0) {
  std::vector<train::sample_pair<float>> out;
  for (const auto& p : index) {
    const auto in = load_rgb(p.input);
    const auto tg = load_rgb(p.target);
    if (in.width != tg.width || in.height != tg.height)
      throw data_error("'" + p.name + "': input and target extents differ", p.name);
    auto a = imaging::to_tensor<float>(in);
    auto b = imaging::to_tensor<float>(tg);
    if (resize) {
      a = ad::resize_bilinear(a, resize, resize);
      b = ad::resize_bilinear(b, resize, resize);
    }
    out.push_back({p.name, std::move(a), std::move(b)});
  }
  return out;
}

}  // namespace shadoc::cli
