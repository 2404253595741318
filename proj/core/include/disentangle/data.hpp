#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "disentangle/tensor.hpp"

namespace disentangle {

/// Task-B classes of the synthetic benchmark.
enum class ShapeKind : int { kCircle = 0, kRectangle = 1 };

/// How the two task-A background classes are drawn.
///   kFlat:    class 0 = black (0.0), class 1 = white (1.0)
///   kTexture: class 0 = horizontal stripes, class 1 = checkerboard
/// Both textures alternate 0.0/1.0 in 2-pixel runs, so they share the same
/// mean intensity.
enum class BackgroundStyle { kFlat, kTexture };

struct LabeledImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // row-major, values in [0,1]
  int label_a = 0;             // background class
  int label_b = 0;             // shape class
  std::string combo;
};

struct Dataset {
  std::string split;
  std::vector<LabeledImage> images;
  std::uint64_t seed = 0;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
};

/// Image counts per (shape, background class): counts[label_b][label_a].
struct ComboCounts {
  std::array<std::array<std::size_t, 2>, 2> counts{};

  std::size_t& at(ShapeKind shape, int background) { return counts[static_cast<int>(shape)][background]; }
  std::size_t at(ShapeKind shape, int background) const { return counts[static_cast<int>(shape)][background]; }
  std::size_t total() const;

  friend bool operator==(const ComboCounts&, const ComboCounts&) = default;
};

struct SynthConfig {
  std::size_t image_size = 64;
  double gray = 0.5;
  double size_min = 8.0;   // diameter / side length, pixels
  double size_max = 24.0;
  double margin = 2.0;
  BackgroundStyle style = BackgroundStyle::kFlat;
  ComboCounts train = seen_counts(400);
  ComboCounts val = seen_counts(100);
  ComboCounts test = seen_counts(100);
  ComboCounts unseen = unseen_counts(300);
  std::uint64_t seed = 1;

  /// `per_combo` images of each seen combination (every pairing except
  /// circle on background class 0).
  static ComboCounts seen_counts(std::size_t per_combo);
  /// `n` circles on background class 0.
  static ComboCounts unseen_counts(std::size_t n);

  /// Throws ConfigError for geometry that cannot fit or invalid levels.
  void validate() const;
};

/// Combination tag, e.g. "circle_black" or "rectangle_checker".
std::string combo_name(BackgroundStyle style, int label_a, int label_b);

struct SyntheticSplits {
  Dataset train, val, test, unseen;
};

/// Deterministic in cfg.seed. Images are unique across all four splits
/// (pixel-identical draws are redrawn from the image's own stream).
SyntheticSplits generate_synthetic(const SynthConfig& cfg);

struct ShapeGeometry {
  ShapeKind kind = ShapeKind::kCircle;
  double center_x = 0.0;
  double center_y = 0.0;
  double width = 0.0;   // circle: diameter
  double height = 0.0;  // ignored for circles
};

/// Rasterizes one shape over a flat background. A pixel is covered when its
/// center lies inside the shape. Throws GeometryError if the shape's bounding
/// box leaves the canvas.
std::vector<double> render_shape(const ShapeGeometry& shape, double gray, double background, std::size_t image_size);

/// Background canvas for the given style and class.
std::vector<double> render_background(BackgroundStyle style, int label_a, std::size_t image_size);

struct FolderLoadOptions {
  int classes_a = 2;
  int classes_b = 2;
  /// Produces the combo tag from the labels; defaults to "A<a>_B<b>".
  std::function<std::string(int, int)> combo_namer;
};

/// Reads `manifest` (CSV, header `path,label_A,label_B`, paths relative to
/// `root` unless absolute). Images are converted to grayscale in [0,1] and
/// must all share one size. Throws LoadError naming the row.
Dataset load_folder_dataset(const std::filesystem::path& root, const std::filesystem::path& manifest,
                            const FolderLoadOptions& options = {});

/// Writes `<dir>/img_<idx>.pgm` and `<dir>/manifest.csv`.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

LabeledImage flip_horizontal(const LabeledImage& img);

/// Mirrors horizontally with probability 1/2 (top bit of one rng draw).
LabeledImage augment_flip(const LabeledImage& img, std::mt19937_64& rng);

/// Index batches covering 0..n-1 once, in an order shuffled by (seed, epoch).
/// The last batch may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                              std::uint64_t epoch);

/// Endless stream of batches: consecutive shuffled epochs over 0..n-1.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed);

  const std::vector<std::size_t>& next();
  std::uint64_t epoch() const { return epoch_; }

 private:
  std::size_t n_, batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::vector<std::size_t>> current_;
};

struct Batch {
  Tensor x;  // [B,1,H,W]
  std::vector<int> labels_a;
  std::vector<int> labels_b;
};

/// Stacks the selected images; flips each with probability 1/2 when
/// `flip_rng` is given.
Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices, std::mt19937_64* flip_rng = nullptr);

/// Hash of an image's pixel bytes (split-leakage checks).
std::uint64_t pixel_hash(const LabeledImage& img);

}  // namespace disentangle
