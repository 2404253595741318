#include "disentangle/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "disentangle/error.hpp"
#include "disentangle/hash.hpp"
#include "disentangle/image_io.hpp"

namespace disentangle {
namespace {

constexpr int kMaxRedraws = 1000;

const char* shape_label(int label_b) { return label_b == 0 ? "circle" : "rectangle"; }

const char* background_label(BackgroundStyle style, int label_a) {
  if (style == BackgroundStyle::kFlat) return label_a == 0 ? "black" : "white";
  return label_a == 0 ? "stripes" : "checker";
}

void check_bounds(const ShapeGeometry& s, std::size_t image_size) {
  const double w = s.width, h = s.kind == ShapeKind::kCircle ? s.width : s.height;
  const double limit = static_cast<double>(image_size);
  if (!(w > 0.0) || !(h > 0.0) || s.center_x - w / 2 < 0.0 || s.center_x + w / 2 > limit ||
      s.center_y - h / 2 < 0.0 || s.center_y + h / 2 > limit) {
    std::ostringstream msg;
    msg << "shape at (" << s.center_x << "," << s.center_y << ") size " << w << "x" << h
        << " does not fit a " << image_size << "x" << image_size << " canvas";
    throw GeometryError(msg.str());
  }
}

void paint_shape(std::vector<double>& canvas, const ShapeGeometry& s, double gray, std::size_t n) {
  check_bounds(s, n);
  const double rx = s.width / 2;
  const double ry = s.kind == ShapeKind::kCircle ? rx : s.height / 2;
  for (std::size_t y = 0; y < n; ++y) {
    const double dy = static_cast<double>(y) + 0.5 - s.center_y;
    for (std::size_t x = 0; x < n; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - s.center_x;
      const bool inside = s.kind == ShapeKind::kCircle ? dx * dx + dy * dy <= rx * rx
                                                       : std::abs(dx) <= rx && std::abs(dy) <= ry;
      if (inside) canvas[y * n + x] = gray;
    }
  }
}

LabeledImage draw_image(const SynthConfig& cfg, ShapeKind kind, int background, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto span = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double n = static_cast<double>(cfg.image_size);

  ShapeGeometry g;
  g.kind = kind;
  g.width = span(cfg.size_min, cfg.size_max);
  g.height = kind == ShapeKind::kCircle ? g.width : span(cfg.size_min, cfg.size_max);
  g.center_x = span(cfg.margin + g.width / 2, n - cfg.margin - g.width / 2);
  g.center_y = span(cfg.margin + g.height / 2, n - cfg.margin - g.height / 2);

  LabeledImage img;
  img.height = img.width = cfg.image_size;
  img.pixels = render_background(cfg.style, background, cfg.image_size);
  paint_shape(img.pixels, g, cfg.gray, cfg.image_size);
  img.label_a = background;
  img.label_b = static_cast<int>(kind);
  img.combo = combo_name(cfg.style, img.label_a, img.label_b);
  return img;
}

Dataset generate_split(const SynthConfig& cfg, const std::string& split, std::uint64_t split_tag,
                       const ComboCounts& counts, std::unordered_set<std::uint64_t>& seen) {
  Dataset ds;
  ds.split = split;
  ds.seed = cfg.seed;
  std::uint64_t index = 0;
  for (int shape = 0; shape < 2; ++shape) {
    for (int background = 0; background < 2; ++background) {
      const std::size_t count = counts.counts[shape][background];
      for (std::size_t i = 0; i < count; ++i, ++index) {
        std::mt19937_64 rng(derive_seed(cfg.seed, {split_tag, index}));
        for (int attempt = 0;; ++attempt) {
          if (attempt == kMaxRedraws) {
            throw ConfigError("generate: cannot draw enough distinct " + combo_name(cfg.style, background, shape) +
                              " images; widen the size range or enlarge the image");
          }
          LabeledImage img = draw_image(cfg, static_cast<ShapeKind>(shape), background, rng);
          if (seen.insert(pixel_hash(img)).second) {
            ds.images.push_back(std::move(img));
            break;
          }
        }
      }
    }
  }
  return ds;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && (s[start] == ' ' || s[start] == '\t')) ++start;
  return s.substr(start);
}

}  // namespace

std::size_t ComboCounts::total() const {
  std::size_t t = 0;
  for (const auto& row : counts) {
    for (std::size_t c : row) t += c;
  }
  return t;
}

ComboCounts SynthConfig::seen_counts(std::size_t per_combo) {
  ComboCounts c;
  c.at(ShapeKind::kCircle, 1) = per_combo;
  c.at(ShapeKind::kRectangle, 0) = per_combo;
  c.at(ShapeKind::kRectangle, 1) = per_combo;
  return c;
}

ComboCounts SynthConfig::unseen_counts(std::size_t n) {
  ComboCounts c;
  c.at(ShapeKind::kCircle, 0) = n;
  return c;
}

void SynthConfig::validate() const {
  if (image_size == 0) throw ConfigError("data.image_size must be positive");
  if (!(gray > 0.0 && gray < 1.0)) throw ConfigError("data.gray must lie strictly between 0 and 1");
  if (!(size_min > 0.0) || size_min > size_max) throw ConfigError("data.size_min/size_max: need 0 < size_min <= size_max");
  if (!(margin >= 0.0)) throw ConfigError("data.margin must be >= 0");
  if (size_max + 2 * margin > static_cast<double>(image_size)) {
    std::ostringstream msg;
    msg << "data: shapes up to " << size_max << " px with a " << margin << " px margin do not fit a " << image_size
        << " px image";
    throw ConfigError(msg.str());
  }
}

std::string combo_name(BackgroundStyle style, int label_a, int label_b) {
  return std::string(shape_label(label_b)) + "_" + background_label(style, label_a);
}

SyntheticSplits generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::unordered_set<std::uint64_t> seen;
  SyntheticSplits out;
  out.train = generate_split(cfg, "train", 0, cfg.train, seen);
  out.val = generate_split(cfg, "val", 1, cfg.val, seen);
  out.test = generate_split(cfg, "test", 2, cfg.test, seen);
  out.unseen = generate_split(cfg, "unseen", 3, cfg.unseen, seen);
  return out;
}

std::vector<double> render_background(BackgroundStyle style, int label_a, std::size_t n) {
  std::vector<double> canvas(n * n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double v;
      if (style == BackgroundStyle::kFlat) {
        v = label_a == 0 ? 0.0 : 1.0;
      } else if (label_a == 0) {
        v = (y / 2) % 2 == 0 ? 1.0 : 0.0;
      } else {
        v = ((x / 2) + (y / 2)) % 2 == 0 ? 1.0 : 0.0;
      }
      canvas[y * n + x] = v;
    }
  }
  return canvas;
}

std::vector<double> render_shape(const ShapeGeometry& shape, double gray, double background, std::size_t image_size) {
  std::vector<double> canvas(image_size * image_size, background);
  paint_shape(canvas, shape, gray, image_size);
  return canvas;
}

Dataset load_folder_dataset(const std::filesystem::path& root, const std::filesystem::path& manifest,
                            const FolderLoadOptions& options) {
  std::ifstream in(manifest);
  if (!in) throw LoadError("cannot open manifest " + manifest.string());
  Dataset ds;
  ds.split = root.filename().string();

  std::string line;
  std::size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "path,label_A,label_B") {
        throw LoadError(manifest.string() + " row " + std::to_string(row) + ": expected header 'path,label_A,label_B'");
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    const auto fail = [&](const std::string& what) -> LoadError {
      return LoadError(manifest.string() + " row " + std::to_string(row) + ": " + what);
    };
    if (fields.size() != 3 || fields[0].empty()) throw fail("expected 3 fields 'path,label_A,label_B'");

    int labels[2];
    const int limits[2] = {options.classes_a, options.classes_b};
    for (int k = 0; k < 2; ++k) {
      const std::string& f = fields[1 + k];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), labels[k]);
      if (ec != std::errc() || ptr != f.data() + f.size()) throw fail("label '" + f + "' is not an integer");
      if (labels[k] < 0 || labels[k] >= limits[k]) {
        throw fail(std::string("label_") + (k == 0 ? "A" : "B") + "=" + f + " outside [0," + std::to_string(limits[k]) +
                   ")");
      }
    }

    const std::filesystem::path p = std::filesystem::path(fields[0]).is_absolute() ? std::filesystem::path(fields[0]) : root / fields[0];
    if (!std::filesystem::exists(p)) throw fail("image file " + p.string() + " does not exist");
    GrayImage g = read_pnm(p);
    if (!ds.images.empty() && (g.width != ds.images.front().width || g.height != ds.images.front().height)) {
      throw fail("image " + p.string() + " is " + std::to_string(g.width) + "x" + std::to_string(g.height) +
                 ", expected " + std::to_string(ds.images.front().width) + "x" +
                 std::to_string(ds.images.front().height));
    }

    LabeledImage img;
    img.width = g.width;
    img.height = g.height;
    img.pixels = std::move(g.pixels);
    img.label_a = labels[0];
    img.label_b = labels[1];
    img.combo = options.combo_namer ? options.combo_namer(labels[0], labels[1])
                                    : "A" + std::to_string(labels[0]) + "_B" + std::to_string(labels[1]);
    ds.images.push_back(std::move(img));
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.csv").string());
  manifest << "path,label_A,label_B\n";
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto& img = ds.images[i];
    const std::string name = "img_" + std::to_string(i) + ".pgm";
    write_pgm(dir / name, GrayImage{img.width, img.height, img.pixels});
    manifest << name << ',' << img.label_a << ',' << img.label_b << '\n';
  }
  if (!manifest) throw IoError("failed writing " + (dir / "manifest.csv").string());
}

LabeledImage flip_horizontal(const LabeledImage& img) {
  LabeledImage out = img;
  for (std::size_t y = 0; y < img.height; ++y) {
    auto row = out.pixels.begin() + static_cast<std::ptrdiff_t>(y * img.width);
    std::reverse(row, row + static_cast<std::ptrdiff_t>(img.width));
  }
  return out;
}

LabeledImage augment_flip(const LabeledImage& img, std::mt19937_64& rng) {
  return (rng() >> 63) != 0 ? flip_horizontal(img) : img;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                              std::uint64_t epoch) {
  if (batch_size == 0) throw ContractError("batches: batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(derive_seed(seed, {epoch}));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

BatchStream::BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), seed_(seed), current_(batches(n, batch_size, seed, 0)) {
  if (n == 0) throw ContractError("BatchStream over an empty dataset");
}

const std::vector<std::size_t>& BatchStream::next() {
  if (cursor_ == current_.size()) {
    current_ = batches(n_, batch_size_, seed_, ++epoch_);
    cursor_ = 0;
  }
  return current_[cursor_++];
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices, std::mt19937_64* flip_rng) {
  if (indices.empty()) throw ContractError("make_batch: empty index list");
  const auto& first = ds.images.at(indices[0]);
  const std::size_t h = first.height, w = first.width, cells = h * w;
  std::vector<double> x(indices.size() * cells);
  Batch b;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const LabeledImage& src = ds.images.at(indices[i]);
    if (src.height != h || src.width != w) throw DimensionError("make_batch: images of different sizes");
    if (flip_rng) {
      const LabeledImage img = augment_flip(src, *flip_rng);
      std::copy(img.pixels.begin(), img.pixels.end(), x.begin() + static_cast<std::ptrdiff_t>(i * cells));
    } else {
      std::copy(src.pixels.begin(), src.pixels.end(), x.begin() + static_cast<std::ptrdiff_t>(i * cells));
    }
    b.labels_a.push_back(src.label_a);
    b.labels_b.push_back(src.label_b);
  }
  b.x = Tensor::from({indices.size(), 1, h, w}, std::move(x));
  return b;
}

std::uint64_t pixel_hash(const LabeledImage& img) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size() * sizeof(double)));
}

}  // namespace disentangle
