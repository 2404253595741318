#include "disentangle/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "disentangle/error.hpp"

namespace disentangle {
namespace {

class PnmParser {
 public:
  PnmParser(std::istream& in, const std::filesystem::path& path) : in_(in), path_(path.string()) {}

  // Header integers, skipping whitespace and '#' comments.
  std::size_t integer() {
    skip_space();
    std::string digits;
    while (std::isdigit(in_.peek())) digits.push_back(static_cast<char>(in_.get()));
    if (digits.empty() || digits.size() > 9) fail("malformed header");
    return std::stoul(digits);
  }

  void skip_space() {
    for (;;) {
      int c = in_.peek();
      if (c == '#') {
        while (c != '\n' && c != EOF) c = in_.get();
      } else if (std::isspace(c)) {
        in_.get();
      } else {
        return;
      }
    }
  }

  std::size_t sample(bool binary, std::size_t maxval) {
    if (!binary) return integer();
    if (maxval < 256) {
      const int c = in_.get();
      if (c == EOF) fail("truncated pixel data");
      return static_cast<std::size_t>(c);
    }
    const int hi = in_.get(), lo = in_.get();
    if (lo == EOF) fail("truncated pixel data");
    return (static_cast<std::size_t>(hi) << 8) | static_cast<std::size_t>(lo);
  }

  [[noreturn]] void fail(const std::string& what) const { throw LoadError("image " + path_ + ": " + what); }

  std::istream& stream() { return in_; }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace

GrayImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open image " + path.string());
  PnmParser p(in, path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || (magic[1] != '2' && magic[1] != '3' && magic[1] != '5' && magic[1] != '6')) {
    p.fail("unsupported format (expected P2, P3, P5 or P6)");
  }
  const bool binary = magic[1] == '5' || magic[1] == '6';
  const bool color = magic[1] == '3' || magic[1] == '6';

  GrayImage img;
  img.width = p.integer();
  img.height = p.integer();
  const std::size_t maxval = p.integer();
  if (img.width == 0 || img.height == 0 || maxval == 0 || maxval > 65535) p.fail("invalid dimensions or maxval");
  if (binary) {
    // exactly one whitespace byte separates the header from the raster
    if (!std::isspace(in.get())) p.fail("malformed header");
  }
  const double scale = 1.0 / static_cast<double>(maxval);
  img.pixels.resize(img.width * img.height);
  for (double& px : img.pixels) {
    if (color) {
      const double r = static_cast<double>(p.sample(binary, maxval));
      const double g = static_cast<double>(p.sample(binary, maxval));
      const double b = static_cast<double>(p.sample(binary, maxval));
      px = (0.299 * r + 0.587 * g + 0.114 * b) * scale;
    } else {
      px = static_cast<double>(p.sample(binary, maxval)) * scale;
    }
    px = std::clamp(px, 0.0, 1.0);
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::string raster(image.pixels.size(), '\0');
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    raster[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0)));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace disentangle
