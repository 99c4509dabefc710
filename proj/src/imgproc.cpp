#include "lbdface/imgproc.hpp"

#include <png.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace lbdface {

namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading image '" + path.string() + "'");
  return bytes;
}

// Header cursor for the binary netpbm variants.
class PnmHeader {
 public:
  PnmHeader(const std::vector<unsigned char>& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  int next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) fail("expected integer");
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) fail("header value out of range");
      ++pos_;
    }
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing raster separator");
    return pos_ + 1;
  }

  void seek(std::size_t pos) { pos_ = pos; }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("malformed netpbm header in '" + path_.string() + "': " + what);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

Image decode_pnm(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  const bool color = bytes[1] == '6';
  PnmHeader header(bytes, path);
  header.seek(2);
  const int width = header.next_int();
  const int height = header.next_int();
  const int maxval = header.next_int();
  if (width < 1 || height < 1) header.fail("zero dimension");
  if (maxval < 1 || maxval > 65535) header.fail("maxval outside [1, 65535]");
  const std::size_t offset = header.raster_offset();

  const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
  const std::size_t channels = color ? 3 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() < offset + count * channels * bytes_per_sample) {
    throw FormatError("truncated raster in '" + path.string() + "'");
  }

  const unsigned char* raster = bytes.data() + offset;
  auto sample = [&](std::size_t i) -> double {
    if (bytes_per_sample == 1) return raster[i];
    return static_cast<double>((raster[2 * i] << 8) | raster[2 * i + 1]);
  };

  std::vector<double> pixels(count);
  const double scale = 1.0 / maxval;
  for (std::size_t i = 0; i < count; ++i) {
    if (color) {
      pixels[i] = (kLumaR * sample(3 * i) + kLumaG * sample(3 * i + 1) +
                   kLumaB * sample(3 * i + 2)) * scale;
    } else {
      pixels[i] = sample(i) * scale;
    }
  }
  return Image(width, height, std::move(pixels));
}

Image decode_png(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  // Alpha is requested so libpng does not composite; it is then ignored.
  image.format = color ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG '" + path.string() + "': " + message);
  }

  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const std::size_t stride = color ? 4 : 2;
  std::vector<double> pixels(count);
  for (std::size_t i = 0; i < count; ++i) {
    const png_byte* px = buffer.data() + i * stride;
    if (color) {
      pixels[i] = (kLumaR * px[0] + kLumaG * px[1] + kLumaB * px[2]) / 255.0;
    } else {
      pixels[i] = px[0] / 255.0;
    }
  }
  return Image(width, height, std::move(pixels));
}

// Bilinear sample at fractional (x, y) with coordinates clamped to the image.
double sample_bilinear(const Image& img, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;

  const double a = img.at(y0, x0);
  const double b = img.at(y0, x1);
  const double c = img.at(y1, x0);
  const double d = img.at(y1, x1);
  // a + f * (b - a) keeps constant neighbourhoods exact.
  const double top = a + fx * (b - a);
  const double bottom = c + fx * (d - c);
  const double v = top + fy * (bottom - top);
  const double lo = std::min({a, b, c, d});
  const double hi = std::max({a, b, c, d});
  return std::clamp(v, lo, hi);
}

bool inside(const Image& img, Point p) {
  return p.x >= 0.0 && p.y >= 0.0 && p.x <= img.width() - 1 && p.y <= img.height() - 1;
}

void check_eye_pair(const EyeCoordinates& eyes, const char* which) {
  if (eyes.left_eye == eyes.right_eye) {
    throw GeometryError(std::string(which) + " eye points coincide");
  }
  if (!(eyes.left_eye.x < eyes.right_eye.x)) {
    throw ArgumentError(std::string(which) + " left eye must have smaller x than right eye");
  }
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  static constexpr std::array<unsigned char, 8> kPngMagic = {0x89, 'P', 'N', 'G',
                                                             '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= kPngMagic.size() &&
      std::equal(kPngMagic.begin(), kPngMagic.end(), bytes.begin())) {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return decode_pnm(bytes, path);
  }
  throw FormatError("unsupported image format '" + path.string() +
                    "' (expected binary PGM/PPM or PNG)");
}

void save_pgm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> raster(img.pixel_count());
  for (std::size_t i = 0; i < raster.size(); ++i) {
    const double q = std::round(img.values()[i] * 255.0);
    raster[i] = static_cast<unsigned char>(std::clamp(q, 0.0, 255.0));
  }
  out.write(reinterpret_cast<const char*>(raster.data()),
            static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

Image resize(const Image& img, int target_width, int target_height) {
  if (target_width < 1 || target_height < 1) {
    throw ArgumentError("resize target dimensions must be >= 1");
  }
  const double sx = static_cast<double>(img.width()) / target_width;
  const double sy = static_cast<double>(img.height()) / target_height;
  std::vector<double> out(static_cast<std::size_t>(target_width) * target_height);
  for (int r = 0; r < target_height; ++r) {
    const double y = (r + 0.5) * sy - 0.5;
    for (int c = 0; c < target_width; ++c) {
      const double x = (c + 0.5) * sx - 0.5;
      out[static_cast<std::size_t>(r) * target_width + c] = sample_bilinear(img, x, y);
    }
  }
  return Image(target_width, target_height, std::move(out));
}

Image translate(const Image& img, Perturbation p) {
  std::vector<double> out(img.pixel_count());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      out[static_cast<std::size_t>(r) * img.width() + c] = img.clamped(r - p.dy, c - p.dx);
    }
  }
  return Image(img.width(), img.height(), std::move(out));
}

std::vector<Perturbation> enumerate_perturbations(int radius) {
  if (radius < 0) throw ArgumentError("perturbation radius must be >= 0");
  if (radius == 0) return {{0, 0}};
  const int r = radius;
  return {{0, 0}, {r, 0}, {-r, 0}, {0, r}, {0, -r}, {r, r}, {r, -r}, {-r, r}, {-r, -r}};
}

Image align_by_eyes(const Image& img, const EyeCoordinates& eyes,
                    const EyeCoordinates& canonical, int out_width, int out_height) {
  if (out_width < 1 || out_height < 1) {
    throw ArgumentError("alignment output dimensions must be >= 1");
  }
  check_eye_pair(eyes, "source");
  check_eye_pair(canonical, "canonical");
  if (!inside(img, eyes.left_eye) || !inside(img, eyes.right_eye)) {
    throw ArgumentError("eye coordinates lie outside the source image");
  }

  // Inverse map: src = src_left + m * (out - canon_left), m = s / c as complex numbers.
  const double sx = eyes.right_eye.x - eyes.left_eye.x;
  const double sy = eyes.right_eye.y - eyes.left_eye.y;
  const double cx = canonical.right_eye.x - canonical.left_eye.x;
  const double cy = canonical.right_eye.y - canonical.left_eye.y;
  const double norm = cx * cx + cy * cy;
  const double re = (sx * cx + sy * cy) / norm;
  const double im = (sy * cx - sx * cy) / norm;

  std::vector<double> out(static_cast<std::size_t>(out_width) * out_height);
  for (int r = 0; r < out_height; ++r) {
    const double oy = r - canonical.left_eye.y;
    for (int c = 0; c < out_width; ++c) {
      const double ox = c - canonical.left_eye.x;
      const double x = eyes.left_eye.x + (re * ox - im * oy);
      const double y = eyes.left_eye.y + (im * ox + re * oy);
      out[static_cast<std::size_t>(r) * out_width + c] = sample_bilinear(img, x, y);
    }
  }
  return Image(out_width, out_height, std::move(out));
}

EyeCoordinates canonical_eyes(Size frame) {
  return {{0.30 * frame.width, 0.40 * frame.height}, {0.70 * frame.width, 0.40 * frame.height}};
}

std::vector<EyePerturbation> enumerate_eye_perturbations(int radius) {
  const auto shifts = enumerate_perturbations(radius);
  std::vector<EyePerturbation> out;
  out.push_back({{0, 0}, {0, 0}});
  for (std::size_t i = 1; i < shifts.size(); ++i) out.push_back({shifts[i], shifts[i]});
  for (std::size_t i = 1; i < shifts.size(); ++i) out.push_back({shifts[i], {0, 0}});
  for (std::size_t i = 1; i < shifts.size(); ++i) out.push_back({{0, 0}, shifts[i]});
  return out;
}

EyeCoordinates perturb_eyes(const EyeCoordinates& eyes, const EyePerturbation& p) {
  return {{eyes.left_eye.x + p.left.dx, eyes.left_eye.y + p.left.dy},
          {eyes.right_eye.x + p.right.dx, eyes.right_eye.y + p.right.dy}};
}

Image prepare_image(const Image& img, const std::optional<EyeCoordinates>& eyes, Size frame) {
  if (eyes) {
    return align_by_eyes(img, *eyes, canonical_eyes(frame), frame.width, frame.height);
  }
  if (img.size() == frame) return img;
  return resize(img, frame.width, frame.height);
}

}  // namespace lbdface
