#include "lbdface/grid.hpp"

#include <charconv>

namespace lbdface {

std::string to_string(Size size) {
  return std::to_string(size.width) + "x" + std::to_string(size.height);
}

namespace {

int parse_dim(std::string_view text, const std::string& whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value < 1) {
    throw ArgumentError("invalid size '" + whole + "' (expected WxH with positive integers)");
  }
  return value;
}

}  // namespace

Size parse_size(const std::string& text) {
  std::string_view view(text);
  auto sep = view.find_first_of("xX");
  if (sep == std::string_view::npos) {
    int n = parse_dim(view, text);
    return {n, n};
  }
  return {parse_dim(view.substr(0, sep), text), parse_dim(view.substr(sep + 1), text)};
}

Image::Image(int width, int height, std::vector<double> pixels)
    : Grid<double>(width, height, std::move(pixels)) {
  for (double v : values()) {
    if (v < 0.0) throw ArgumentError("image intensities must be >= 0");
  }
}

Image Image::filled(int width, int height, double value) {
  if (width < 1 || height < 1) {
    throw ArgumentError("image dimensions must be >= 1");
  }
  return Image(width, height,
               std::vector<double>(static_cast<std::size_t>(width) * height, value));
}

Image Image::scaled(double factor) const {
  std::vector<double> out(values().begin(), values().end());
  for (double& v : out) v *= factor;
  return Image(width(), height(), std::move(out));
}

}  // namespace lbdface
