#include "lbdface/features.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace lbdface {

Kernel::Kernel(int rows, int cols, std::vector<double> weights)
    : rows_(rows), cols_(cols), weights_(std::move(weights)) {
  if (rows < 1 || cols < 1 || rows % 2 == 0 || cols % 2 == 0) {
    throw ArgumentError("kernel dimensions must be odd and >= 1, got " + std::to_string(rows) +
                        "x" + std::to_string(cols));
  }
  if (weights_.size() != static_cast<std::size_t>(rows) * cols) {
    throw ArgumentError("kernel weight count does not match its dimensions");
  }
  for (double w : weights_) {
    if (!std::isfinite(w)) throw ArgumentError("kernel weights must be finite");
  }
}

FilterBank::FilterBank(std::vector<Kernel> kernels) : kernels_(std::move(kernels)) {
  if (kernels_.empty()) throw ArgumentError("filter bank must hold at least one kernel");
}

FilterBank FilterBank::default_bank() {
  const double a = 1.0 / 9.0;
  return FilterBank({
      Kernel(3, 3, {a, a, a, a, a, a, a, a, a}),
      Kernel(3, 3, {0, 0, 0, -1, 0, 1, 0, 0, 0}),
      Kernel(3, 3, {0, -1, 0, 0, 0, 0, 0, 1, 0}),
      Kernel(3, 3, {-1, 0, 0, 0, 0, 0, 0, 0, 1}),
      Kernel(3, 3, {0, 0, -1, 0, 0, 0, 1, 0, 0}),
      Kernel(3, 3, {0, 1, 0, 1, -4, 1, 0, 1, 0}),
  });
}

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

bool is_blank(std::string_view line) { return split_fields(line).empty(); }

[[noreturn]] void bank_error(std::size_t line_no, const std::string& what) {
  throw ParseError("filter bank line " + std::to_string(line_no) + ": " + what);
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const char* begin = field.data();
  if (!field.empty() && field.front() == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    bank_error(line_no, "invalid number '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

FilterBank parse_filter_bank(std::string_view text) {
  const auto lines = split_lines(text);
  std::size_t i = 0;
  auto is_comment = [](std::string_view line) {
    const auto fields = split_fields(line);
    return !fields.empty() && fields.front().front() == '#';
  };
  auto skip_blank = [&] {
    while (i < lines.size() && is_blank(lines[i])) ++i;
  };

  while (i < lines.size() && (is_blank(lines[i]) || is_comment(lines[i]))) ++i;
  if (i >= lines.size()) throw ParseError("filter bank: missing header line 'P ROWS COLS'");
  const auto header = split_fields(lines[i]);
  if (header.size() != 3) bank_error(i + 1, "header must be 'P ROWS COLS'");
  const int count = parse_number<int>(header[0], i + 1);
  const int rows = parse_number<int>(header[1], i + 1);
  const int cols = parse_number<int>(header[2], i + 1);
  if (count < 1) bank_error(i + 1, "P must be >= 1");
  if (rows < 1 || cols < 1 || rows % 2 == 0 || cols % 2 == 0) {
    bank_error(i + 1, "kernel dimensions must be odd and >= 1");
  }
  ++i;

  std::vector<Kernel> kernels;
  for (int p = 0; p < count; ++p) {
    skip_blank();
    std::vector<double> weights;
    for (int r = 0; r < rows; ++r, ++i) {
      if (i >= lines.size() || is_blank(lines[i])) {
        bank_error(i + 1, "kernel " + std::to_string(p + 1) + " has fewer than " +
                              std::to_string(rows) + " rows");
      }
      const auto fields = split_fields(lines[i]);
      if (fields.size() != static_cast<std::size_t>(cols)) {
        bank_error(i + 1, "expected " + std::to_string(cols) + " coefficients");
      }
      for (auto f : fields) weights.push_back(parse_number<double>(f, i + 1));
    }
    if (i < lines.size() && !is_blank(lines[i])) {
      bank_error(i + 1, "kernel " + std::to_string(p + 1) + " has more than " +
                            std::to_string(rows) + " rows");
    }
    try {
      kernels.emplace_back(rows, cols, std::move(weights));
    } catch (const ArgumentError& e) {
      bank_error(i, e.what());
    }
  }
  skip_blank();
  if (i < lines.size()) bank_error(i + 1, "unexpected content after the last kernel");
  return FilterBank(std::move(kernels));
}

FilterBank load_filter_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open filter bank '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_filter_bank(buffer.str());
}

std::string format_filter_bank(const FilterBank& bank) {
  const Kernel& first = bank[0];
  for (const auto& k : bank.kernels()) {
    if (k.rows() != first.rows() || k.cols() != first.cols()) {
      throw ArgumentError("filter bank text format requires kernels of equal dimensions");
    }
  }
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << bank.size() << ' ' << first.rows() << ' ' << first.cols() << '\n';
  for (const auto& k : bank.kernels()) {
    out << '\n';
    for (int r = 0; r < k.rows(); ++r) {
      for (int c = 0; c < k.cols(); ++c) {
        if (c) out << ' ';
        out << k.weights()[static_cast<std::size_t>(r) * k.cols() + c];
      }
      out << '\n';
    }
  }
  return out.str();
}

void FeatureParams::validate() const {
  if (feature_dims.width < 1 || feature_dims.height < 1) {
    throw ArgumentError("feature dims must be >= 1");
  }
  if (stddev_window.rows < 1 || stddev_window.cols < 1 || stddev_window.rows % 2 == 0 ||
      stddev_window.cols % 2 == 0) {
    throw ArgumentError("standard deviation window must be odd and >= 1");
  }
  if (norm_window.rows < 1 || norm_window.cols < 1) {
    throw ArgumentError("normalization window must be >= 1");
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ArgumentError("epsilon must be a positive finite number");
  }
}

FeatureVector::FeatureVector(std::vector<FeaturePlane> channels) : channels_(std::move(channels)) {
  if (channels_.empty()) throw ArgumentError("feature vector needs at least one channel");
  const Size dims = channels_.front().size();
  for (const auto& c : channels_) {
    if (c.size() != dims) throw ArgumentError("feature channels must share dimensions");
    for (float v : c.values()) {
      if (v < 0.0f) throw ArgumentError("feature values must be >= 0");
    }
  }
}

Plane convolve(const Plane& img, const Kernel& kern) {
  if (kern.rows() > img.height() || kern.cols() > img.width()) {
    throw ArgumentError("kernel " + std::to_string(kern.rows()) + "x" +
                        std::to_string(kern.cols()) + " larger than image " +
                        to_string(img.size()));
  }
  const int a0 = kern.row_radius();
  const int b0 = kern.col_radius();
  std::vector<double> out(img.pixel_count());
  for (int i = 0; i < img.height(); ++i) {
    for (int j = 0; j < img.width(); ++j) {
      double acc = 0.0;
      for (int s = -a0; s <= a0; ++s) {
        for (int t = -b0; t <= b0; ++t) acc += kern.weight(s, t) * img.clamped(i + s, j + t);
      }
      out[static_cast<std::size_t>(i) * img.width() + j] = acc;
    }
  }
  return Plane(img.width(), img.height(), std::move(out));
}

Plane local_stddev(const Plane& plane, Window window) {
  if (window.rows < 1 || window.cols < 1 || window.rows % 2 == 0 || window.cols % 2 == 0) {
    throw ArgumentError("standard deviation window must be odd and >= 1");
  }
  const int a = (window.rows - 1) / 2;
  const int b = (window.cols - 1) / 2;
  const double n = static_cast<double>(window.rows) * window.cols;
  std::vector<double> out(plane.pixel_count());
  for (int i = 0; i < plane.height(); ++i) {
    for (int j = 0; j < plane.width(); ++j) {
      double sum = 0.0;
      for (int s = -a; s <= a; ++s) {
        for (int t = -b; t <= b; ++t) sum += plane.clamped(i + s, j + t);
      }
      const double mean = sum / n;
      double ss = 0.0;
      for (int s = -a; s <= a; ++s) {
        for (int t = -b; t <= b; ++t) {
          const double d = plane.clamped(i + s, j + t) - mean;
          ss += d * d;
        }
      }
      out[static_cast<std::size_t>(i) * plane.width() + j] = std::sqrt(ss / n);
    }
  }
  return Plane(plane.width(), plane.height(), std::move(out));
}

Plane local_mean(const Plane& plane, Window window) {
  if (window.rows < 1 || window.cols < 1) throw ArgumentError("mean window must be >= 1");
  const int w = plane.width();
  const int h = plane.height();
  const int up = (window.rows - 1) / 2;
  const int down = window.rows / 2;
  const int left = (window.cols - 1) / 2;
  const int right = window.cols / 2;

  // Separable box sum: rows first, then columns.
  std::vector<double> rows(plane.pixel_count());
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -left; t <= right; ++t) acc += plane.clamped(i, j + t);
      rows[static_cast<std::size_t>(i) * w + j] = acc;
    }
  }
  const double n = static_cast<double>(window.rows) * window.cols;
  std::vector<double> out(plane.pixel_count());
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int s = -up; s <= down; ++s) {
        const int r = std::clamp(i + s, 0, h - 1);
        acc += rows[static_cast<std::size_t>(r) * w + j];
      }
      out[static_cast<std::size_t>(i) * w + j] = acc / n;
    }
  }
  return Plane(w, h, std::move(out));
}

Plane local_mean_normalize(const Plane& plane, Window window, double epsilon) {
  if (!(epsilon > 0.0)) throw ArgumentError("epsilon must be > 0");
  for (double v : plane.values()) {
    if (v < 0.0) throw ArgumentError("local mean normalization expects nonnegative input");
  }
  const Window clipped{std::min(window.rows, plane.height()), std::min(window.cols, plane.width())};
  const Plane mean = local_mean(plane, clipped);
  std::vector<double> out(plane.pixel_count());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = plane.values()[k] / std::max(mean.values()[k], epsilon);
  }
  return Plane(plane.width(), plane.height(), std::move(out));
}

FeatureVector extract_features(const Image& img, const FilterBank& bank,
                               const FeatureParams& params) {
  params.validate();
  if (img.size() != params.feature_dims) {
    throw ArgumentError("image is " + to_string(img.size()) + " but feature dims are " +
                        to_string(params.feature_dims) + "; resize first");
  }
  std::vector<FeaturePlane> channels;
  channels.reserve(bank.size());
  for (const auto& kern : bank.kernels()) {
    const Plane normalized = local_mean_normalize(
        local_stddev(convolve(img, kern), params.stddev_window), params.norm_window,
        params.epsilon);
    std::vector<float> values(normalized.values().begin(), normalized.values().end());
    channels.emplace_back(normalized.width(), normalized.height(), std::move(values));
  }
  return FeatureVector(std::move(channels));
}

}  // namespace lbdface
