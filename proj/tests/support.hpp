#pragma once

#include <png.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "lbdface/features.hpp"
#include "lbdface/gallery.hpp"
#include "lbdface/grid.hpp"
#include "lbdface/imgproc.hpp"

namespace testing {

using namespace lbdface;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lbdface-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_pgm8(const std::filesystem::path& path, int w, int h,
                       const std::vector<std::uint8_t>& px) {
  std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  s.append(px.begin(), px.end());
  write_bytes(path, s);
}

inline void write_ppm8(const std::filesystem::path& path, int w, int h,
                       const std::vector<std::uint8_t>& rgb) {
  std::string s = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  s.append(rgb.begin(), rgb.end());
  write_bytes(path, s);
}

inline void write_png_rgb(const std::filesystem::path& path, int w, int h,
                          const std::vector<std::uint8_t>& rgb) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr);
}

inline Plane random_plane(std::mt19937_64& rng, int w, int h, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(w) * h);
  for (double& x : v) x = u(rng);
  return Plane(w, h, std::move(v));
}

inline Image random_image(std::mt19937_64& rng, int w, int h, double lo = 0.05, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(w) * h);
  for (double& x : v) x = u(rng);
  return Image(w, h, std::move(v));
}

// Smooth random texture plus mild noise; stands in for a face crop in
// classification tests where pure noise would make every pair dissimilar.
inline Image textured_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> freq(0.05, 0.4);
  std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
  std::uniform_real_distribution<double> noise(-0.02, 0.02);
  double fx[3], fy[3], ph[3];
  for (int k = 0; k < 3; ++k) {
    fx[k] = freq(rng);
    fy[k] = freq(rng);
    ph[k] = phase(rng);
  }
  std::vector<double> v(static_cast<std::size_t>(w) * h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.5;
      for (int k = 0; k < 3; ++k) s += 0.13 * std::sin(fx[k] * c + fy[k] * r + ph[k]);
      v[static_cast<std::size_t>(r) * w + c] = std::clamp(s + noise(rng), 0.0, 1.0);
    }
  }
  return Image(w, h, std::move(v));
}

// Brute-force correlation with replicate padding, written against raw
// indices rather than the library's accessors.
inline std::vector<double> oracle_convolve(const std::vector<double>& img, int w, int h,
                                           const std::vector<double>& kern, int kr, int kc) {
  const int a = (kr - 1) / 2;
  const int b = (kc - 1) / 2;
  std::vector<double> out(img.size(), 0.0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double sum = 0.0;
      for (int s = -a; s <= a; ++s) {
        for (int t = -b; t <= b; ++t) {
          int y = i + s;
          int x = j + t;
          if (y < 0) y = 0;
          if (y >= h) y = h - 1;
          if (x < 0) x = 0;
          if (x >= w) x = w - 1;
          sum += kern[(s + a) * kc + (t + b)] * img[y * w + x];
        }
      }
      out[i * w + j] = sum;
    }
  }
  return out;
}

// Explicit mean, then explicit squared deviations, population convention.
inline std::vector<double> oracle_stddev(const std::vector<double>& img, int w, int h, int wr,
                                         int wc) {
  const int a = (wr - 1) / 2;
  const int b = (wc - 1) / 2;
  std::vector<double> out(img.size(), 0.0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      std::vector<double> cells;
      for (int s = -a; s <= a; ++s) {
        for (int t = -b; t <= b; ++t) {
          const int y = std::min(std::max(i + s, 0), h - 1);
          const int x = std::min(std::max(j + t, 0), w - 1);
          cells.push_back(img[y * w + x]);
        }
      }
      double mean = 0.0;
      for (double v : cells) mean += v;
      mean /= static_cast<double>(cells.size());
      double var = 0.0;
      for (double v : cells) var += (v - mean) * (v - mean);
      out[i * w + j] = std::sqrt(var / static_cast<double>(cells.size()));
    }
  }
  return out;
}

inline std::vector<double> to_vector(const Plane& p) { return {p.values().begin(), p.values().end()}; }

inline FeaturePlane random_feature_plane(std::mt19937_64& rng, int w, int h, float lo = 0.0f,
                                         float hi = 3.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(static_cast<std::size_t>(w) * h);
  for (float& x : v) x = u(rng);
  return FeaturePlane(w, h, std::move(v));
}

inline FeatureVector random_features(std::mt19937_64& rng, int w, int h, int channels,
                                     float lo = 0.0f, float hi = 3.0f) {
  std::vector<FeaturePlane> planes;
  for (int p = 0; p < channels; ++p) planes.push_back(random_feature_plane(rng, w, h, lo, hi));
  return FeatureVector(std::move(planes));
}

inline FeatureVector constant_features(int w, int h, int channels, float value) {
  std::vector<FeaturePlane> planes(static_cast<std::size_t>(channels),
                                   FeaturePlane::filled(w, h, value));
  return FeatureVector(std::move(planes));
}

inline FeatureVector scale_features(const FeatureVector& fv, float c) {
  std::vector<FeaturePlane> planes;
  for (const auto& ch : fv.channels()) {
    std::vector<float> v(ch.values().begin(), ch.values().end());
    for (float& x : v) x *= c;
    planes.emplace_back(ch.width(), ch.height(), std::move(v));
  }
  return FeatureVector(std::move(planes));
}

inline Fingerprint zero_fingerprint() { return Fingerprint{}; }

inline GalleryEntry entry(std::string subject, std::uint32_t sample, FeatureVector fv,
                          std::optional<std::string> tag = std::nullopt) {
  return {std::move(subject), sample, std::move(tag), std::move(fv)};
}

// Writes one 8-bit PGM per image and a manifest listing them.
struct SyntheticRow {
  std::string subject;
  std::uint32_t sample;
  Role role;
  std::string condition;
  Image image;
};

inline std::filesystem::path write_corpus(const TempDir& dir, const std::vector<SyntheticRow>& rows) {
  std::string csv = std::string(kManifestHeader) + "\n";
  int n = 0;
  for (const auto& row : rows) {
    const std::string name = "img" + std::to_string(n++) + ".pgm";
    save_pgm(row.image, dir / name);
    csv += name + "," + row.subject + "," + std::to_string(row.sample) + "," +
           std::string(to_string(row.role)) + "," + row.condition + ",,,,\n";
  }
  const auto manifest = dir / "manifest.csv";
  write_bytes(manifest, csv);
  return manifest;
}

inline std::filesystem::path orl_dir() {
  if (const char* env = std::getenv("LBDFACE_ORL_DIR"); env && *env) return env;
#ifdef LBDFACE_ORL_DIR
  return LBDFACE_ORL_DIR;
#else
  return "data/orl";
#endif
}

inline bool orl_available(const std::filesystem::path& root) {
  for (int s = 1; s <= 40; ++s) {
    for (int k = 1; k <= 10; ++k) {
      if (!std::filesystem::is_regular_file(root / ("s" + std::to_string(s)) /
                                            (std::to_string(k) + ".pgm"))) {
        return false;
      }
    }
  }
  return true;
}

// First `gallery_per_subject` samples of each subject in the gallery, the rest test.
inline std::filesystem::path write_orl_manifest(const std::filesystem::path& root,
                                                const std::filesystem::path& out,
                                                int gallery_per_subject = 5) {
  std::string csv = std::string(kManifestHeader) + "\n";
  for (int s = 1; s <= 40; ++s) {
    for (int k = 1; k <= 10; ++k) {
      const auto p = std::filesystem::absolute(root / ("s" + std::to_string(s)) /
                                               (std::to_string(k) + ".pgm"));
      csv += p.string() + ",s" + std::to_string(s) + "," + std::to_string(k) + "," +
             (k <= gallery_per_subject ? "gallery" : "test") + ",,,,,\n";
    }
  }
  write_bytes(out, csv);
  return out;
}

}  // namespace testing
