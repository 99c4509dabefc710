#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "lbdface/grid.hpp"

namespace lbdface {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

// Eye positions in image coordinates; left_eye is the one with smaller x.
struct EyeCoordinates {
  Point left_eye;
  Point right_eye;

  friend bool operator==(const EyeCoordinates&, const EyeCoordinates&) = default;
};

// Integer pixel shift applied to a probe. Positive dx moves content right,
// positive dy moves it down.
struct Perturbation {
  int dx = 0;
  int dy = 0;

  friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

// Decodes P5, P6 or PNG (detected from the file's magic bytes). Color input
// is reduced with 0.299 R + 0.587 G + 0.114 B.
Image load_image(const std::filesystem::path& path);

// Debug writer: binary P5, round(v * 255) clamped to [0, 255].
void save_pgm(const Image& img, const std::filesystem::path& path);

// Bilinear resampling with pixel-center alignment.
Image resize(const Image& img, int target_width, int target_height);

Image translate(const Image& img, Perturbation p);

/// Returns (0,0) followed by the eight axis and diagonal offsets at `radius`.
/// Radius 0 yields only the null perturbation.
std::vector<Perturbation> enumerate_perturbations(int radius);

/// Warps `img` with the similarity transform that carries `eyes` onto
/// `canonical_eyes`, resampling bilinearly into an out_width x out_height
/// frame. Samples falling outside the source are replicate-padded.
Image align_by_eyes(const Image& img, const EyeCoordinates& eyes,
                    const EyeCoordinates& canonical_eyes, int out_width, int out_height);

// Default eye placement inside a feature frame of the given size.
EyeCoordinates canonical_eyes(Size frame);

// Eye-pair perturbation used for scale/rotation compensation: the offset is
// added to the left eye, the right eye, or both.
struct EyePerturbation {
  Perturbation left;
  Perturbation right;

  friend bool operator==(const EyePerturbation&, const EyePerturbation&) = default;
};

std::vector<EyePerturbation> enumerate_eye_perturbations(int radius);

EyeCoordinates perturb_eyes(const EyeCoordinates& eyes, const EyePerturbation& p);

// Brings a decoded image to the feature frame: eye alignment when eye
// coordinates are known, plain resize otherwise.
Image prepare_image(const Image& img, const std::optional<EyeCoordinates>& eyes, Size frame);

}  // namespace lbdface
