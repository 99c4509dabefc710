#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lbdface/features.hpp"
#include "lbdface/imgproc.hpp"

namespace lbdface {

enum class Role { gallery, test };

enum class GalleryModel { exemplar, average };

std::string_view to_string(Role role);
std::string_view to_string(GalleryModel model);
GalleryModel parse_gallery_model(std::string_view text);

// One manifest row. image_path is already resolved against the manifest's
// directory; line is the 1-based line number in the file (header = 1).
struct ManifestEntry {
  std::filesystem::path image_path;
  std::string subject_id;
  std::uint32_t sample_id = 0;
  Role role = Role::gallery;
  std::optional<std::string> condition_tag;
  std::optional<EyeCoordinates> eyes;
  std::size_t line = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline constexpr std::string_view kManifestHeader =
    "path,subject,sample,role,condition,eye_lx,eye_ly,eye_rx,eye_ry";

std::vector<ManifestEntry> parse_manifest(const std::filesystem::path& path);

// Relative image paths are resolved against base_dir.
std::vector<ManifestEntry> parse_manifest_text(std::string_view text,
                                               const std::filesystem::path& base_dir);

// Writes image paths exactly as stored in the entries.
void write_manifest(std::span<const ManifestEntry> entries, const std::filesystem::path& path);

using Fingerprint = std::array<std::uint8_t, 32>;

// SHA-256 over a canonical little-endian encoding of the params and bank.
Fingerprint compute_fingerprint(const FilterBank& bank, const FeatureParams& params);
std::string to_hex(const Fingerprint& fp);

struct GalleryEntry {
  std::string subject_id;
  std::uint32_t sample_id = 0;
  std::optional<std::string> condition_tag;
  FeatureVector features;

  friend bool operator==(const GalleryEntry&, const GalleryEntry&) = default;
};

/// Immutable set of enrolled feature vectors.
///
/// Entries are kept sorted by (subject_id, sample_id); that order is the
/// classifier's tie-break order. Every entry shares feature dims and channel
/// count. An average-model gallery holds exactly one entry per subject with
/// sample_id 0 and no condition tag.
class Gallery {
 public:
  Gallery(std::vector<GalleryEntry> entries, GalleryModel model, Fingerprint fingerprint);

  const std::vector<GalleryEntry>& entries() const noexcept { return entries_; }
  const GalleryEntry& operator[](std::size_t i) const { return entries_[i]; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  GalleryModel model() const noexcept { return model_; }
  const Fingerprint& fingerprint() const noexcept { return fingerprint_; }
  std::size_t subject_count() const;

  // Dims of the stored features; throws StateError on an empty gallery.
  Size feature_dims() const;

  friend bool operator==(const Gallery&, const Gallery&) = default;

 private:
  std::vector<GalleryEntry> entries_;
  GalleryModel model_;
  Fingerprint fingerprint_;
};

// Elementwise mean of equally shaped feature vectors, accumulated in double.
FeatureVector average_features(std::span<const FeatureVector> vectors);

/// Builds a gallery from already extracted exemplars. For the average model
/// the exemplars of each subject are merged into one mean feature vector.
Gallery assemble_gallery(std::vector<GalleryEntry> exemplars, GalleryModel model,
                         const Fingerprint& fingerprint);

// Loads, aligns/resizes and extracts every row (all must have role gallery).
Gallery build_gallery(std::span<const ManifestEntry> entries, GalleryModel model,
                      const FilterBank& bank, const FeatureParams& params,
                      unsigned threads = 1);

// Loads one manifest row into the feature frame.
Image load_prepared(const ManifestEntry& entry, Size frame);

inline constexpr std::uint16_t kCacheVersion = 1;

// Writes atomically (temporary file + rename). Output bytes depend only on
// the gallery contents.
void save_feature_cache(const Gallery& gallery, const std::filesystem::path& path);

// Parses and structurally validates a cache without checking its fingerprint.
Gallery read_feature_cache(const std::filesystem::path& path);

// As read_feature_cache, then rejects a fingerprint other than `expected`.
Gallery load_feature_cache(const std::filesystem::path& path, const Fingerprint& expected);

}  // namespace lbdface
