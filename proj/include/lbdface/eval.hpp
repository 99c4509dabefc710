#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lbdface/classifier.hpp"
#include "lbdface/features.hpp"
#include "lbdface/gallery.hpp"

namespace lbdface {

struct ExperimentConfig {
  std::filesystem::path manifest;
  GalleryModel model = GalleryModel::exemplar;
  std::vector<Size> feature_dims{{60, 60}};
  bool perturbation = false;
  int perturbation_radius = 5;
  double theta = 0.25;
  std::optional<std::filesystem::path> bank_path;  // default bank when unset
  Window stddev_window{3, 3};
  Window norm_window{30, 30};
  double epsilon = 1e-6;
  // Draw a random nonempty subset of each subject's gallery rows.
  bool random_unequal = false;
  std::uint64_t seed = 0;
  int repetitions = 5;
  int max_rank = 4;
  unsigned threads = 1;

  void validate() const;
  FilterBank bank() const;
  FeatureParams feature_params(Size dims) const;
  ClassifierParams classifier_params() const;
};

/// Manifest rows plus their decoded source images, loaded once and shared by
/// every experiment run on the same corpus.
class Dataset {
 public:
  Dataset(std::vector<ManifestEntry> entries, unsigned threads = 1);
  static Dataset load(const std::filesystem::path& manifest, unsigned threads = 1);

  const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
  const Image& image(std::size_t i) const { return images_[i]; }
  std::vector<std::size_t> rows(Role role) const;

 private:
  std::vector<ManifestEntry> entries_;
  std::vector<Image> images_;
};

struct AccuracyRow {
  Size dims;
  GalleryModel model = GalleryModel::exemplar;
  bool perturbation = false;
  std::optional<int> gallery_k;  // samples per subject, training-curve rows only
  std::size_t gallery_size = 0;
  std::size_t probes = 0;
  std::size_t correct = 0;
  double mean_compare_ms = 0.0;

  double accuracy() const;  // percent
};

struct AccuracyReport {
  std::vector<AccuracyRow> rows;
};

struct TagReport {
  std::vector<std::string> conditions;
  std::vector<std::size_t> probes_per_condition;
  // accuracy[r - 1][c]: percent of condition-c probes whose true tag occurs
  // among the top r ranked gallery entries.
  std::vector<std::vector<double>> accuracy;
};

struct TimingRow {
  Size dims;
  GalleryModel model = GalleryModel::exemplar;
  std::size_t gallery_size = 0;
  int repetitions = 0;
  double median_ms_per_probe = 0.0;
};

struct TimingReport {
  std::vector<TimingRow> rows;
};

// Identification over all test rows at one dims and model; cfg.feature_dims
// front() is used.
AccuracyReport run_identification(const ExperimentConfig& cfg);
AccuracyRow run_identification(const Dataset& data, const ExperimentConfig& cfg, Size dims,
                               GalleryModel model, bool perturbation);

// One row per (dims, model) in dims order, exemplar before average.
AccuracyReport dimensionality_sweep(const ExperimentConfig& cfg);
AccuracyReport dimensionality_sweep(const Dataset& data, const ExperimentConfig& cfg);

// Exemplar model over each subject's first K gallery samples (by sample id),
// K = 1..max_k, perturbation off.
AccuracyReport training_curve(const ExperimentConfig& cfg, int max_k);
AccuracyReport training_curve(const Dataset& data, const ExperimentConfig& cfg, int max_k);

TagReport tag_variability(const ExperimentConfig& cfg);
TagReport tag_variability(const Dataset& data, const ExperimentConfig& cfg);

// Classification-only time per probe (features precomputed), median over
// cfg.repetitions runs, for every dims and both models. Single-threaded.
TimingReport timing_benchmark(const ExperimentConfig& cfg);
TimingReport timing_benchmark(const Dataset& data, const ExperimentConfig& cfg);

void write_csv(const AccuracyReport& report, std::ostream& out, bool include_timing = true);
void write_csv(const TagReport& report, std::ostream& out);
void write_csv(const TimingReport& report, std::ostream& out);

void save_csv(const AccuracyReport& report, const std::filesystem::path& path,
              bool include_timing = true);
void save_csv(const TagReport& report, const std::filesystem::path& path);
void save_csv(const TimingReport& report, const std::filesystem::path& path);

std::string format_percent(double value);

}  // namespace lbdface
