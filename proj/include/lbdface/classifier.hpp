#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lbdface/features.hpp"
#include "lbdface/gallery.hpp"
#include "lbdface/imgproc.hpp"

namespace lbdface {

struct ClassifierParams {
  double theta = 0.25;
  double epsilon = 1e-6;
  int perturbation_radius = 5;
  bool normalize_scores = true;

  void validate() const;
};

// Per-pixel normalized feature difference, nonnegative.
using SimilarityMap = Plane;

// 1 = locally similar, 0 = dissimilar.
using BinaryDecisionPlane = Grid<std::uint8_t>;

/// |g - t| / max(min(g, t), epsilon) at every pixel. Equal values (including
/// two zeros) give exactly 0.
SimilarityMap similarity_map(const FeaturePlane& gallery_channel, const FeaturePlane& test_channel,
                             double epsilon);
SimilarityMap similarity_map(const Plane& gallery_channel, const Plane& test_channel,
                             double epsilon);

SimilarityMap average_similarity(std::span<const SimilarityMap> maps);

// Strict comparison: a value equal to theta is dissimilar.
BinaryDecisionPlane binarize(const SimilarityMap& map, double theta);

// Count of 1-bits, or that count divided by the pixel count.
double score(const BinaryDecisionPlane& bits, bool normalize);

/// Number of locally similar pixels between two feature vectors. Same
/// arithmetic as binarize(average_similarity(similarity_map...)) followed by
/// score, without materializing the intermediate planes.
std::size_t compare(const FeatureVector& gallery_fv, const FeatureVector& test_fv,
                    const ClassifierParams& params);

struct Match {
  std::size_t gallery_index = 0;
  std::string subject_id;
  std::uint32_t sample_id = 0;
  std::optional<std::string> condition_tag;
  std::size_t score = 0;
  double normalized_score = 0.0;
  Perturbation best_perturbation;
  std::optional<EyePerturbation> best_eye_perturbation;
};

// Every gallery entry exactly once, by descending score, ties by ascending
// (subject, sample).
struct MatchResult {
  std::vector<Match> ranked;

  const Match& best() const { return ranked.front(); }
};

MatchResult classify(const FeatureVector& test_fv, const Gallery& gallery,
                     const ClassifierParams& params, unsigned threads = 1);

/// Scores each gallery entry against every probe variant and keeps, per
/// entry, the maximum together with the first variant that reached it.
/// probes[i] must be the features of the probe under perturbations[i].
MatchResult classify_perturbed(std::span<const FeatureVector> probes,
                               std::span<const Perturbation> perturbations,
                               const Gallery& gallery, const ClassifierParams& params,
                               unsigned threads = 1);

// Translates the probe by every perturbation at params.perturbation_radius,
// extracts features for each, then classify_perturbed.
MatchResult classify_with_perturbations(const Image& test_img, const Gallery& gallery,
                                        const FilterBank& bank, const FeatureParams& feat_params,
                                        const ClassifierParams& cls_params, unsigned threads = 1);

// Features of the probe under each translation at `radius`, in
// enumerate_perturbations order.
std::vector<FeatureVector> perturbed_features(const Image& test_img, int radius,
                                              const FilterBank& bank,
                                              const FeatureParams& feat_params);

/// Scale/rotation compensation: re-aligns the source image with perturbed
/// eye coordinates (see enumerate_eye_perturbations) instead of translating
/// the aligned probe. Candidates whose eyes leave the image are skipped.
MatchResult classify_with_eye_perturbations(const Image& source, const EyeCoordinates& eyes,
                                            const Gallery& gallery, const FilterBank& bank,
                                            const FeatureParams& feat_params,
                                            const ClassifierParams& cls_params,
                                            unsigned threads = 1);

}  // namespace lbdface
