#include "lbdface/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "lbdface/parallel.hpp"

namespace lbdface {

void ClassifierParams::validate() const {
  if (!(theta > 0.0)) throw ArgumentError("theta must be > 0");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ArgumentError("epsilon must be > 0");
  if (perturbation_radius < 0) throw ArgumentError("perturbation radius must be >= 0");
}

namespace {

inline double delta(double g, double t, double epsilon) {
  if (g == t) return 0.0;
  return std::abs(g - t) / std::max(std::min(g, t), epsilon);
}

template <typename T>
SimilarityMap similarity_map_impl(const Grid<T>& g, const Grid<T>& t, double epsilon) {
  if (g.size() != t.size()) {
    throw ArgumentError("similarity map operands differ in size: " + to_string(g.size()) +
                        " vs " + to_string(t.size()));
  }
  if (!(epsilon > 0.0)) throw ArgumentError("epsilon must be > 0");
  std::vector<double> out(g.pixel_count());
  const auto gv = g.values();
  const auto tv = t.values();
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (gv[k] < 0 || tv[k] < 0) throw ArgumentError("similarity map expects nonnegative features");
    out[k] = delta(gv[k], tv[k], epsilon);
  }
  return SimilarityMap(g.width(), g.height(), std::move(out));
}

void rank(std::vector<Match>& matches) {
  std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
    return a.sample_id < b.sample_id;
  });
}

Match make_match(const Gallery& gallery, std::size_t index, std::size_t raw) {
  const auto& e = gallery[index];
  const double pixels = static_cast<double>(e.features.pixel_count());
  return {index, e.subject_id, e.sample_id, e.condition_tag, raw, raw / pixels, {}, {}};
}

void check_probe(const FeatureVector& fv, const Gallery& gallery) {
  if (gallery.empty()) throw StateError("cannot classify against an empty gallery");
  if (fv.size() != gallery.feature_dims()) {
    throw ArgumentError("probe features are " + to_string(fv.size()) + " but gallery holds " +
                        to_string(gallery.feature_dims()));
  }
  if (fv.channel_count() != gallery[0].features.channel_count()) {
    throw ArgumentError("probe has " + std::to_string(fv.channel_count()) +
                        " channels, gallery has " +
                        std::to_string(gallery[0].features.channel_count()));
  }
}

}  // namespace

SimilarityMap similarity_map(const FeaturePlane& g, const FeaturePlane& t, double epsilon) {
  return similarity_map_impl(g, t, epsilon);
}

SimilarityMap similarity_map(const Plane& g, const Plane& t, double epsilon) {
  return similarity_map_impl(g, t, epsilon);
}

SimilarityMap average_similarity(std::span<const SimilarityMap> maps) {
  if (maps.empty()) throw ArgumentError("average_similarity needs at least one map");
  const Size dims = maps.front().size();
  std::vector<double> acc(maps.front().pixel_count(), 0.0);
  for (const auto& m : maps) {
    if (m.size() != dims) throw ArgumentError("similarity maps differ in size");
    const auto v = m.values();
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += v[k];
  }
  const double p = static_cast<double>(maps.size());
  for (double& v : acc) v /= p;
  return SimilarityMap(dims.width, dims.height, std::move(acc));
}

BinaryDecisionPlane binarize(const SimilarityMap& map, double theta) {
  if (!(theta > 0.0)) throw ArgumentError("theta must be > 0");
  std::vector<std::uint8_t> bits(map.pixel_count());
  const auto v = map.values();
  for (std::size_t k = 0; k < bits.size(); ++k) bits[k] = v[k] < theta ? 1 : 0;
  return BinaryDecisionPlane(map.width(), map.height(), std::move(bits));
}

double score(const BinaryDecisionPlane& bits, bool normalize) {
  const auto v = bits.values();
  const auto ones = static_cast<double>(std::count(v.begin(), v.end(), std::uint8_t{1}));
  return normalize ? ones / static_cast<double>(bits.pixel_count()) : ones;
}

std::size_t compare(const FeatureVector& gallery_fv, const FeatureVector& test_fv,
                    const ClassifierParams& params) {
  if (gallery_fv.channel_count() != test_fv.channel_count()) {
    throw ArgumentError("feature vectors differ in channel count (" +
                        std::to_string(gallery_fv.channel_count()) + " vs " +
                        std::to_string(test_fv.channel_count()) + ")");
  }
  if (gallery_fv.size() != test_fv.size()) {
    throw ArgumentError("feature vectors differ in size");
  }
  const std::size_t channels = gallery_fv.channel_count();
  const std::size_t pixels = gallery_fv.pixel_count();
  const double p = static_cast<double>(channels);
  const double theta = params.theta;
  const double eps = params.epsilon;

  std::vector<const float*> g(channels);
  std::vector<const float*> t(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    g[c] = gallery_fv.channel(c).values().data();
    t[c] = test_fv.channel(c).values().data();
  }
  std::size_t count = 0;
  for (std::size_t k = 0; k < pixels; ++k) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += delta(g[c][k], t[c][k], eps);
    if (acc / p < theta) ++count;
  }
  return count;
}

MatchResult classify(const FeatureVector& test_fv, const Gallery& gallery,
                     const ClassifierParams& params, unsigned threads) {
  params.validate();
  check_probe(test_fv, gallery);
  std::vector<Match> matches(gallery.size());
  parallel_for(gallery.size(), threads, [&](std::size_t i) {
    matches[i] = make_match(gallery, i, compare(gallery[i].features, test_fv, params));
  });
  rank(matches);
  return {std::move(matches)};
}

namespace {

struct Best {
  std::size_t score = 0;
  std::size_t variant = 0;
};

// Per gallery entry: maximum score over the probe variants and the first
// variant reaching it.
std::vector<Best> best_over_variants(std::span<const FeatureVector> probes, const Gallery& gallery,
                                     const ClassifierParams& params, unsigned threads) {
  params.validate();
  if (probes.empty()) throw ArgumentError("need at least one probe variant");
  for (const auto& fv : probes) check_probe(fv, gallery);
  std::vector<Best> out(gallery.size());
  parallel_for(gallery.size(), threads, [&](std::size_t i) {
    for (std::size_t q = 0; q < probes.size(); ++q) {
      const std::size_t s = compare(gallery[i].features, probes[q], params);
      if (q == 0 || s > out[i].score) out[i] = {s, q};
    }
  });
  return out;
}

}  // namespace

MatchResult classify_perturbed(std::span<const FeatureVector> probes,
                               std::span<const Perturbation> perturbations,
                               const Gallery& gallery, const ClassifierParams& params,
                               unsigned threads) {
  if (probes.size() != perturbations.size()) {
    throw ArgumentError("need one perturbation per probe variant");
  }
  const auto best = best_over_variants(probes, gallery, params, threads);
  std::vector<Match> matches(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    matches[i] = make_match(gallery, i, best[i].score);
    matches[i].best_perturbation = perturbations[best[i].variant];
  }
  rank(matches);
  return {std::move(matches)};
}

std::vector<FeatureVector> perturbed_features(const Image& test_img, int radius,
                                              const FilterBank& bank,
                                              const FeatureParams& feat_params) {
  std::vector<FeatureVector> out;
  for (const auto& p : enumerate_perturbations(radius)) {
    out.push_back(extract_features(translate(test_img, p), bank, feat_params));
  }
  return out;
}

MatchResult classify_with_perturbations(const Image& test_img, const Gallery& gallery,
                                        const FilterBank& bank, const FeatureParams& feat_params,
                                        const ClassifierParams& cls_params, unsigned threads) {
  cls_params.validate();
  const auto perturbations = enumerate_perturbations(cls_params.perturbation_radius);
  const auto probes =
      perturbed_features(test_img, cls_params.perturbation_radius, bank, feat_params);
  return classify_perturbed(probes, perturbations, gallery, cls_params, threads);
}

MatchResult classify_with_eye_perturbations(const Image& source, const EyeCoordinates& eyes,
                                            const Gallery& gallery, const FilterBank& bank,
                                            const FeatureParams& feat_params,
                                            const ClassifierParams& cls_params,
                                            unsigned threads) {
  cls_params.validate();
  const Size frame = feat_params.feature_dims;
  const EyeCoordinates canonical = canonical_eyes(frame);
  auto within = [&](const Point& p) {
    return p.x >= 0 && p.y >= 0 && p.x <= source.width() - 1 && p.y <= source.height() - 1;
  };

  std::vector<EyePerturbation> used;
  std::vector<FeatureVector> probes;
  for (const auto& ep : enumerate_eye_perturbations(cls_params.perturbation_radius)) {
    const EyeCoordinates moved = perturb_eyes(eyes, ep);
    const bool is_null = ep == EyePerturbation{};
    if (!is_null && (!within(moved.left_eye) || !within(moved.right_eye) ||
                     !(moved.left_eye.x < moved.right_eye.x))) {
      continue;
    }
    const Image aligned = align_by_eyes(source, moved, canonical, frame.width, frame.height);
    probes.push_back(extract_features(aligned, bank, feat_params));
    used.push_back(ep);
  }

  const auto best = best_over_variants(probes, gallery, cls_params, threads);
  std::vector<Match> matches(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    matches[i] = make_match(gallery, i, best[i].score);
    matches[i].best_eye_perturbation = used[best[i].variant];
  }
  rank(matches);
  return {std::move(matches)};
}

}  // namespace lbdface
