#include <doctest.h>

#include <numeric>
#include <set>

#include "lbdface/classifier.hpp"
#include "support.hpp"

using namespace lbdface;
using testing::entry;

namespace {

void check_ranking_invariants(const MatchResult& result, const Gallery& gallery) {
  REQUIRE(result.ranked.size() == gallery.size());
  std::set<std::size_t> seen;
  for (const auto& m : result.ranked) seen.insert(m.gallery_index);
  CHECK(seen.size() == gallery.size());
  for (std::size_t i = 1; i < result.ranked.size(); ++i) {
    const Match& a = result.ranked[i - 1];
    const Match& b = result.ranked[i];
    const bool ordered =
        a.score > b.score ||
        (a.score == b.score && (a.subject_id < b.subject_id ||
                                (a.subject_id == b.subject_id && a.sample_id < b.sample_id)));
    CHECK(ordered);
  }
}

}  // namespace

TEST_SUITE("classifier") {

TEST_CASE("similarity_map") {
  SUBCASE("identical planes") {
    std::mt19937_64 rng(1);
    const FeaturePlane a = testing::random_feature_plane(rng, 6, 5);
    for (double v : similarity_map(a, a, 1e-6).values()) CHECK(v == 0.0);
  }
  SUBCASE("hand-evaluated pixels") {
    const Plane g(3, 1, {2.0, 0.0, 0.0});
    const Plane t(3, 1, {1.0, 0.5, 0.0});
    const SimilarityMap d = similarity_map(g, t, 1e-6);
    CHECK(d.at(0, 0) == 1.0);
    CHECK(std::abs(d.at(0, 1) - 5e5) < 1e-6);
    CHECK(d.at(0, 2) == 0.0);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(similarity_map(Plane::filled(2, 2, 1.0), Plane::filled(2, 3, 1.0), 1e-6),
                    ArgumentError);
  }
  SUBCASE("symmetric and zero on the diagonal") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
      const FeaturePlane a = testing::random_feature_plane(rng, 7, 7);
      const FeaturePlane b = testing::random_feature_plane(rng, 7, 7);
      CHECK(similarity_map(a, b, 1e-6) == similarity_map(b, a, 1e-6));
      for (double v : similarity_map(a, a, 1e-6).values()) REQUIRE(v == 0.0);
    }
  }
}

TEST_CASE("average_similarity") {
  const SimilarityMap zeros = Plane::filled(2, 2, 0.0);
  const SimilarityMap ones = Plane::filled(2, 2, 1.0);
  const std::vector<SimilarityMap> one{ones};
  CHECK(average_similarity(one) == ones);
  const std::vector<SimilarityMap> two{zeros, ones};
  for (double v : average_similarity(two).values()) CHECK(v == 0.5);
  std::mt19937_64 rng(3);
  const SimilarityMap r = testing::random_plane(rng, 5, 4, 0.0, 2.0);
  const std::vector<SimilarityMap> same(6, r);
  const SimilarityMap avg = average_similarity(same);
  for (std::size_t k = 0; k < r.pixel_count(); ++k) {
    CHECK(std::abs(avg.values()[k] - r.values()[k]) <= 1e-15 * r.values()[k]);
  }
  CHECK_THROWS_AS(average_similarity(std::span<const SimilarityMap>{}), ArgumentError);
}

TEST_CASE("binarize and score") {
  CHECK(score(binarize(Plane::filled(4, 3, 0.0), 0.25), false) == 12.0);
  CHECK(score(binarize(Plane::filled(4, 3, 0.0), 0.25), true) == 1.0);
  CHECK(score(binarize(Plane::filled(4, 3, 0.25), 0.25), false) == 0.0);

  const BinaryDecisionPlane five(4, 4, {1, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0});
  CHECK(score(five, false) == 5.0);
  CHECK(score(five, true) == 0.3125);
  CHECK(score(BinaryDecisionPlane::filled(4, 4, 0), true) == 0.0);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const SimilarityMap m = testing::random_plane(rng, 8, 8, 0.0, 1.0);
    const auto lo = binarize(m, 0.1), hi = binarize(m, 0.5);
    for (std::size_t k = 0; k < m.pixel_count(); ++k) CHECK(lo.values()[k] <= hi.values()[k]);
    CHECK(score(lo, false) <= score(hi, false));
  }
  CHECK_THROWS_AS(binarize(Plane::filled(1, 1, 0.0), 0.0), ArgumentError);
}

TEST_CASE("compare") {
  std::mt19937_64 rng(5);
  const ClassifierParams params;
  SUBCASE("self gives the full pixel count") {
    const FeatureVector fv = testing::random_features(rng, 9, 7, 6);
    CHECK(compare(fv, fv, params) == 63);
  }
  SUBCASE("constant 1 vs constant 2") {
    CHECK(compare(testing::constant_features(5, 5, 6, 1.0f), testing::constant_features(5, 5, 6, 2.0f),
                  params) == 0);
  }
  SUBCASE("huge threshold accepts everything strictly positive") {
    ClassifierParams loose;
    loose.theta = 1e9;
    const FeatureVector a = testing::random_features(rng, 8, 8, 3, 0.1f, 5.0f);
    const FeatureVector b = testing::random_features(rng, 8, 8, 3, 0.1f, 5.0f);
    CHECK(compare(a, b, loose) == 64);
  }
  SUBCASE("agrees with the unfused composition") {
    for (int trial = 0; trial < 50; ++trial) {
      const FeatureVector a = testing::random_features(rng, 6, 6, 4, 0.0f, 1.0f);
      const FeatureVector b = testing::random_features(rng, 6, 6, 4, 0.0f, 1.0f);
      std::vector<SimilarityMap> maps;
      for (std::size_t p = 0; p < 4; ++p) {
        maps.push_back(similarity_map(a.channel(p), b.channel(p), params.epsilon));
      }
      const double expected = score(binarize(average_similarity(maps), params.theta), false);
      CHECK(static_cast<double>(compare(a, b, params)) == expected);
    }
  }
  SUBCASE("channel mismatch") {
    CHECK_THROWS_AS(compare(testing::constant_features(3, 3, 2, 1.0f),
                            testing::constant_features(3, 3, 3, 1.0f), params),
                    ArgumentError);
  }
}

TEST_CASE("classify") {
  std::mt19937_64 rng(6);
  const ClassifierParams params;

  SUBCASE("self-match ranks first with full score") {
    std::vector<GalleryEntry> entries;
    for (int s = 0; s < 4; ++s) {
      for (std::uint32_t k = 1; k <= 3; ++k) {
        entries.push_back(entry("p" + std::to_string(s), k, testing::random_features(rng, 10, 10, 6)));
      }
    }
    const FeatureVector probe = entries[7].features;
    const Gallery g(entries, GalleryModel::exemplar, {});
    const MatchResult r = classify(probe, g, params);
    CHECK(r.best().subject_id == "p2");
    CHECK(r.best().sample_id == 2);
    CHECK(r.best().score == 100);
    CHECK(r.best().normalized_score == 1.0);
    check_ranking_invariants(r, g);
  }
  SUBCASE("ties break by subject then sample") {
    const FeatureVector fv = testing::random_features(rng, 4, 4, 2);
    const Gallery g({entry("b", 1, fv), entry("a", 2, fv), entry("a", 1, fv)},
                    GalleryModel::exemplar, {});
    const MatchResult r = classify(fv, g, params);
    CHECK(r.ranked[0].subject_id == "a");
    CHECK(r.ranked[0].sample_id == 1);
    CHECK(r.ranked[1].subject_id == "a");
    CHECK(r.ranked[1].sample_id == 2);
    CHECK(r.ranked[2].subject_id == "b");
  }
  SUBCASE("3 subjects x 2 samples gives 6 ranked entries") {
    std::vector<GalleryEntry> entries;
    for (const char* s : {"x", "y", "z"}) {
      for (std::uint32_t k = 1; k <= 2; ++k) entries.push_back(entry(s, k, testing::random_features(rng, 5, 5, 6)));
    }
    const Gallery g(entries, GalleryModel::exemplar, {});
    const MatchResult r = classify(testing::random_features(rng, 5, 5, 6), g, params);
    CHECK(r.ranked.size() == 6);
    check_ranking_invariants(r, g);
  }
  SUBCASE("empty gallery") {
    const Gallery g({}, GalleryModel::exemplar, {});
    CHECK_THROWS_AS(classify(testing::random_features(rng, 5, 5, 6), g, params), StateError);
  }
  SUBCASE("dims mismatch") {
    const Gallery g({entry("a", 1, testing::random_features(rng, 5, 5, 6))}, GalleryModel::exemplar, {});
    CHECK_THROWS_AS(classify(testing::random_features(rng, 6, 5, 6), g, params), ArgumentError);
    CHECK_THROWS_AS(classify(testing::random_features(rng, 5, 5, 5), g, params), ArgumentError);
  }
  SUBCASE("joint scaling of gallery and probe keeps the ranking") {
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<GalleryEntry> entries, scaled;
      for (int s = 0; s < 5; ++s) {
        const FeatureVector fv = testing::random_features(rng, 8, 8, 6);
        entries.push_back(entry("s" + std::to_string(s), 1, fv));
        scaled.push_back(entry("s" + std::to_string(s), 1, testing::scale_features(fv, 4.0f)));
      }
      const FeatureVector probe = testing::random_features(rng, 8, 8, 6);
      const MatchResult a = classify(probe, Gallery(entries, GalleryModel::exemplar, {}), params);
      const MatchResult b = classify(testing::scale_features(probe, 4.0f),
                                     Gallery(scaled, GalleryModel::exemplar, {}), params);
      for (std::size_t i = 0; i < a.ranked.size(); ++i) {
        CHECK(a.ranked[i].gallery_index == b.ranked[i].gallery_index);
        CHECK(a.ranked[i].score == b.ranked[i].score);
      }
    }
  }
  SUBCASE("thread count does not change the result") {
    std::vector<GalleryEntry> entries;
    for (int s = 0; s < 12; ++s) entries.push_back(entry("s" + std::to_string(s), 1, testing::random_features(rng, 8, 8, 6)));
    const Gallery g(entries, GalleryModel::exemplar, {});
    const FeatureVector probe = testing::random_features(rng, 8, 8, 6);
    const MatchResult one = classify(probe, g, params, 1);
    const MatchResult four = classify(probe, g, params, 4);
    for (std::size_t i = 0; i < one.ranked.size(); ++i) {
      CHECK(one.ranked[i].gallery_index == four.ranked[i].gallery_index);
    }
  }
}

TEST_CASE("classify_with_perturbations") {
  std::mt19937_64 rng(7);
  const FilterBank bank = FilterBank::default_bank();
  FeatureParams fp;
  fp.feature_dims = {160, 160};
  ClassifierParams cp;

  std::vector<Image> sources;
  std::vector<GalleryEntry> entries;
  for (int s = 0; s < 4; ++s) {
    sources.push_back(testing::textured_image(rng, 160, 160));
    entries.push_back(entry("s" + std::to_string(s), 1, extract_features(sources.back(), bank, fp)));
  }
  const Gallery gallery(entries, GalleryModel::exemplar, {});

  SUBCASE("radius 0 equals plain classify") {
    cp.perturbation_radius = 0;
    const Image probe = testing::textured_image(rng, 160, 160);
    const MatchResult a = classify_with_perturbations(probe, gallery, bank, fp, cp);
    const MatchResult b = classify(extract_features(probe, bank, fp), gallery, cp);
    REQUIRE(a.ranked.size() == b.ranked.size());
    for (std::size_t i = 0; i < a.ranked.size(); ++i) {
      CHECK(a.ranked[i].gallery_index == b.ranked[i].gallery_index);
      CHECK(a.ranked[i].score == b.ranked[i].score);
      CHECK(a.ranked[i].best_perturbation == Perturbation{0, 0});
    }
  }
  SUBCASE("a shifted copy is recovered by the counter-shift") {
    const Image shifted = translate(sources[2], {5, 0});
    const MatchResult r = classify_with_perturbations(shifted, gallery, bank, fp, cp);
    CHECK(r.best().subject_id == "s2");
    CHECK(r.best().best_perturbation == Perturbation{-5, 0});
    CHECK(r.best().normalized_score >= 0.95);

    // Left of the padded seam plus the filter support (3x3 kernel, 3x3
    // deviation, 30-wide mean reaching 15 columns right) every pixel agrees.
    const FeatureVector restored = extract_features(translate(shifted, {-5, 0}), bank, fp);
    const FeatureVector& original = gallery[2].features;
    std::vector<SimilarityMap> maps;
    for (std::size_t p = 0; p < bank.size(); ++p) {
      maps.push_back(similarity_map(original.channel(p), restored.channel(p), cp.epsilon));
    }
    const BinaryDecisionPlane bits = binarize(average_similarity(maps), cp.theta);
    const int clean_cols = 160 - 5 - 1 - 1 - 15;
    for (int r = 0; r < 160; ++r) {
      for (int c = 0; c < clean_cols; ++c) REQUIRE(bits.at(r, c) == 1);
    }
  }
  SUBCASE("every entry dominates its unperturbed score") {
    const Image probe = translate(sources[1], {0, -3});
    const MatchResult plain = classify(extract_features(probe, bank, fp), gallery, cp);
    const MatchResult pert = classify_with_perturbations(probe, gallery, bank, fp, cp);
    for (const auto& m : plain.ranked) {
      const auto it = std::find_if(pert.ranked.begin(), pert.ranked.end(), [&](const Match& x) {
        return x.gallery_index == m.gallery_index;
      });
      REQUIRE(it != pert.ranked.end());
      CHECK(it->score >= m.score);
    }
    check_ranking_invariants(pert, gallery);
  }
}

TEST_CASE("classify_with_eye_perturbations") {
  std::mt19937_64 rng(8);
  const FilterBank bank = FilterBank::default_bank();
  FeatureParams fp;
  fp.feature_dims = {48, 48};
  ClassifierParams cp;
  cp.perturbation_radius = 2;

  const Image source = testing::textured_image(rng, 80, 90);
  const EyeCoordinates eyes{{25, 35}, {55, 35}};
  const EyeCoordinates canon = canonical_eyes(fp.feature_dims);
  const Image aligned = align_by_eyes(source, eyes, canon, 48, 48);
  std::vector<GalleryEntry> entries{entry("me", 1, extract_features(aligned, bank, fp))};
  for (int s = 0; s < 3; ++s) {
    entries.push_back(entry("other" + std::to_string(s), 1,
                            extract_features(testing::textured_image(rng, 48, 48), bank, fp)));
  }
  const Gallery gallery(entries, GalleryModel::exemplar, {});

  EyeCoordinates off = eyes;
  off.right_eye.x += 2;
  const MatchResult r = classify_with_eye_perturbations(source, off, gallery, bank, fp, cp);
  CHECK(r.best().subject_id == "me");
  REQUIRE(r.best().best_eye_perturbation.has_value());
  CHECK(r.best().best_eye_perturbation->right == Perturbation{-2, 0});
  CHECK(r.best().best_eye_perturbation->left == Perturbation{0, 0});
  CHECK(r.best().normalized_score == 1.0);
}

TEST_CASE("ClassifierParams validation") {
  ClassifierParams p;
  CHECK_NOTHROW(p.validate());
  p.theta = 0.0;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  p = {};
  p.perturbation_radius = -1;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  p = {};
  p.epsilon = -1.0;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
}

}
