#include "lbdface/eval.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "lbdface/parallel.hpp"

namespace lbdface {

void ExperimentConfig::validate() const {
  if (feature_dims.empty()) throw ArgumentError("at least one feature size is required");
  for (const auto& d : feature_dims) {
    if (d.width < 10 || d.width > 200 || d.height < 10 || d.height > 200) {
      throw ArgumentError("feature dims " + to_string(d) + " outside [10, 200]");
    }
  }
  if (repetitions < 1) throw ArgumentError("repetitions must be >= 1");
  if (max_rank < 1) throw ArgumentError("max rank must be >= 1");
  if (perturbation_radius < 0) throw ArgumentError("perturbation radius must be >= 0");
  classifier_params().validate();
  feature_params(feature_dims.front()).validate();
}

FilterBank ExperimentConfig::bank() const {
  return bank_path ? load_filter_bank(*bank_path) : FilterBank::default_bank();
}

FeatureParams ExperimentConfig::feature_params(Size dims) const {
  return {dims, stddev_window, norm_window, epsilon};
}

ClassifierParams ExperimentConfig::classifier_params() const {
  return {theta, epsilon, perturbation ? perturbation_radius : 0, true};
}

Dataset::Dataset(std::vector<ManifestEntry> entries, unsigned threads)
    : entries_(std::move(entries)), images_(entries_.size()) {
  parallel_for(entries_.size(), threads,
               [&](std::size_t i) { images_[i] = load_image(entries_[i].image_path); });
}

Dataset Dataset::load(const std::filesystem::path& manifest, unsigned threads) {
  return Dataset(parse_manifest(manifest), threads);
}

std::vector<std::size_t> Dataset::rows(Role role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].role == role) out.push_back(i);
  }
  return out;
}

double AccuracyRow::accuracy() const {
  return probes == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(probes);
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

// Features for the given rows at one frame size; indexed like `rows`.
std::vector<FeatureVector> extract_rows(const Dataset& data, std::span<const std::size_t> rows,
                                        const FilterBank& bank, const FeatureParams& params,
                                        unsigned threads) {
  std::vector<FeatureVector> out(rows.size());
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    const auto& e = data.entries()[rows[i]];
    out[i] = extract_features(prepare_image(data.image(rows[i]), e.eyes, params.feature_dims),
                              bank, params);
  });
  return out;
}

void require_split(const Dataset& data, std::span<const std::size_t> gallery_rows,
                   std::span<const std::size_t> test_rows) {
  if (gallery_rows.empty()) throw ValidationError("manifest has no gallery rows");
  if (test_rows.empty()) throw ValidationError("manifest has no test rows");
  std::set<std::string> enrolled;
  for (auto r : gallery_rows) enrolled.insert(data.entries()[r].subject_id);
  for (auto r : test_rows) {
    const auto& e = data.entries()[r];
    if (!enrolled.contains(e.subject_id)) {
      throw ValidationError("manifest line " + std::to_string(e.line) + ": test subject '" +
                            e.subject_id + "' has no gallery rows");
    }
  }
}

// Gallery rows grouped by subject, each group sorted by sample id.
std::map<std::string, std::vector<std::size_t>> group_by_subject(
    const Dataset& data, std::span<const std::size_t> rows) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (auto r : rows) groups[data.entries()[r].subject_id].push_back(r);
  for (auto& [subject, members] : groups) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return data.entries()[a].sample_id < data.entries()[b].sample_id;
    });
  }
  return groups;
}

std::vector<std::size_t> select_gallery_rows(const Dataset& data, const ExperimentConfig& cfg) {
  auto rows = data.rows(Role::gallery);
  if (!cfg.random_unequal) return rows;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> picked;
  for (auto& [subject, members] : group_by_subject(data, rows)) {
    std::shuffle(members.begin(), members.end(), rng);
    std::uniform_int_distribution<std::size_t> count(1, members.size());
    const std::size_t n = count(rng);
    picked.insert(picked.end(), members.begin(), members.begin() + static_cast<long>(n));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

struct ProbeSet {
  std::vector<std::size_t> rows;
  std::vector<FeatureVector> features;  // unperturbed, indexed like rows
};

// Classifies every probe against `gallery`; timing covers scoring only.
AccuracyRow score_probes(const Dataset& data, const ExperimentConfig& cfg, const Gallery& gallery,
                         const ProbeSet& probes, const FilterBank& bank,
                         const FeatureParams& params, bool perturbation) {
  ClassifierParams cls = cfg.classifier_params();
  cls.perturbation_radius = perturbation ? cfg.perturbation_radius : 0;
  const auto shifts = enumerate_perturbations(cls.perturbation_radius);

  std::vector<char> correct(probes.rows.size(), 0);
  std::vector<double> ms(probes.rows.size(), 0.0);
  parallel_for(probes.rows.size(), cfg.threads, [&](std::size_t i) {
    const auto& entry = data.entries()[probes.rows[i]];
    MatchResult result;
    if (perturbation) {
      const Image prepared =
          prepare_image(data.image(probes.rows[i]), entry.eyes, params.feature_dims);
      const auto variants = perturbed_features(prepared, cls.perturbation_radius, bank, params);
      const auto t0 = Clock::now();
      result = classify_perturbed(variants, shifts, gallery, cls);
      ms[i] = elapsed_ms(t0, Clock::now());
    } else {
      const auto t0 = Clock::now();
      result = classify(probes.features[i], gallery, cls);
      ms[i] = elapsed_ms(t0, Clock::now());
    }
    correct[i] = result.best().subject_id == entry.subject_id;
  });

  AccuracyRow row;
  row.dims = params.feature_dims;
  row.model = gallery.model();
  row.perturbation = perturbation;
  row.gallery_size = gallery.size();
  row.probes = probes.rows.size();
  row.correct = static_cast<std::size_t>(std::count(correct.begin(), correct.end(), 1));
  double total = 0.0;
  for (double v : ms) total += v;
  row.mean_compare_ms = row.probes ? total / static_cast<double>(row.probes) : 0.0;
  return row;
}

std::vector<GalleryEntry> exemplars_for(const Dataset& data, std::span<const std::size_t> rows,
                                        std::span<const FeatureVector> features) {
  std::vector<GalleryEntry> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& e = data.entries()[rows[i]];
    out.push_back({e.subject_id, e.sample_id, e.condition_tag, features[i]});
  }
  return out;
}

}  // namespace

AccuracyRow run_identification(const Dataset& data, const ExperimentConfig& cfg, Size dims,
                               GalleryModel model, bool perturbation) {
  cfg.validate();
  const auto gallery_rows = select_gallery_rows(data, cfg);
  ProbeSet probes{data.rows(Role::test), {}};
  require_split(data, gallery_rows, probes.rows);

  const FilterBank bank = cfg.bank();
  const FeatureParams params = cfg.feature_params(dims);
  const auto gallery_features = extract_rows(data, gallery_rows, bank, params, cfg.threads);
  if (!perturbation) probes.features = extract_rows(data, probes.rows, bank, params, cfg.threads);
  const Gallery gallery = assemble_gallery(exemplars_for(data, gallery_rows, gallery_features),
                                           model, compute_fingerprint(bank, params));
  return score_probes(data, cfg, gallery, probes, bank, params, perturbation);
}

AccuracyReport run_identification(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset data = Dataset::load(cfg.manifest, cfg.threads);
  return {{run_identification(data, cfg, cfg.feature_dims.front(), cfg.model, cfg.perturbation)}};
}

AccuracyReport dimensionality_sweep(const Dataset& data, const ExperimentConfig& cfg) {
  cfg.validate();
  const auto gallery_rows = select_gallery_rows(data, cfg);
  ProbeSet probes{data.rows(Role::test), {}};
  require_split(data, gallery_rows, probes.rows);
  const FilterBank bank = cfg.bank();

  AccuracyReport report;
  for (const Size dims : cfg.feature_dims) {
    const FeatureParams params = cfg.feature_params(dims);
    const auto fp = compute_fingerprint(bank, params);
    const auto gallery_features = extract_rows(data, gallery_rows, bank, params, cfg.threads);
    probes.features = cfg.perturbation
                          ? std::vector<FeatureVector>{}
                          : extract_rows(data, probes.rows, bank, params, cfg.threads);
    for (const auto model : {GalleryModel::exemplar, GalleryModel::average}) {
      const Gallery gallery =
          assemble_gallery(exemplars_for(data, gallery_rows, gallery_features), model, fp);
      report.rows.push_back(
          score_probes(data, cfg, gallery, probes, bank, params, cfg.perturbation));
    }
  }
  return report;
}

AccuracyReport dimensionality_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  return dimensionality_sweep(Dataset::load(cfg.manifest, cfg.threads), cfg);
}

AccuracyReport training_curve(const Dataset& data, const ExperimentConfig& cfg, int max_k) {
  cfg.validate();
  if (max_k < 1) throw ArgumentError("max_k must be >= 1");
  const auto all_gallery = data.rows(Role::gallery);
  ProbeSet probes{data.rows(Role::test), {}};
  require_split(data, all_gallery, probes.rows);

  const auto groups = group_by_subject(data, all_gallery);
  for (const auto& [subject, members] : groups) {
    if (members.size() < static_cast<std::size_t>(max_k)) {
      throw ValidationError("subject '" + subject + "' has " + std::to_string(members.size()) +
                            " gallery samples, fewer than " + std::to_string(max_k));
    }
  }

  const FilterBank bank = cfg.bank();
  const Size dims = cfg.feature_dims.front();
  const FeatureParams params = cfg.feature_params(dims);
  const auto fp = compute_fingerprint(bank, params);
  const auto gallery_features = extract_rows(data, all_gallery, bank, params, cfg.threads);
  probes.features = extract_rows(data, probes.rows, bank, params, cfg.threads);

  std::map<std::size_t, std::size_t> position;  // manifest row -> index in all_gallery
  for (std::size_t i = 0; i < all_gallery.size(); ++i) position[all_gallery[i]] = i;

  AccuracyReport report;
  for (int k = 1; k <= max_k; ++k) {
    std::vector<GalleryEntry> exemplars;
    for (const auto& [subject, members] : groups) {
      for (int j = 0; j < k; ++j) {
        const std::size_t row = members[static_cast<std::size_t>(j)];
        const auto& e = data.entries()[row];
        exemplars.push_back({e.subject_id, e.sample_id, e.condition_tag,
                             gallery_features[position.at(row)]});
      }
    }
    const Gallery gallery = assemble_gallery(std::move(exemplars), GalleryModel::exemplar, fp);
    AccuracyRow row = score_probes(data, cfg, gallery, probes, bank, params, false);
    row.gallery_k = k;
    report.rows.push_back(row);
  }
  return report;
}

AccuracyReport training_curve(const ExperimentConfig& cfg, int max_k) {
  cfg.validate();
  return training_curve(Dataset::load(cfg.manifest, cfg.threads), cfg, max_k);
}

TagReport tag_variability(const Dataset& data, const ExperimentConfig& cfg) {
  cfg.validate();
  const auto gallery_rows = data.rows(Role::gallery);
  const auto test_rows = data.rows(Role::test);
  if (gallery_rows.empty()) throw ValidationError("manifest has no gallery rows");
  if (test_rows.empty()) throw ValidationError("manifest has no test rows");
  for (auto r : gallery_rows) {
    const auto& e = data.entries()[r];
    if (!e.condition_tag) {
      throw ValidationError("manifest line " + std::to_string(e.line) +
                            ": gallery row has no condition tag");
    }
  }

  TagReport report;
  std::map<std::string, std::size_t> column;
  std::vector<std::size_t> probe_column(test_rows.size());
  for (std::size_t i = 0; i < test_rows.size(); ++i) {
    const auto& e = data.entries()[test_rows[i]];
    if (!e.condition_tag) {
      throw ValidationError("manifest line " + std::to_string(e.line) +
                            ": test row has no condition tag");
    }
    auto [it, inserted] = column.emplace(*e.condition_tag, report.conditions.size());
    if (inserted) {
      report.conditions.push_back(*e.condition_tag);
      report.probes_per_condition.push_back(0);
    }
    probe_column[i] = it->second;
    ++report.probes_per_condition[it->second];
  }

  const FilterBank bank = cfg.bank();
  const FeatureParams params = cfg.feature_params(cfg.feature_dims.front());
  const auto gallery_features = extract_rows(data, gallery_rows, bank, params, cfg.threads);
  const Gallery gallery =
      assemble_gallery(exemplars_for(data, gallery_rows, gallery_features),
                       GalleryModel::exemplar, compute_fingerprint(bank, params));
  const ClassifierParams cls = cfg.classifier_params();
  const std::size_t ranks = static_cast<std::size_t>(cfg.max_rank);

  // first_hit[i]: 1-based rank of the first entry carrying the probe's tag.
  std::vector<std::size_t> first_hit(test_rows.size(), 0);
  parallel_for(test_rows.size(), cfg.threads, [&](std::size_t i) {
    const auto& e = data.entries()[test_rows[i]];
    const Image prepared = prepare_image(data.image(test_rows[i]), e.eyes, params.feature_dims);
    const MatchResult result =
        cfg.perturbation ? classify_with_perturbations(prepared, gallery, bank, params, cls)
                         : classify(extract_features(prepared, bank, params), gallery, cls);
    for (std::size_t r = 0; r < result.ranked.size(); ++r) {
      if (result.ranked[r].condition_tag == e.condition_tag) {
        first_hit[i] = r + 1;
        break;
      }
    }
  });

  report.accuracy.assign(ranks, std::vector<double>(report.conditions.size(), 0.0));
  for (std::size_t r = 1; r <= ranks; ++r) {
    std::vector<std::size_t> hits(report.conditions.size(), 0);
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      if (first_hit[i] != 0 && first_hit[i] <= r) ++hits[probe_column[i]];
    }
    for (std::size_t c = 0; c < hits.size(); ++c) {
      report.accuracy[r - 1][c] =
          100.0 * static_cast<double>(hits[c]) / static_cast<double>(report.probes_per_condition[c]);
    }
  }
  return report;
}

TagReport tag_variability(const ExperimentConfig& cfg) {
  cfg.validate();
  return tag_variability(Dataset::load(cfg.manifest, cfg.threads), cfg);
}

TimingReport timing_benchmark(const Dataset& data, const ExperimentConfig& cfg) {
  if (cfg.repetitions < 1) throw ArgumentError("repetitions must be >= 1");
  cfg.validate();
  const auto gallery_rows = select_gallery_rows(data, cfg);
  const auto test_rows = data.rows(Role::test);
  require_split(data, gallery_rows, test_rows);
  const FilterBank bank = cfg.bank();
  ClassifierParams cls = cfg.classifier_params();

  TimingReport report;
  for (const Size dims : cfg.feature_dims) {
    const FeatureParams params = cfg.feature_params(dims);
    const auto fp = compute_fingerprint(bank, params);
    const auto gallery_features = extract_rows(data, gallery_rows, bank, params, cfg.threads);
    const auto probe_features = extract_rows(data, test_rows, bank, params, cfg.threads);
    for (const auto model : {GalleryModel::exemplar, GalleryModel::average}) {
      const Gallery gallery =
          assemble_gallery(exemplars_for(data, gallery_rows, gallery_features), model, fp);
      std::vector<double> per_probe;
      for (int rep = 0; rep < cfg.repetitions; ++rep) {
        const auto t0 = Clock::now();
        for (const auto& fv : probe_features) {
          volatile std::size_t top = classify(fv, gallery, cls).best().score;
          (void)top;
        }
        const double total = elapsed_ms(t0, Clock::now());
        per_probe.push_back(total / static_cast<double>(probe_features.size()));
      }
      std::sort(per_probe.begin(), per_probe.end());
      const std::size_t n = per_probe.size();
      const double median =
          n % 2 ? per_probe[n / 2] : 0.5 * (per_probe[n / 2 - 1] + per_probe[n / 2]);
      report.rows.push_back({dims, model, gallery.size(), cfg.repetitions, median});
    }
  }
  return report;
}

TimingReport timing_benchmark(const ExperimentConfig& cfg) {
  if (cfg.repetitions < 1) throw ArgumentError("repetitions must be >= 1");
  cfg.validate();
  return timing_benchmark(Dataset::load(cfg.manifest, cfg.threads), cfg);
}

// ---------------------------------------------------------------------------
// CSV

std::string format_percent(double value) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << value;
  return out.str();
}

namespace {

std::string format_ms(double value) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3) << value;
  return out.str();
}

template <typename Report, typename... Extra>
void save_via_string(const Report& report, const std::filesystem::path& path, Extra... extra) {
  std::ostringstream buffer;
  write_csv(report, buffer, extra...);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << buffer.str();
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

}  // namespace

void write_csv(const AccuracyReport& report, std::ostream& out, bool include_timing) {
  out << "dims,model,perturbation,k,gallery_size,probes,correct,accuracy";
  if (include_timing) out << ",mean_compare_ms";
  out << '\n';
  for (const auto& r : report.rows) {
    out << to_string(r.dims) << ',' << to_string(r.model) << ',' << (r.perturbation ? "on" : "off")
        << ',' << (r.gallery_k ? std::to_string(*r.gallery_k) : "") << ',' << r.gallery_size
        << ',' << r.probes << ',' << r.correct << ',' << format_percent(r.accuracy());
    if (include_timing) out << ',' << format_ms(r.mean_compare_ms);
    out << '\n';
  }
}

void write_csv(const TagReport& report, std::ostream& out) {
  out << "rank";
  for (const auto& c : report.conditions) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < report.accuracy.size(); ++r) {
    out << r + 1;
    for (double v : report.accuracy[r]) out << ',' << format_percent(v);
    out << '\n';
  }
}

void write_csv(const TimingReport& report, std::ostream& out) {
  out << "dims,model,gallery_size,repetitions,median_ms_per_probe\n";
  for (const auto& r : report.rows) {
    out << to_string(r.dims) << ',' << to_string(r.model) << ',' << r.gallery_size << ','
        << r.repetitions << ',' << format_ms(r.median_ms_per_probe) << '\n';
  }
}

void save_csv(const AccuracyReport& report, const std::filesystem::path& path,
              bool include_timing) {
  save_via_string(report, path, include_timing);
}

void save_csv(const TagReport& report, const std::filesystem::path& path) {
  save_via_string(report, path);
}

void save_csv(const TimingReport& report, const std::filesystem::path& path) {
  save_via_string(report, path);
}

}  // namespace lbdface
