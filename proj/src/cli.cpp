#include "lbdface/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>

#include "lbdface/classifier.hpp"
#include "lbdface/eval.hpp"
#include "lbdface/gallery.hpp"

namespace lbdface {

namespace {

std::vector<Size> parse_size_list(const std::string& text) {
  std::vector<Size> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) throw ArgumentError("empty entry in size list '" + text + "'");
    out.push_back(parse_size(item));
  }
  if (out.empty()) throw ArgumentError("size list is empty");
  return out;
}

EyeCoordinates parse_eyes(const std::string& text) {
  std::array<double, 4> v{};
  std::stringstream in(text);
  std::string item;
  std::size_t n = 0;
  while (std::getline(in, item, ',')) {
    if (n == 4) break;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v[n]);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      throw ArgumentError("--eyes expects x1,y1,x2,y2, got '" + text + "'");
    }
    ++n;
  }
  if (n != 4 || in.rdbuf()->in_avail() > 0) {
    throw ArgumentError("--eyes expects x1,y1,x2,y2, got '" + text + "'");
  }
  return {{v[0], v[1]}, {v[2], v[3]}};
}

std::string describe(Perturbation p) {
  return "(" + std::to_string(p.dx) + "," + std::to_string(p.dy) + ")";
}

// Options shared by the evaluation subcommands.
struct EvalOptions {
  std::string manifest;
  std::string model = "exemplar";
  std::string dims;
  int perturb = 0;
  double theta = 0.25;
  std::string bank;
  std::string out;
  bool omit_timing = false;
  bool random_unequal = false;
  std::uint64_t seed = 0;
  int repetitions = 5;
  int max_k = 5;
  int max_rank = 4;
  unsigned threads = 1;
};

void add_eval_options(CLI::App* cmd, EvalOptions& o, const std::string& default_dims,
                      bool dims_is_list) {
  cmd->add_option("--manifest", o.manifest, "Dataset manifest (CSV)")->required();
  o.dims = default_dims;
  cmd->add_option("--dims", o.dims,
                  dims_is_list ? "Comma-separated feature sizes (N or WxH)" : "Feature size WxH")
      ->capture_default_str();
  cmd->add_option("--theta", o.theta, "Similarity threshold")->capture_default_str();
  cmd->add_option("--bank", o.bank, "Filter bank file (default: built-in six-kernel bank)");
  cmd->add_option("--out", o.out, "CSV output path");
  cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores)")->capture_default_str();
}

ExperimentConfig to_config(const EvalOptions& o) {
  ExperimentConfig cfg;
  cfg.manifest = o.manifest;
  cfg.model = parse_gallery_model(o.model);
  cfg.feature_dims = parse_size_list(o.dims);
  cfg.perturbation = o.perturb > 0;
  cfg.perturbation_radius = o.perturb;
  cfg.theta = o.theta;
  if (!o.bank.empty()) cfg.bank_path = o.bank;
  cfg.random_unequal = o.random_unequal;
  cfg.seed = o.seed;
  cfg.repetitions = o.repetitions;
  cfg.max_rank = o.max_rank;
  cfg.threads = o.threads;
  if (o.perturb < 0) throw ArgumentError("--perturb must be >= 0");
  return cfg;
}

int cmd_enroll(const std::string& manifest, const std::string& model, const std::string& dims,
               const std::string& bank_path, const std::string& out_path, unsigned threads,
               std::ostream& out) {
  const auto entries = parse_manifest(manifest);
  std::vector<ManifestEntry> gallery_rows;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(gallery_rows),
               [](const ManifestEntry& e) { return e.role == Role::gallery; });
  if (gallery_rows.empty()) throw ValidationError("manifest has no gallery rows");

  FeatureParams params;
  params.feature_dims = parse_size(dims);
  const FilterBank bank = bank_path.empty() ? FilterBank::default_bank() : load_filter_bank(bank_path);
  const Gallery gallery =
      build_gallery(gallery_rows, parse_gallery_model(model), bank, params, threads);
  save_feature_cache(gallery, out_path);
  out << "enrolled " << gallery.size() << " entries (" << to_string(gallery.model()) << ", "
      << to_string(params.feature_dims) << ", " << gallery.subject_count() << " subjects) -> "
      << out_path << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face identification by local binary decisions on similarity"};
  app.name(args.empty() ? "lbdface" : args.front());
  app.require_subcommand(1);

  // enroll
  std::string enroll_manifest, enroll_model = "exemplar", enroll_dims = "60x60", enroll_bank,
                               enroll_out;
  unsigned enroll_threads = 1;
  auto* enroll = app.add_subcommand("enroll", "Build a gallery feature cache from a manifest");
  enroll->add_option("--manifest", enroll_manifest, "Dataset manifest (CSV)")->required();
  enroll->add_option("--model", enroll_model, "exemplar or average")
      ->check(CLI::IsMember({"exemplar", "average"}))
      ->capture_default_str();
  enroll->add_option("--dims", enroll_dims, "Feature size WxH")->capture_default_str();
  enroll->add_option("--bank", enroll_bank, "Filter bank file");
  enroll->add_option("--out", enroll_out, "Feature cache output path")->required();
  enroll->add_option("--threads", enroll_threads, "Worker threads (0 = all cores)");

  // identify
  std::string id_cache, id_image, id_eyes, id_bank;
  int id_perturb = 5;
  std::size_t id_top = 5;
  double id_theta = 0.25;
  unsigned id_threads = 1;
  auto* identify = app.add_subcommand("identify", "Rank gallery entries for one probe image");
  identify->add_option("--cache", id_cache, "Feature cache written by enroll")->required();
  identify->add_option("--image", id_image, "Probe image (PGM/PPM/PNG)")->required();
  identify->add_option("--eyes", id_eyes, "Probe eye coordinates x1,y1,x2,y2");
  identify->add_option("--perturb", id_perturb, "Perturbation radius in pixels (0 = off)")
      ->capture_default_str();
  identify->add_option("--top", id_top, "Number of ranked lines to print")->capture_default_str();
  identify->add_option("--theta", id_theta, "Similarity threshold")->capture_default_str();
  identify->add_option("--bank", id_bank, "Filter bank the cache was built with");
  identify->add_option("--threads", id_threads, "Worker threads (0 = all cores)");

  // evaluation subcommands
  EvalOptions ev, sw, cu, be, tg;
  auto* evaluate = app.add_subcommand("evaluate", "Rank-1 identification accuracy");
  add_eval_options(evaluate, ev, "60x60", false);
  evaluate->add_option("--model", ev.model, "exemplar or average")
      ->check(CLI::IsMember({"exemplar", "average"}))
      ->capture_default_str();
  evaluate->add_option("--perturb", ev.perturb, "Perturbation radius (0 = off)")
      ->capture_default_str();
  evaluate->add_flag("--omit-timing", ev.omit_timing, "Leave the timing column out of the CSV");
  evaluate->add_flag("--random-unequal", ev.random_unequal,
                     "Use a random nonempty subset of each subject's gallery rows");
  evaluate->add_option("--seed", ev.seed, "Seed for --random-unequal")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Accuracy across feature sizes, both models");
  add_eval_options(sweep, sw, "10,20,30,40,50,60,70,80,90", true);
  sweep->add_option("--perturb", sw.perturb, "Perturbation radius (0 = off)")
      ->capture_default_str();
  sweep->add_flag("--omit-timing", sw.omit_timing, "Leave the timing column out of the CSV");
  sweep->add_flag("--random-unequal", sw.random_unequal,
                  "Use a random nonempty subset of each subject's gallery rows");
  sweep->add_option("--seed", sw.seed, "Seed for --random-unequal")->capture_default_str();

  auto* curve = app.add_subcommand("curve", "Accuracy versus gallery samples per subject");
  add_eval_options(curve, cu, "60x60", false);
  curve->add_option("--max-k", cu.max_k, "Largest number of samples per subject")
      ->capture_default_str();
  curve->add_flag("--omit-timing", cu.omit_timing, "Leave the timing column out of the CSV");

  auto* bench = app.add_subcommand("bench", "Classification time per probe");
  add_eval_options(bench, be, "40,80", true);
  bench->add_option("--repetitions", be.repetitions, "Timed repetitions (median reported)")
      ->capture_default_str();

  auto* tag = app.add_subcommand("tag", "Condition tagging accuracy at ranks 1..N");
  add_eval_options(tag, tg, "60x60", false);
  tag->add_option("--perturb", tg.perturb, "Perturbation radius (0 = off)")->capture_default_str();
  tag->add_option("--max-rank", tg.max_rank, "Highest rank reported")->capture_default_str();

  // extract
  std::string ex_image, ex_eyes, ex_bank, ex_dims = "60x60", ex_out;
  auto* extract = app.add_subcommand("extract", "Write the aligned probe and its feature planes");
  extract->add_option("--image", ex_image, "Input image")->required();
  extract->add_option("--eyes", ex_eyes, "Eye coordinates x1,y1,x2,y2");
  extract->add_option("--dims", ex_dims, "Feature size WxH")->capture_default_str();
  extract->add_option("--bank", ex_bank, "Filter bank file");
  extract->add_option("--out", ex_out, "Output directory")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << app.get_name() << ": " << e.what() << '\n';
    err << "Run with --help for usage.\n";
    return kExitUsage;
  }

  try {
    if (*enroll) {
      return cmd_enroll(enroll_manifest, enroll_model, enroll_dims, enroll_bank, enroll_out,
                        enroll_threads, out);
    }

    if (*identify) {
      if (id_top < 1) throw ArgumentError("--top must be >= 1");
      if (id_perturb < 0) throw ArgumentError("--perturb must be >= 0");
      const Gallery stored = read_feature_cache(id_cache);
      if (stored.empty()) throw StateError("feature cache '" + id_cache + "' holds no entries");
      FeatureParams params;
      params.feature_dims = stored.feature_dims();
      const FilterBank bank = id_bank.empty() ? FilterBank::default_bank() : load_filter_bank(id_bank);
      const Gallery gallery = load_feature_cache(id_cache, compute_fingerprint(bank, params));

      ClassifierParams cls;
      cls.theta = id_theta;
      cls.epsilon = params.epsilon;
      cls.perturbation_radius = id_perturb;
      const Image source = load_image(id_image);
      MatchResult result;
      if (!id_eyes.empty()) {
        result = classify_with_eye_perturbations(source, parse_eyes(id_eyes), gallery, bank,
                                                 params, cls, id_threads);
      } else {
        result = classify_with_perturbations(prepare_image(source, std::nullopt, params.feature_dims),
                                             gallery, bank, params, cls, id_threads);
      }
      const std::size_t n = std::min(id_top, result.ranked.size());
      for (std::size_t r = 0; r < n; ++r) {
        const Match& m = result.ranked[r];
        out << r + 1 << ' ' << m.subject_id << ' ' << m.sample_id << ' ' << std::fixed
            << std::setprecision(3) << m.normalized_score << ' ';
        if (m.best_eye_perturbation) {
          out << "left=" << describe(m.best_eye_perturbation->left)
              << " right=" << describe(m.best_eye_perturbation->right);
        } else {
          out << "shift=" << describe(m.best_perturbation);
        }
        out << '\n';
      }
      return kExitOk;
    }

    if (*evaluate) {
      const ExperimentConfig cfg = to_config(ev);
      const AccuracyReport report = run_identification(cfg);
      if (!ev.out.empty()) save_csv(report, ev.out, !ev.omit_timing);
      const AccuracyRow& row = report.rows.front();
      out << "accuracy=" << format_percent(row.accuracy()) << "% (" << row.correct << "/"
          << row.probes << " probes, " << to_string(row.model) << ", " << to_string(row.dims)
          << ", perturbation " << (row.perturbation ? "on" : "off") << ")\n";
      return kExitOk;
    }

    if (*sweep) {
      const AccuracyReport report = dimensionality_sweep(to_config(sw));
      if (!sw.out.empty()) save_csv(report, sw.out, !sw.omit_timing);
      out << "sweep: " << report.rows.size() << " rows";
      for (const auto& r : report.rows) {
        out << "; " << to_string(r.dims) << ' ' << to_string(r.model) << '='
            << format_percent(r.accuracy()) << '%';
      }
      out << '\n';
      return kExitOk;
    }

    if (*curve) {
      const AccuracyReport report = training_curve(to_config(cu), cu.max_k);
      if (!cu.out.empty()) save_csv(report, cu.out, !cu.omit_timing);
      out << "curve:";
      for (const auto& r : report.rows) {
        out << " k" << *r.gallery_k << '=' << format_percent(r.accuracy()) << '%';
      }
      out << '\n';
      return kExitOk;
    }

    if (*bench) {
      const TimingReport report = timing_benchmark(to_config(be));
      if (!be.out.empty()) save_csv(report, be.out);
      out << "bench:";
      for (const auto& r : report.rows) {
        out << ' ' << to_string(r.dims) << ' ' << to_string(r.model) << '=' << std::fixed
            << std::setprecision(3) << r.median_ms_per_probe << "ms";
      }
      out << '\n';
      return kExitOk;
    }

    if (*tag) {
      const TagReport report = tag_variability(to_config(tg));
      if (!tg.out.empty()) save_csv(report, tg.out);
      out << "tag rank-1:";
      for (std::size_t c = 0; c < report.conditions.size(); ++c) {
        out << ' ' << report.conditions[c] << '=' << format_percent(report.accuracy[0][c]) << '%';
      }
      out << '\n';
      return kExitOk;
    }

    if (*extract) {
      FeatureParams params;
      params.feature_dims = parse_size(ex_dims);
      const FilterBank bank = ex_bank.empty() ? FilterBank::default_bank() : load_filter_bank(ex_bank);
      std::optional<EyeCoordinates> eyes;
      if (!ex_eyes.empty()) eyes = parse_eyes(ex_eyes);
      const Image prepared = prepare_image(load_image(ex_image), eyes, params.feature_dims);
      const FeatureVector fv = extract_features(prepared, bank, params);

      const std::filesystem::path dir(ex_out);
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw IoError("cannot create output directory '" + ex_out + "'");
      save_pgm(prepared, dir / "prepared.pgm");
      for (std::size_t p = 0; p < fv.channel_count(); ++p) {
        const auto values = fv.channel(p).values();
        const float peak = *std::max_element(values.begin(), values.end());
        std::vector<double> scaled(values.begin(), values.end());
        if (peak > 0.0f) {
          for (double& v : scaled) v /= peak;
        }
        save_pgm(Image(fv.size().width, fv.size().height, std::move(scaled)),
                 dir / ("channel_" + std::to_string(p + 1) + ".pgm"));
      }
      out << "extracted " << fv.channel_count() << " channels at " << to_string(fv.size())
          << " -> " << ex_out << '\n';
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace lbdface
