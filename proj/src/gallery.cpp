#include "lbdface/gallery.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <tuple>

#include "lbdface/parallel.hpp"

namespace lbdface {

std::string_view to_string(Role role) { return role == Role::gallery ? "gallery" : "test"; }

std::string_view to_string(GalleryModel model) {
  return model == GalleryModel::exemplar ? "exemplar" : "average";
}

GalleryModel parse_gallery_model(std::string_view text) {
  if (text == "exemplar") return GalleryModel::exemplar;
  if (text == "average") return GalleryModel::average;
  throw ArgumentError("unknown gallery model '" + std::string(text) +
                      "' (expected exemplar or average)");
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

[[noreturn]] void manifest_error(std::size_t line, const std::string& what) {
  throw ParseError("manifest line " + std::to_string(line) + ": " + what);
}

// Minimal RFC 4180 field splitter: double quotes delimit fields that may
// contain commas; "" inside quotes is a literal quote.
std::vector<std::string> split_csv_row(std::string_view row, std::size_t line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const char ch = row[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < row.size() && row[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      if (!fields.back().empty()) manifest_error(line, "stray quote inside unquoted field");
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  if (quoted) manifest_error(line, "unterminated quoted field");
  return fields;
}

template <typename T>
bool parse_full(const std::string& text, T& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::string quote_csv(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::string format_coord(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

std::vector<ManifestEntry> parse_manifest_text(std::string_view text,
                                               const std::filesystem::path& base_dir) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  std::vector<ManifestEntry> out;
  std::map<std::tuple<std::string, std::uint32_t, Role>, std::size_t> seen;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (!header_seen) {
      if (line != kManifestHeader) {
        manifest_error(line_no, "expected header '" + std::string(kManifestHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    auto fields = split_csv_row(line, line_no);
    if (fields.size() != 9) {
      manifest_error(line_no, "expected 9 fields, found " + std::to_string(fields.size()));
    }

    ManifestEntry entry;
    entry.line = line_no;
    if (fields[0].empty()) manifest_error(line_no, "empty image path");
    if (fields[0].find('\0') != std::string::npos) manifest_error(line_no, "invalid image path");
    std::filesystem::path image_path(fields[0]);
    entry.image_path = image_path.is_absolute() ? image_path : base_dir / image_path;

    if (fields[1].empty()) manifest_error(line_no, "empty subject id");
    entry.subject_id = fields[1];

    if (!parse_full(fields[2], entry.sample_id)) {
      manifest_error(line_no, "sample must be a nonnegative integer, got '" + fields[2] + "'");
    }

    if (fields[3] == "gallery") {
      entry.role = Role::gallery;
    } else if (fields[3] == "test") {
      entry.role = Role::test;
    } else {
      manifest_error(line_no, "role must be 'gallery' or 'test', got '" + fields[3] + "'");
    }

    if (!fields[4].empty()) entry.condition_tag = fields[4];

    const bool any_eye = std::any_of(fields.begin() + 5, fields.end(),
                                     [](const std::string& f) { return !f.empty(); });
    if (any_eye) {
      std::array<double, 4> coords{};
      for (int k = 0; k < 4; ++k) {
        if (!parse_full(fields[5 + k], coords[k])) {
          manifest_error(line_no, "eye coordinates must be four numbers or all empty");
        }
      }
      entry.eyes = EyeCoordinates{{coords[0], coords[1]}, {coords[2], coords[3]}};
    }

    auto key = std::make_tuple(entry.subject_id, entry.sample_id, entry.role);
    if (auto it = seen.find(key); it != seen.end()) {
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": duplicate (subject, sample, role) = (" + entry.subject_id + ", " +
                            std::to_string(entry.sample_id) + ", " +
                            std::string(to_string(entry.role)) + "), first on line " +
                            std::to_string(it->second));
    }
    seen.emplace(std::move(key), line_no);
    out.push_back(std::move(entry));
  }
  if (!header_seen) manifest_error(1, "missing header");
  return out;
}

std::vector<ManifestEntry> parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_manifest_text(text, path.parent_path());
}

void write_manifest(std::span<const ManifestEntry> entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << kManifestHeader << '\n';
  for (const auto& e : entries) {
    out << quote_csv(e.image_path.string()) << ',' << quote_csv(e.subject_id) << ','
        << e.sample_id << ',' << to_string(e.role) << ','
        << quote_csv(e.condition_tag.value_or(""));
    if (e.eyes) {
      out << ',' << format_coord(e.eyes->left_eye.x) << ',' << format_coord(e.eyes->left_eye.y)
          << ',' << format_coord(e.eyes->right_eye.x) << ','
          << format_coord(e.eyes->right_eye.y);
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
  if (!out) throw IoError("error writing manifest '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Little-endian byte helpers shared by the fingerprint and the cache.

namespace {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, const std::filesystem::path& path)
      : data_(data), path_(path) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::string str(std::size_t n) {
    auto bytes = raw(n);
    return std::string(bytes.begin(), bytes.end());
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) {
      throw FormatError("feature cache '" + path_.string() + "' is truncated");
    }
  }

 private:
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> data_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kCacheMagic = "EXFV";
constexpr std::string_view kFingerprintDomain = "lbdface-params-v1";

}  // namespace

Fingerprint compute_fingerprint(const FilterBank& bank, const FeatureParams& params) {
  ByteWriter w;
  w.raw(kFingerprintDomain);
  w.u32(static_cast<std::uint32_t>(params.feature_dims.width));
  w.u32(static_cast<std::uint32_t>(params.feature_dims.height));
  w.u32(static_cast<std::uint32_t>(params.stddev_window.rows));
  w.u32(static_cast<std::uint32_t>(params.stddev_window.cols));
  w.u32(static_cast<std::uint32_t>(params.norm_window.rows));
  w.u32(static_cast<std::uint32_t>(params.norm_window.cols));
  w.f64(params.epsilon);
  w.u32(static_cast<std::uint32_t>(bank.size()));
  for (const auto& k : bank.kernels()) {
    w.u32(static_cast<std::uint32_t>(k.rows()));
    w.u32(static_cast<std::uint32_t>(k.cols()));
    for (double v : k.weights()) w.f64(v);
  }

  Fingerprint fp{};
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), w.bytes().data(), w.bytes().size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), fp.data(), &len) != 1 || len != fp.size()) {
    throw StateError("SHA-256 computation failed");
  }
  return fp;
}

std::string to_hex(const Fingerprint& fp) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(fp.size() * 2);
  for (auto b : fp) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0xf];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gallery

Gallery::Gallery(std::vector<GalleryEntry> entries, GalleryModel model, Fingerprint fingerprint)
    : entries_(std::move(entries)), model_(model), fingerprint_(fingerprint) {
  std::stable_sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.subject_id, a.sample_id) < std::tie(b.subject_id, b.sample_id);
  });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.features.channel_count() == 0) throw ValidationError("gallery entry without features");
    if (e.features.size() != entries_.front().features.size() ||
        e.features.channel_count() != entries_.front().features.channel_count()) {
      throw ValidationError("gallery entries must share feature dims and channel count");
    }
    if (i > 0 && e.subject_id == entries_[i - 1].subject_id &&
        e.sample_id == entries_[i - 1].sample_id) {
      throw ValidationError("duplicate gallery entry (" + e.subject_id + ", " +
                            std::to_string(e.sample_id) + ")");
    }
    if (model_ == GalleryModel::average) {
      if (e.sample_id != 0 || e.condition_tag) {
        throw ValidationError("average-model entries must have sample 0 and no condition tag");
      }
      if (i > 0 && e.subject_id == entries_[i - 1].subject_id) {
        throw ValidationError("average model holds one entry per subject");
      }
    }
  }
}

std::size_t Gallery::subject_count() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (i == 0 || entries_[i].subject_id != entries_[i - 1].subject_id) ++count;
  }
  return count;
}

Size Gallery::feature_dims() const {
  if (entries_.empty()) throw StateError("gallery is empty");
  return entries_.front().features.size();
}

FeatureVector average_features(std::span<const FeatureVector> vectors) {
  if (vectors.empty()) throw ArgumentError("cannot average zero feature vectors");
  const auto& first = vectors.front();
  const std::size_t pixels = first.pixel_count();
  std::vector<FeaturePlane> channels;
  for (std::size_t p = 0; p < first.channel_count(); ++p) {
    std::vector<double> acc(pixels, 0.0);
    for (const auto& fv : vectors) {
      if (fv.channel_count() != first.channel_count() || fv.size() != first.size()) {
        throw ArgumentError("averaged feature vectors must share shape");
      }
      const auto values = fv.channel(p).values();
      for (std::size_t k = 0; k < pixels; ++k) acc[k] += values[k];
    }
    std::vector<float> mean(pixels);
    for (std::size_t k = 0; k < pixels; ++k) {
      mean[k] = static_cast<float>(acc[k] / static_cast<double>(vectors.size()));
    }
    channels.emplace_back(first.size().width, first.size().height, std::move(mean));
  }
  return FeatureVector(std::move(channels));
}

Gallery assemble_gallery(std::vector<GalleryEntry> exemplars, GalleryModel model,
                         const Fingerprint& fingerprint) {
  if (model == GalleryModel::exemplar) return Gallery(std::move(exemplars), model, fingerprint);

  std::map<std::string, std::vector<FeatureVector>> by_subject;
  for (auto& e : exemplars) by_subject[e.subject_id].push_back(std::move(e.features));
  std::vector<GalleryEntry> merged;
  merged.reserve(by_subject.size());
  for (auto& [subject, vectors] : by_subject) {
    merged.push_back({subject, 0, std::nullopt, average_features(vectors)});
  }
  return Gallery(std::move(merged), model, fingerprint);
}

Image load_prepared(const ManifestEntry& entry, Size frame) {
  return prepare_image(load_image(entry.image_path), entry.eyes, frame);
}

Gallery build_gallery(std::span<const ManifestEntry> entries, GalleryModel model,
                      const FilterBank& bank, const FeatureParams& params, unsigned threads) {
  params.validate();
  for (const auto& e : entries) {
    if (e.role != Role::gallery) {
      throw ArgumentError("manifest line " + std::to_string(e.line) +
                          " is a test row; build_gallery takes gallery rows only");
    }
  }
  std::vector<GalleryEntry> exemplars(entries.size());
  parallel_for(entries.size(), threads, [&](std::size_t i) {
    const auto& e = entries[i];
    exemplars[i] = {e.subject_id, e.sample_id, e.condition_tag,
                    extract_features(load_prepared(e, params.feature_dims), bank, params)};
  });
  return assemble_gallery(std::move(exemplars), model, compute_fingerprint(bank, params));
}

// ---------------------------------------------------------------------------
// Feature cache

void save_feature_cache(const Gallery& gallery, const std::filesystem::path& path) {
  ByteWriter w;
  w.raw(kCacheMagic);
  w.u16(kCacheVersion);
  w.raw(gallery.fingerprint());
  w.u32(static_cast<std::uint32_t>(gallery.size()));
  for (const auto& e : gallery.entries()) {
    if (e.subject_id.size() > 0xffff || (e.condition_tag && e.condition_tag->size() > 0xffff)) {
      throw ArgumentError("subject id or condition tag longer than 65535 bytes");
    }
    w.u16(static_cast<std::uint16_t>(e.subject_id.size()));
    w.raw(e.subject_id);
    w.u32(e.sample_id);
    const std::string tag = e.condition_tag.value_or("");
    w.u16(static_cast<std::uint16_t>(tag.size()));
    w.raw(tag);
    const Size dims = e.features.size();
    w.u16(static_cast<std::uint16_t>(e.features.channel_count()));
    w.u32(static_cast<std::uint32_t>(dims.height));
    w.u32(static_cast<std::uint32_t>(dims.width));
    for (const auto& channel : e.features.channels()) {
      for (float v : channel.values()) w.f32(v);
    }
  }

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write feature cache '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(w.bytes().data()),
              static_cast<std::streamsize>(w.bytes().size()));
    out.close();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("error writing feature cache '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move feature cache into place at '" + path.string() + "'");
  }
}

Gallery read_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature cache '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  ByteReader r(bytes, path);

  if (r.remaining() < kCacheMagic.size() || r.str(kCacheMagic.size()) != kCacheMagic) {
    throw FormatError("'" + path.string() + "' is not a feature cache (bad magic)");
  }
  const std::uint16_t version = r.u16();
  if (version > kCacheVersion) {
    throw UnsupportedVersionError("feature cache version " + std::to_string(version) +
                                  " is newer than supported version " +
                                  std::to_string(kCacheVersion));
  }
  if (version == 0) throw FormatError("feature cache version 0 is invalid");

  Fingerprint fp{};
  auto fp_bytes = r.raw(fp.size());
  std::copy(fp_bytes.begin(), fp_bytes.end(), fp.begin());

  const std::uint32_t count = r.u32();
  std::vector<GalleryEntry> entries;
  for (std::uint32_t n = 0; n < count; ++n) {
    GalleryEntry e;
    e.subject_id = r.str(r.u16());
    e.sample_id = r.u32();
    if (const std::uint16_t tag_len = r.u16(); tag_len > 0) e.condition_tag = r.str(tag_len);
    const std::uint16_t channels = r.u16();
    const std::uint32_t height = r.u32();
    const std::uint32_t width = r.u32();
    if (channels == 0 || height == 0 || width == 0 || height > 1u << 15 || width > 1u << 15) {
      throw FormatError("feature cache entry " + std::to_string(n) + " has invalid shape");
    }
    const std::size_t pixels = static_cast<std::size_t>(height) * width;
    r.need(pixels * channels * sizeof(float));
    std::vector<FeaturePlane> planes;
    planes.reserve(channels);
    for (std::uint16_t p = 0; p < channels; ++p) {
      std::vector<float> values(pixels);
      for (auto& v : values) v = r.f32();
      try {
        planes.emplace_back(static_cast<int>(width), static_cast<int>(height), std::move(values));
      } catch (const ArgumentError& err) {
        throw FormatError("feature cache entry " + std::to_string(n) + ": " + err.what());
      }
    }
    try {
      e.features = FeatureVector(std::move(planes));
    } catch (const ArgumentError& err) {
      throw FormatError("feature cache entry " + std::to_string(n) + ": " + err.what());
    }
    entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) {
    throw FormatError("feature cache '" + path.string() + "' has trailing bytes");
  }

  // The format stores no model tag: one untagged sample-0 entry per subject
  // reads back as an average gallery.
  std::set<std::string> subjects;
  bool average = !entries.empty();
  for (const auto& e : entries) {
    if (e.sample_id != 0 || e.condition_tag || !subjects.insert(e.subject_id).second) {
      average = false;
      break;
    }
  }
  try {
    return Gallery(std::move(entries), average ? GalleryModel::average : GalleryModel::exemplar,
                   fp);
  } catch (const ValidationError& err) {
    throw FormatError("feature cache '" + path.string() + "': " + err.what());
  }
}

Gallery load_feature_cache(const std::filesystem::path& path, const Fingerprint& expected) {
  Gallery gallery = read_feature_cache(path);
  if (gallery.fingerprint() != expected) {
    throw StaleCacheError("feature cache '" + path.string() + "' was built with parameters " +
                          to_hex(gallery.fingerprint()).substr(0, 16) +
                          "..., expected " + to_hex(expected).substr(0, 16) + "...");
  }
  return gallery;
}

}  // namespace lbdface
