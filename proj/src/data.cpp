#include "tlc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <system_error>

#include "tlc/error.hpp"
#include "tlc/random.hpp"

namespace tlc {
namespace {

// Stream labels keep train, test and OOD draws independent of each other.
constexpr std::uint64_t kTrainStream = 0x7472'6169'6eull;
constexpr std::uint64_t kTestStream = 0x7465'7374ull;
constexpr std::uint64_t kOodStream = 0x6f6f'64ull;

LabeledDataset sample_classes(const std::vector<std::size_t>& counts, const Geometry& geometry,
                              std::uint64_t seed, std::uint64_t stream) {
  geometry.validate();
  const std::size_t k_count = counts.size();
  std::size_t total = 0;
  for (std::size_t n : counts) total += n;

  LabeledDataset ds;
  ds.features = Matrix(total, geometry.dim);
  ds.labels.reserve(total);
  std::size_t row = 0;
  for (std::size_t k = 0; k < k_count; ++k) {
    Rng rng(substream(seed, stream, k));
    const std::vector<double> mean = geometry.class_mean(k, k_count);
    for (std::size_t i = 0; i < counts[k]; ++i, ++row) {
      auto x = ds.features.row(row);
      for (std::size_t j = 0; j < geometry.dim; ++j) x[j] = mean[j] + geometry.sigma * rng.normal();
      ds.labels.push_back(k);
    }
  }
  return ds;
}

std::string describe(std::string_view what, std::uint64_t seed, const Geometry& g) {
  std::ostringstream os;
  os << what << "(seed=" << seed << ", dim=" << g.dim << ", radius=" << g.radius
     << ", sigma=" << g.sigma << ")";
  return os.str();
}

}  // namespace

std::string_view region_name(Region r) noexcept {
  switch (r) {
    case Region::kHead: return "head";
    case Region::kMedium: return "medium";
    case Region::kTail: return "tail";
  }
  return "unknown";
}

std::vector<Region> assign_regions(const std::vector<std::size_t>& counts,
                                   const RegionThresholds& thresholds) {
  if (thresholds.tail_below > thresholds.head_above + 1)
    throw InvalidArgument("region thresholds overlap: tail_below must be <= head_above + 1");
  std::vector<Region> regions(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] > thresholds.head_above)
      regions[k] = Region::kHead;
    else if (counts[k] < thresholds.tail_below)
      regions[k] = Region::kTail;
    else
      regions[k] = Region::kMedium;
  }
  return regions;
}

std::size_t LongTailSpec::train_size() const {
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;
  return n;
}

LongTailSpec make_spec(std::size_t num_classes, std::size_t max_count, double imbalance_factor,
                       std::size_t test_count, RegionThresholds thresholds) {
  if (num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
  if (!(imbalance_factor >= 1.0) || !std::isfinite(imbalance_factor))
    throw InvalidArgument("imbalance factor must be >= 1");
  if (static_cast<double>(max_count) < imbalance_factor)
    throw InvalidArgument("max_count must be >= imbalance factor");
  if (test_count < 1) throw InvalidArgument("test_count must be >= 1");

  LongTailSpec spec;
  spec.num_classes = num_classes;
  spec.max_count = max_count;
  spec.imbalance_factor = imbalance_factor;
  spec.test_count = test_count;
  spec.thresholds = thresholds;
  spec.counts.resize(num_classes);
  const double last = static_cast<double>(num_classes - 1);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double n = static_cast<double>(max_count) *
                     std::pow(imbalance_factor, -static_cast<double>(k) / last);
    spec.counts[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n)));
  }
  spec.regions = assign_regions(spec.counts, thresholds);
  return spec;
}

void Geometry::validate() const {
  if (dim < 2) throw InvalidArgument("geometry dim must be >= 2");
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw InvalidArgument("radius must be >= 0");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be > 0");
}

std::vector<double> Geometry::class_mean(std::size_t k, std::size_t num_classes) const {
  std::vector<double> mean(dim, 0.0);
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                       static_cast<double>(num_classes);
  mean[0] = radius * std::cos(angle);
  mean[1] = radius * std::sin(angle);
  return mean;
}

std::vector<std::size_t> LabeledDataset::histogram(std::size_t num_classes) const {
  std::vector<std::size_t> h(num_classes, 0);
  for (std::size_t y : labels) {
    if (y >= num_classes) throw InvalidArgument("label out of range in histogram");
    ++h[y];
  }
  return h;
}

LabeledDataset sample_train(const LongTailSpec& spec, const Geometry& geometry, std::uint64_t seed) {
  LabeledDataset ds = sample_classes(spec.counts, geometry, seed, kTrainStream);
  ds.provenance = describe("sample_train", seed, geometry);
  return ds;
}

LabeledDataset sample_test(const LongTailSpec& spec, const Geometry& geometry, std::uint64_t seed) {
  const std::vector<std::size_t> counts(spec.num_classes, spec.test_count);
  LabeledDataset ds = sample_classes(counts, geometry, seed, kTestStream);
  ds.provenance = describe("sample_test", seed, geometry);
  return ds;
}

double ood_min_distance(const Geometry& geometry, std::size_t num_classes, double margin) {
  double max_norm = 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    const auto m = geometry.class_mean(k, num_classes);
    double sq = 0.0;
    for (double v : m) sq += v * v;
    max_norm = std::max(max_norm, std::sqrt(sq));
  }
  return margin * (max_norm + 3.0 * geometry.sigma);
}

OodDataset sample_ood(const Geometry& geometry, std::size_t num_classes, std::size_t count,
                      double margin, std::uint64_t seed) {
  geometry.validate();
  if (!(margin > 0.0) || !std::isfinite(margin)) throw InvalidArgument("OOD margin must be > 0");
  if (num_classes < 2) throw InvalidArgument("num_classes must be >= 2");

  std::vector<std::vector<double>> means;
  double max_norm = 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    means.push_back(geometry.class_mean(k, num_classes));
    double sq = 0.0;
    for (double v : means.back()) sq += v * v;
    max_norm = std::max(max_norm, std::sqrt(sq));
  }
  const double bound = ood_min_distance(geometry, num_classes, margin);
  // Any point with norm >= bound + max_norm clears every mean; the shell is
  // half a bound thick.
  const double inner = bound + max_norm;
  const double outer = inner + 0.5 * bound;

  OodDataset ds;
  ds.features = Matrix(count, geometry.dim);
  Rng rng(substream(seed, kOodStream));
  std::vector<double> x(geometry.dim);
  for (std::size_t i = 0; i < count;) {
    double sq = 0.0;
    for (double& v : x) {
      v = rng.normal();
      sq += v * v;
    }
    if (sq == 0.0) continue;
    const double r = rng.uniform(inner, outer) / std::sqrt(sq);
    for (double& v : x) v *= r;

    bool clear = true;
    for (const auto& m : means) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) d2 += (x[j] - m[j]) * (x[j] - m[j]);
      if (std::sqrt(d2) < bound) {
        clear = false;
        break;
      }
    }
    if (!clear) continue;
    std::copy(x.begin(), x.end(), ds.features.row(i).begin());
    ++i;
  }
  std::ostringstream os;
  os << "sample_ood(seed=" << seed << ", margin=" << margin << ", count=" << count << ")";
  ds.provenance = os.str();
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

struct ParsedTable {
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<std::size_t> labels;
};

ParsedTable parse_table(const std::filesystem::path& path, bool with_label,
                        std::optional<std::size_t> num_classes) {
  const std::string source = path.string();
  const std::string text = read_file(path);
  std::vector<std::string_view> lines = split_lines(text);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(source, 0, "empty file: dataset has no header and no rows");

  const auto header = split_fields(lines[0]);
  const std::size_t feature_cols = with_label ? header.size() - 1 : header.size();
  if (with_label && (header.size() < 2 || header.back() != "label"))
    throw ParseError(source, 1, "header must end with a 'label' column");
  if (feature_cols == 0) throw ParseError(source, 1, "header declares no feature columns");
  for (std::size_t j = 0; j < feature_cols; ++j) {
    if (header[j] != "f" + std::to_string(j))
      throw ParseError(source, 1,
                       "expected column 'f" + std::to_string(j) + "', found '" +
                           std::string(header[j]) + "'");
  }
  if (lines.size() == 1) throw ParseError(source, 0, "empty dataset: header but no rows");

  ParsedTable t;
  t.dim = feature_cols;
  t.values.reserve((lines.size() - 1) * feature_cols);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    const auto fields = split_fields(lines[li]);
    if (fields.size() != header.size())
      throw ParseError(source, line_no,
                       "expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()));
    for (std::size_t j = 0; j < feature_cols; ++j) {
      double v = 0.0;
      const auto f = fields[j];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty())
        throw ParseError(source, line_no, "non-numeric value '" + std::string(f) + "' in column f" +
                                              std::to_string(j));
      if (!std::isfinite(v))
        throw ParseError(source, line_no, "non-finite value in column f" + std::to_string(j));
      t.values.push_back(v);
    }
    if (with_label) {
      const auto f = fields.back();
      std::size_t y = 0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), y);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty())
        throw ParseError(source, line_no, "label '" + std::string(f) + "' is not a non-negative integer");
      if (num_classes && y >= *num_classes)
        throw ParseError(source, line_no,
                         "label " + std::to_string(y) + " out of range for " +
                             std::to_string(*num_classes) + " classes");
      t.labels.push_back(y);
    }
  }
  return t;
}

void append_number(std::string& out, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

std::string header_line(std::size_t dim, bool with_label) {
  std::string h;
  for (std::size_t j = 0; j < dim; ++j) {
    if (j) h += ',';
    h += 'f' + std::to_string(j);
  }
  if (with_label) h += ",label";
  h += '\n';
  return h;
}

}  // namespace

LabeledDataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  ParsedTable t = parse_table(path, true, num_classes);
  LabeledDataset ds;
  ds.features.rows = t.labels.size();
  ds.features.cols = t.dim;
  ds.features.data = std::move(t.values);
  ds.labels = std::move(t.labels);
  ds.provenance = path.string();
  return ds;
}

OodDataset load_features_csv(const std::filesystem::path& path) {
  ParsedTable t = parse_table(path, false, std::nullopt);
  OodDataset ds;
  ds.features.cols = t.dim;
  ds.features.rows = t.values.size() / t.dim;
  ds.features.data = std::move(t.values);
  ds.provenance = path.string();
  return ds;
}

void write_csv(const LabeledDataset& dataset, const std::filesystem::path& path) {
  if (dataset.features.rows != dataset.labels.size())
    throw InvalidArgument("write_csv: feature rows and labels differ in length");
  std::string out = header_line(dataset.dim(), true);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (double v : dataset.features.row(i)) {
      append_number(out, v);
      out += ',';
    }
    out += std::to_string(dataset.labels[i]);
    out += '\n';
  }
  write_file_atomic(path, out);
}

void write_features_csv(const OodDataset& dataset, const std::filesystem::path& path) {
  std::string out = header_line(dataset.features.cols, false);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto row = dataset.features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      append_number(out, row[j]);
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    f.flush();
    if (!f) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw IoError("failed reading '" + path.string() + "'");
  return ss.str();
}

}  // namespace tlc
