#include "maskgate/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "maskgate/rng.hpp"

namespace maskgate {

Dataset generate_synthetic_3d(const SyntheticSpec& spec) {
  if (spec.samples_per_class < 1) throw ConfigError("samples per class must be >= 1");
  if (spec.sigma < 0.0) throw ConfigError("noise scale must be >= 0");
  if (spec.delta <= 0.0) throw ConfigError("class separation must be > 0");
  const int n = 2 * spec.samples_per_class;
  Tensor inputs({n, 3});
  std::vector<int> labels(static_cast<std::size_t>(n));
  Rng r(spec.seed, "synth-data");
  auto& v = inputs.values();
  const double two_pi = 2.0 * 3.14159265358979323846;
  int row = 0;
  for (int cls = 0; cls < 2; ++cls) {
    const double z_center = cls == 0 ? spec.delta / 2.0 : -spec.delta / 2.0;
    for (int i = 0; i < spec.samples_per_class; ++i, ++row) {
      const double theta = r.uniform(0.0, two_pi);
      const double radius = 1.0 + spec.sigma * r.normal();
      const double z = z_center + spec.sigma * r.normal();
      v[static_cast<std::size_t>(row) * 3 + 0] = radius * std::cos(theta);
      v[static_cast<std::size_t>(row) * 3 + 1] = radius * std::sin(theta);
      v[static_cast<std::size_t>(row) * 3 + 2] = z;
      labels[static_cast<std::size_t>(row)] = cls;
    }
  }
  Dataset d;
  d.inputs = inputs;
  d.labels = std::move(labels);
  d.name = "synthetic-3d";
  d.classes = 2;
  return d;
}

namespace {

std::uint32_t read_be_u32(std::istream& is, const std::string& path) {
  unsigned char buf[4];
  if (!is.read(reinterpret_cast<char*>(buf), 4)) {
    throw FormatError(path + " is truncated");
  }
  return (static_cast<std::uint32_t>(buf[0]) << 24) |
         (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

void write_be_u32(std::ostream& os, std::uint32_t v) {
  char buf[4] = {static_cast<char>((v >> 24) & 0xff), static_cast<char>((v >> 16) & 0xff),
                 static_cast<char>((v >> 8) & 0xff), static_cast<char>(v & 0xff)};
  os.write(buf, 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open " + images_path);
  if (read_be_u32(imgs, images_path) != 0x00000803u) {
    throw FormatError(images_path + " lacks the IDX image magic");
  }
  const std::uint32_t n = read_be_u32(imgs, images_path);
  const std::uint32_t h = read_be_u32(imgs, images_path);
  const std::uint32_t w = read_be_u32(imgs, images_path);
  if (n == 0 || h == 0 || w == 0) throw FormatError(images_path + " declares empty dimensions");
  const std::size_t count = static_cast<std::size_t>(n) * h * w;
  std::vector<unsigned char> bytes(count);
  if (!imgs.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count))) {
    throw FormatError(images_path + " is truncated");
  }

  std::ifstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw IoError("cannot open " + labels_path);
  if (read_be_u32(lbls, labels_path) != 0x00000801u) {
    throw FormatError(labels_path + " lacks the IDX label magic");
  }
  const std::uint32_t ln = read_be_u32(lbls, labels_path);
  if (ln != n) {
    throw DataError(images_path + " holds " + std::to_string(n) + " images but " +
                    labels_path + " holds " + std::to_string(ln) + " labels");
  }
  std::vector<unsigned char> label_bytes(ln);
  if (!lbls.read(reinterpret_cast<char*>(label_bytes.data()), static_cast<std::streamsize>(ln))) {
    throw FormatError(labels_path + " is truncated");
  }

  Dataset d;
  d.inputs = Tensor({static_cast<int>(n), 1, static_cast<int>(h), static_cast<int>(w)});
  auto& v = d.inputs.values();
  for (std::size_t i = 0; i < count; ++i) v[i] = static_cast<double>(bytes[i]) / 255.0;
  d.labels.reserve(ln);
  int max_label = 0;
  for (unsigned char b : label_bytes) {
    d.labels.push_back(static_cast<int>(b));
    max_label = std::max(max_label, static_cast<int>(b));
  }
  d.classes = max_label + 1;
  d.name = images_path;
  return d;
}

void write_idx(const std::string& images_path, const std::string& labels_path,
               const Dataset& d) {
  if (d.inputs.rank() != 4 || d.inputs.dim(1) != 1) {
    throw UsageError("IDX export expects [N,1,H,W] images, got " + d.inputs.shape_str());
  }
  std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
  if (!imgs) throw IoError("cannot open " + images_path + " for writing");
  write_be_u32(imgs, 0x00000803u);
  write_be_u32(imgs, static_cast<std::uint32_t>(d.inputs.dim(0)));
  write_be_u32(imgs, static_cast<std::uint32_t>(d.inputs.dim(2)));
  write_be_u32(imgs, static_cast<std::uint32_t>(d.inputs.dim(3)));
  for (double v : d.inputs.values()) {
    const double clamped = std::min(1.0, std::max(0.0, v));
    imgs.put(static_cast<char>(static_cast<int>(std::lround(clamped * 255.0))));
  }
  std::ofstream lbls(labels_path, std::ios::binary | std::ios::trunc);
  if (!lbls) throw IoError("cannot open " + labels_path + " for writing");
  write_be_u32(lbls, 0x00000801u);
  write_be_u32(lbls, static_cast<std::uint32_t>(d.labels.size()));
  for (int l : d.labels) lbls.put(static_cast<char>(l));
  if (!imgs || !lbls) throw IoError("failed while writing IDX files");
}

Dataset load_csv(const std::string& path, int width, int height, int channels) {
  if (width < 1 || height < 1 || channels < 1) {
    throw ConfigError("CSV image dimensions must be positive");
  }
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  const int pixels = width * height * channels;
  std::vector<double> values;
  std::vector<int> labels;
  std::string line;
  bool first = true;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (first) {
      first = false;
      // Header if the first field does not parse as a number.
      try {
        std::size_t pos = 0;
        std::stod(fields.at(0), &pos);
        if (pos != fields.at(0).size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        continue;
      }
    }
    if (static_cast<int>(fields.size()) != pixels + 1) {
      throw FormatError(path + ":" + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(pixels + 1));
    }
    double label_value;
    try {
      label_value = std::stod(fields[0]);
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(line_no) + " has a non-numeric label");
    }
    const int label = static_cast<int>(label_value);
    if (label < 0 || static_cast<double>(label) != label_value) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      " label must be a non-negative integer");
    }
    labels.push_back(label);
    for (int i = 1; i <= pixels; ++i) {
      try {
        values.push_back(std::stod(fields[static_cast<std::size_t>(i)]));
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(line_no) + " has a non-numeric pixel");
      }
    }
  }
  if (labels.empty()) throw DataError(path + " holds no samples");
  Dataset d;
  const int n = static_cast<int>(labels.size());
  d.inputs = Tensor({n, channels, height, width}, std::move(values));
  d.labels = std::move(labels);
  d.classes = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  d.name = path;
  return d;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& d, int k, std::uint64_t seed) {
  const int n = d.size();
  if (k < 0 || k >= n) {
    throw ConfigError("holdout size " + std::to_string(k) + " must lie in [0," +
                      std::to_string(n) + ")");
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng r(seed, "holdout");
  r.shuffle(perm);
  std::vector<int> hold(perm.begin(), perm.begin() + k);
  std::vector<int> train(perm.begin() + k, perm.end());
  auto subset = [&](const std::vector<int>& idx, const std::string& suffix) {
    Dataset s;
    if (!idx.empty()) {
      auto [inputs, labels] = gather_batch(d, idx);
      s.inputs = inputs;
      s.labels = labels;
    }
    s.classes = d.classes;
    s.name = d.name + suffix;
    return s;
  };
  return {subset(train, "/train"), subset(hold, "/holdout")};
}

std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& d,
                                                 const std::vector<int>& indices) {
  if (indices.empty()) throw UsageError("cannot gather an empty batch");
  std::vector<int> shape = d.inputs.shape();
  shape[0] = static_cast<int>(indices.size());
  Tensor batch(shape);
  const std::size_t row = d.inputs.size() / static_cast<std::size_t>(d.inputs.dim(0));
  const auto& src = d.inputs.values();
  auto& dst = batch.values();
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= d.size()) {
      throw UsageError("batch index " + std::to_string(idx) + " out of range");
    }
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(idx * row),
              src.begin() + static_cast<std::ptrdiff_t>((idx + 1) * row),
              dst.begin() + static_cast<std::ptrdiff_t>(i * row));
    labels.push_back(d.labels[static_cast<std::size_t>(idx)]);
  }
  return {batch, labels};
}

}  // namespace maskgate
