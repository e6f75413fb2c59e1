#include "taskmri/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "taskmri/errors.hpp"

namespace taskmri {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

Task parse_task(const std::string& name) {
  if (name == "full_fov") return Task::FullFov;
  if (name == "roi_recon") return Task::RoiRecon;
  if (name == "segmentation") return Task::Segmentation;
  if (name == "classification") return Task::Classification;
  throw Error(ErrorKind::Config, "unknown task '" + name + "'");
}

std::string to_string(Task task) {
  switch (task) {
    case Task::FullFov: return "full_fov";
    case Task::RoiRecon: return "roi_recon";
    case Task::Segmentation: return "segmentation";
    case Task::Classification: return "classification";
  }
  return "unknown";
}

SplitManifest::Part parse_split(const std::string& name) {
  if (name == "train") return SplitManifest::Part::Train;
  if (name == "val") return SplitManifest::Part::Val;
  if (name == "test") return SplitManifest::Part::Test;
  throw Error(ErrorKind::InvalidInput, "unknown split '" + name + "'");
}

void Dataset::validate_labels(Task for_task) const {
  for (const auto& s : samples) {
    if (for_task == Task::RoiRecon && !s.roi) {
      throw Error(ErrorKind::Schema, "sample " + s.sample_id + " has no roi box (required by roi_recon)");
    }
    if (for_task == Task::Segmentation && !s.seg_map) {
      throw Error(ErrorKind::Schema, "sample " + s.sample_id + " has no seg_map (required by segmentation)");
    }
    if (for_task == Task::Classification && !s.cls_label) {
      throw Error(ErrorKind::Schema, "sample " + s.sample_id + " has no cls_label (required by classification)");
    }
    if (s.roi && !s.roi->fits(s.height(), s.width())) {
      throw Error(ErrorKind::Schema, "sample " + s.sample_id + " has an roi box outside the image");
    }
  }
}

Dataset Dataset::for_task(Task t) const {
  validate_labels(t);
  Dataset out = *this;
  out.task = t;
  for (auto& s : out.samples) {
    if (t != Task::RoiRecon) s.roi.reset();
    if (t != Task::Segmentation) s.seg_map.reset();
    if (t != Task::Classification) s.cls_label.reset();
  }
  if (t != Task::Segmentation) out.num_classes = 0;
  return out;
}

void SplitManifest::validate() const {
  std::set<std::string> seen;
  for (const auto* part : {&train, &val, &test}) {
    for (const auto& id : *part) {
      if (!seen.insert(id).second) {
        throw Error(ErrorKind::Integrity, "patient " + id + " appears in more than one split");
      }
    }
  }
}

SplitManifest SplitManifest::generate(const Dataset& dataset, uint64_t seed, double train_fraction,
                                      double val_fraction) {
  std::vector<std::string> patients;
  std::set<std::string> seen;
  for (const auto& s : dataset.samples) {
    if (seen.insert(s.patient_id).second) patients.push_back(s.patient_id);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);
  const auto n = patients.size();
  auto n_train = static_cast<size_t>(std::llround(train_fraction * static_cast<double>(n)));
  auto n_val = static_cast<size_t>(std::llround(val_fraction * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  SplitManifest m;
  m.train_fraction = train_fraction;
  m.val_fraction = val_fraction;
  m.test_fraction = 1.0 - train_fraction - val_fraction;
  m.train.assign(patients.begin(), patients.begin() + static_cast<std::ptrdiff_t>(n_train));
  m.val.assign(patients.begin() + static_cast<std::ptrdiff_t>(n_train),
               patients.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  m.test.assign(patients.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), patients.end());
  return m;
}

std::vector<size_t> SplitManifest::indices(const Dataset& dataset, Part part) const {
  const auto& ids = part == Part::Train ? train : part == Part::Val ? val : test;
  std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<size_t> out;
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    if (wanted.count(dataset.samples[i].patient_id)) out.push_back(i);
  }
  return out;
}

Sample make_sample(std::string sample_id, std::string patient_id, const torch::Tensor& image,
                   const std::vector<ComplexGrid>* sensitivities) {
  auto x = image.to(torch::kFloat32).to(torch::kComplexFloat);
  torch::Tensor coils;
  if (sensitivities && !sensitivities->empty()) {
    std::vector<torch::Tensor> parts;
    for (const auto& s : *sensitivities) parts.push_back(s.data().to(torch::kComplexFloat) * x);
    coils = torch::stack(parts);
  } else {
    coils = x.unsqueeze(0);
  }
  Sample s;
  s.sample_id = std::move(sample_id);
  s.patient_id = std::move(patient_id);
  s.kspace = fft2c(coils);
  s.target = rss(ifft2c(s.kspace), 0).to(torch::kFloat32);
  return s;
}

namespace {

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int64_t integer(int64_t lo, int64_t hi_inclusive) {
    return std::uniform_int_distribution<int64_t>(lo, hi_inclusive)(engine_);
  }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

 private:
  std::mt19937_64 engine_;
};

using Grid = std::vector<double>;

void add_ellipse(Grid& img, int64_t h, int64_t w, double cy, double cx, double ay, double ax, double value) {
  for (int64_t r = 0; r < h; ++r) {
    for (int64_t c = 0; c < w; ++c) {
      const double y = (static_cast<double>(r) - cy) / ay;
      const double x = (static_cast<double>(c) - cx) / ax;
      if (y * y + x * x <= 1.0) img[static_cast<size_t>(r * w + c)] += value;
    }
  }
}

torch::Tensor to_tensor(const Grid& img, int64_t h, int64_t w) {
  return torch::from_blob(const_cast<double*>(img.data()), {h, w}, torch::kFloat64).clone().to(torch::kFloat32);
}

std::string id_of(const char* prefix, int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%05lld", prefix, static_cast<long long>(i));
  return buf;
}

}  // namespace

Dataset make_anisotropic_phantoms(int64_t count, int64_t height, int64_t width, uint64_t seed,
                                  const AnisotropicOptions& options) {
  if (count < 1) throw Error(ErrorKind::InvalidInput, "count must be at least 1");
  if (height < 16 || width < 16) throw Error(ErrorKind::InvalidInput, "anisotropic phantoms need at least 16x16");
  Rng rng(seed);
  const double hd = static_cast<double>(height);
  const double wd = static_cast<double>(width);
  std::optional<std::vector<ComplexGrid>> sens;
  if (options.num_coils > 1) sens = synthesize_sensitivities(options.num_coils, height, width, options.coil_smoothness);

  Dataset ds;
  ds.task = Task::RoiRecon;
  ds.height = height;
  ds.width = width;
  ds.num_coils = options.num_coils;
  const int64_t roi_h = std::max<int64_t>(4, std::llround(0.1875 * hd));
  const int64_t roi_w = std::max<int64_t>(8, std::llround(0.375 * wd));
  const int64_t margin_y = height / 8;
  const int64_t margin_x = width / 8;
  for (int64_t i = 0; i < count; ++i) {
    Grid img(static_cast<size_t>(height * width), 0.0);
    // body: one wide ellipse
    add_ellipse(img, height, width, hd / 2 + rng.uniform(-0.05, 0.05) * hd, wd / 2 + rng.uniform(-0.05, 0.05) * wd,
                rng.uniform(0.28, 0.36) * hd, rng.uniform(0.38, 0.45) * wd, 0.4);
    // flat horizontal structures
    for (int k = 0; k < 3; ++k) {
      const double ey = rng.uniform(0.3, 0.7) * hd;
      const double ex = rng.uniform(0.3, 0.7) * wd;
      const double by = rng.uniform(2.0, 5.0) * hd / 64.0;
      const double bx = rng.uniform(8.0, 16.0) * wd / 64.0;
      add_ellipse(img, height, width, ey, ex, by, bx, rng.uniform(0.15, 0.35));
    }
    RoiBox roi;
    roi.height = roi_h;
    roi.width = roi_w;
    roi.top = rng.integer(margin_y, height - margin_y - roi_h - 1);
    roi.left = rng.integer(margin_x, width - margin_x - roi_w - 1);
    const double thickness = rng.uniform(1.5, 2.5) * options.stripe_thickness_scale;
    const double freq = 1.0 / (2.0 * thickness);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    // stripes constant along x, tapered at the box edges
    for (int64_t r = roi.top; r < roi.top + roi.height; ++r) {
      const double wy = std::clamp(
          std::min(static_cast<double>(r - roi.top + 1), static_cast<double>(roi.top + roi.height - r)) / 2.0, 0.0,
          1.0);
      const double stripe = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * freq * static_cast<double>(r) + phase);
      for (int64_t c = roi.left; c < roi.left + roi.width; ++c) {
        const double wx = std::clamp(
            std::min(static_cast<double>(c - roi.left + 1), static_cast<double>(roi.left + roi.width - c)) / 3.0,
            0.0, 1.0);
        img[static_cast<size_t>(r * width + c)] += 0.5 * wx * wy * stripe;
      }
    }
    auto sample = make_sample(id_of("s", i), id_of("p", i / std::max<int64_t>(1, options.slices_per_patient)),
                              to_tensor(img, height, width), sens ? &*sens : nullptr);
    sample.roi = roi;
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

std::vector<double> seg_class_thresholds(int64_t num_classes) {
  // class k >= 1 has intensities within +-0.25 spacing of 0.1 + k * spacing
  const double spacing = 0.8 / static_cast<double>(num_classes - 1);
  std::vector<double> out;
  out.push_back(0.5 * (0.1 + spacing - 0.25 * spacing));
  for (int64_t k = 1; k + 1 < num_classes; ++k) {
    out.push_back(0.1 + (static_cast<double>(k) + 0.5) * spacing);
  }
  return out;
}

Dataset make_seg_phantoms(int64_t count, int64_t height, int64_t width, int64_t num_classes, uint64_t seed) {
  if (count < 1) throw Error(ErrorKind::InvalidInput, "count must be at least 1");
  if (num_classes < 2) throw Error(ErrorKind::InvalidInput, "segmentation phantoms need at least two classes");
  Rng rng(seed);
  const double hd = static_cast<double>(height);
  const double wd = static_cast<double>(width);
  const double spacing = 0.8 / static_cast<double>(num_classes - 1);
  Dataset ds;
  ds.task = Task::Segmentation;
  ds.height = height;
  ds.width = width;
  ds.num_classes = num_classes;
  for (int64_t i = 0; i < count; ++i) {
    std::vector<int64_t> labels(static_cast<size_t>(height * width), 0);
    double cy = hd / 2 + rng.uniform(-0.04, 0.04) * hd;
    double cx = wd / 2 + rng.uniform(-0.04, 0.04) * wd;
    double ay = rng.uniform(0.34, 0.42) * hd;
    double ax = rng.uniform(0.36, 0.44) * wd;
    for (int64_t k = 1; k < num_classes; ++k) {
      for (int64_t r = 0; r < height; ++r) {
        for (int64_t c = 0; c < width; ++c) {
          const double y = (static_cast<double>(r) - cy) / ay;
          const double x = (static_cast<double>(c) - cx) / ax;
          if (y * y + x * x <= 1.0) labels[static_cast<size_t>(r * width + c)] = k;
        }
      }
      // next ellipse strictly inside this one
      const double scale = rng.uniform(0.62, 0.72);
      cy += rng.uniform(-0.08, 0.08) * ay;
      cx += rng.uniform(-0.08, 0.08) * ax;
      ay *= scale;
      ax *= scale;
    }
    std::vector<double> intensity(static_cast<size_t>(num_classes), 0.0);
    for (int64_t k = 1; k < num_classes; ++k) {
      intensity[static_cast<size_t>(k)] = 0.1 + static_cast<double>(k) * spacing + rng.uniform(-0.25, 0.25) * spacing;
    }
    Grid img(static_cast<size_t>(height * width));
    auto seg = torch::zeros({num_classes, height, width}, torch::kFloat32);
    auto acc = seg.accessor<float, 3>();
    for (int64_t r = 0; r < height; ++r) {
      for (int64_t c = 0; c < width; ++c) {
        const auto k = labels[static_cast<size_t>(r * width + c)];
        img[static_cast<size_t>(r * width + c)] = intensity[static_cast<size_t>(k)];
        acc[k][r][c] = 1.0F;
      }
    }
    auto sample = make_sample(id_of("s", i), id_of("p", i / 2), to_tensor(img, height, width));
    sample.seg_map = seg;
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

Dataset make_cls_phantoms(int64_t count, int64_t height, int64_t width, double lesion_rate, uint64_t seed) {
  if (count < 1) throw Error(ErrorKind::InvalidInput, "count must be at least 1");
  if (!(lesion_rate > 0.0 && lesion_rate < 1.0)) throw Error(ErrorKind::InvalidInput, "lesion_rate must be in (0,1)");
  Rng rng(seed);
  const double hd = static_cast<double>(height);
  const double wd = static_cast<double>(width);
  Dataset ds;
  ds.task = Task::Classification;
  ds.height = height;
  ds.width = width;
  for (int64_t i = 0; i < count; ++i) {
    Grid img(static_cast<size_t>(height * width), 0.0);
    const double cy = hd / 2 + rng.uniform(-0.04, 0.04) * hd;
    const double cx = wd / 2 + rng.uniform(-0.04, 0.04) * wd;
    const double ay = rng.uniform(0.32, 0.40) * hd;
    const double ax = rng.uniform(0.32, 0.40) * wd;
    add_ellipse(img, height, width, cy, cx, ay, ax, rng.uniform(0.30, 0.40));
    for (int k = 0; k < 3; ++k) {
      add_ellipse(img, height, width, cy + rng.uniform(-0.4, 0.4) * ay, cx + rng.uniform(-0.4, 0.4) * ax,
                  rng.uniform(0.1, 0.3) * ay, rng.uniform(0.1, 0.3) * ax, rng.uniform(0.05, 0.12));
    }
    for (auto& v : img) v = std::min(v, kClsBackgroundCeiling - 0.05);
    const bool lesion = rng.bernoulli(lesion_rate);
    if (lesion) {
      // blob centre inside the inner 60% of the body ellipse
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double radius = std::sqrt(rng.uniform(0.0, 1.0)) * 0.6;
      const double by = cy + radius * ay * std::sin(angle);
      const double bx = cx + radius * ax * std::cos(angle);
      const double sigma = 1.5 * std::min(hd, wd) / 64.0;
      for (int64_t r = 0; r < height; ++r) {
        for (int64_t c = 0; c < width; ++c) {
          const double d2 = std::pow(static_cast<double>(r) - by, 2) + std::pow(static_cast<double>(c) - bx, 2);
          img[static_cast<size_t>(r * width + c)] += 0.6 * std::exp(-d2 / (2.0 * sigma * sigma));
        }
      }
      // the blob peak sits between pixels in general; lift the nearest pixel to the full amplitude
      const auto pr = std::clamp<int64_t>(std::llround(by), 0, height - 1);
      const auto pc = std::clamp<int64_t>(std::llround(bx), 0, width - 1);
      auto& peak = img[static_cast<size_t>(pr * width + pc)];
      peak = std::max(peak, kClsBackgroundCeiling + 0.2);
    }
    auto sample = make_sample(id_of("s", i), id_of("p", i / 2), to_tensor(img, height, width));
    sample.cls_label = lesion ? 1 : 0;
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// disk format

void write_f32(const fs::path& file, const torch::Tensor& t) {
  auto data = t.detach();
  data = data.is_complex() ? torch::view_as_real(data.to(torch::kComplexFloat).contiguous()).contiguous()
                           : data.to(torch::kFloat32).contiguous();
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + file.string());
  const auto n = static_cast<size_t>(data.numel());
  const float* p = data.data_ptr<float>();
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    for (size_t i = 0; i < n; ++i) {
      auto bits = std::bit_cast<uint32_t>(p[i]);
      bits = __builtin_bswap32(bits);
      out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
  }
  if (!out) throw Error(ErrorKind::Io, "short write to " + file.string());
}

torch::Tensor read_f32(const fs::path& file, std::vector<int64_t> shape) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + file.string());
  int64_t n = 1;
  for (auto d : shape) n *= d;
  auto t = torch::empty(shape, torch::kFloat32);
  in.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(n * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(float))) {
    throw Error(ErrorKind::Schema, "payload " + file.string() + " is shorter than its header says");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::Schema, "payload " + file.string() + " is longer than its header says");
  }
  if constexpr (std::endian::native != std::endian::little) {
    auto* p = reinterpret_cast<uint32_t*>(t.data_ptr<float>());
    for (int64_t i = 0; i < n; ++i) p[i] = __builtin_bswap32(p[i]);
  }
  return t;
}

namespace {

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, file.string() + ": " + e.what());
  }
}

void write_json(const fs::path& file, const json& j) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + file.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void write_split(const SplitManifest& split, const fs::path& file) {
  json j;
  j["fractions"] = {{"train", split.train_fraction}, {"val", split.val_fraction}, {"test", split.test_fraction}};
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  write_json(file, j);
}

SplitManifest read_split(const fs::path& file) {
  auto j = read_json(file);
  SplitManifest m;
  try {
    m.train = j.at("train").get<std::vector<std::string>>();
    m.val = j.at("val").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    if (j.contains("fractions")) {
      m.train_fraction = j["fractions"].at("train").get<double>();
      m.val_fraction = j["fractions"].at("val").get<double>();
      m.test_fraction = j["fractions"].at("test").get<double>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, file.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

void save_dataset(const Dataset& dataset, const SplitManifest& split, const fs::path& root) {
  split.validate();
  std::error_code ec;
  fs::create_directories(root / "samples", ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + root.string() + ": " + ec.message());
  json meta;
  meta["format_version"] = 1;
  meta["task"] = to_string(dataset.task);
  meta["count"] = dataset.samples.size();
  meta["height"] = dataset.height;
  meta["width"] = dataset.width;
  meta["num_coils"] = dataset.num_coils;
  meta["num_classes"] = dataset.num_classes;
  json ids = json::array();
  for (const auto& s : dataset.samples) {
    ids.push_back(s.sample_id);
    const auto dir = root / "samples" / s.sample_id;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
    json h;
    h["sample_id"] = s.sample_id;
    h["patient_id"] = s.patient_id;
    h["height"] = s.height();
    h["width"] = s.width();
    h["num_coils"] = s.num_coils();
    h["dtype"] = "float32";
    h["byte_order"] = "little";
    h["layout"] = "row-major; complex interleaved real/imag; coil-major";
    h["files"]["kspace"] = "kspace.f32";
    h["files"]["target"] = "target.f32";
    json labels = json::object();
    if (s.roi) {
      labels["roi"] = {{"top", s.roi->top}, {"left", s.roi->left}, {"height", s.roi->height}, {"width", s.roi->width}};
    }
    if (s.cls_label) labels["cls_label"] = *s.cls_label;
    if (s.seg_map) {
      labels["seg_classes"] = s.seg_map->size(0);
      h["files"]["seg_map"] = "seg_map.f32";
      write_f32(dir / "seg_map.f32", *s.seg_map);
    }
    h["labels"] = labels;
    write_f32(dir / "kspace.f32", s.kspace);
    write_f32(dir / "target.f32", s.target);
    write_json(dir / "header.json", h);
  }
  meta["sample_ids"] = ids;
  write_json(root / "dataset.json", meta);
  write_split(split, root / "splits.json");
}

namespace {

Sample load_sample(const fs::path& dir) {
  auto h = read_json(dir / "header.json");
  Sample s;
  try {
    s.sample_id = h.at("sample_id").get<std::string>();
    s.patient_id = h.at("patient_id").get<std::string>();
    const auto height = h.at("height").get<int64_t>();
    const auto width = h.at("width").get<int64_t>();
    const auto coils = h.at("num_coils").get<int64_t>();
    if (h.at("dtype").get<std::string>() != "float32") throw Error(ErrorKind::Schema, "unsupported dtype");
    const auto& files = h.at("files");
    auto k = read_f32(dir / files.at("kspace").get<std::string>(), {coils, height, width, 2});
    s.kspace = torch::view_as_complex(k).clone();
    s.target = read_f32(dir / files.at("target").get<std::string>(), {height, width});
    const auto& labels = h.at("labels");
    if (labels.contains("roi")) {
      const auto& r = labels["roi"];
      s.roi = RoiBox{r.at("top").get<int64_t>(), r.at("left").get<int64_t>(), r.at("height").get<int64_t>(),
                     r.at("width").get<int64_t>()};
    }
    if (labels.contains("cls_label")) s.cls_label = labels["cls_label"].get<int>();
    if (labels.contains("seg_classes")) {
      const auto c = labels["seg_classes"].get<int64_t>();
      s.seg_map = read_f32(dir / files.at("seg_map").get<std::string>(), {c, height, width});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, (dir / "header.json").string() + ": " + e.what());
  }
  return s;
}

}  // namespace

LoadedDataset load_dataset(const fs::path& root) {
  auto meta = read_json(root / "dataset.json");
  return load_dataset(root, parse_task(meta.at("task").get<std::string>()));
}

LoadedDataset load_dataset(const fs::path& root, Task task) {
  auto meta = read_json(root / "dataset.json");
  Dataset ds;
  try {
    ds.task = parse_task(meta.at("task").get<std::string>());
    ds.height = meta.at("height").get<int64_t>();
    ds.width = meta.at("width").get<int64_t>();
    ds.num_coils = meta.at("num_coils").get<int64_t>();
    ds.num_classes = meta.value("num_classes", int64_t{0});
    for (const auto& id : meta.at("sample_ids")) {
      ds.samples.push_back(load_sample(root / "samples" / id.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, (root / "dataset.json").string() + ": " + e.what());
  }
  for (const auto& s : ds.samples) {
    if (s.height() != ds.height || s.width() != ds.width || s.num_coils() != ds.num_coils) {
      throw Error(ErrorKind::Schema, "sample " + s.sample_id + " disagrees with the dataset shape");
    }
  }
  LoadedDataset out;
  out.dataset = ds.for_task(task);
  if (fs::exists(root / "splits.json")) {
    out.split = read_split(root / "splits.json");
  } else {
    out.split = SplitManifest::generate(out.dataset, 0);
    out.split_from_disk = false;
  }
  out.split.validate();
  return out;
}

}  // namespace taskmri
