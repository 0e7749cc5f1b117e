#include "srgan/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <optional>
#include <random>

#include "srgan/png_io.hpp"

namespace srgan::data {

namespace fs = std::filesystem;
using nlohmann::json;

Task parse_task(const std::string& s) {
  if (s == "sr") return Task::sr;
  if (s == "color") return Task::color;
  if (s == "edges") return Task::edges;
  fail(ErrorCode::config, "unknown task '" + s + "' (expected sr, color or edges)");
}

std::string task_name(Task t) {
  switch (t) {
    case Task::sr: return "sr";
    case Task::color: return "color";
    case Task::edges: return "edges";
  }
  return "?";
}

json DatasetManifest::to_json() const {
  json j{{"source", source},
         {"train_count", train_count},
         {"test_count", test_count},
         {"crop", crop == CropPolicy::center_resize ? "center-resize" : "random-crop"},
         {"side", side},
         {"seed", seed}};
  if (!train_files.empty() || !test_files.empty()) {
    j["train_files"] = train_files;
    j["test_files"] = test_files;
  }
  return j;
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  DatasetManifest m;
  try {
    m.source = j.at("source").get<std::string>();
    m.train_count = j.value("train_count", m.train_count);
    m.test_count = j.value("test_count", m.test_count);
    const std::string crop = j.value("crop", std::string("center-resize"));
    require(crop == "center-resize" || crop == "random-crop", ErrorCode::config,
            "dataset.crop: expected center-resize or random-crop, got '" + crop + "'");
    m.crop = crop == "center-resize" ? CropPolicy::center_resize : CropPolicy::random_crop;
    m.side = j.value("side", m.side);
    m.seed = j.value("seed", m.seed);
    if (j.contains("train_files")) m.train_files = j.at("train_files").get<std::vector<std::string>>();
    if (j.contains("test_files")) m.test_files = j.at("test_files").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::config, std::string("dataset manifest: ") + e.what());
  }
  require(m.source.rfind("synthetic:", 0) == 0 || m.source.rfind("dir:", 0) == 0, ErrorCode::config,
          "dataset.source must start with 'synthetic:' or 'dir:', got '" + m.source + "'");
  require(m.test_count >= 0, ErrorCode::config, "dataset.test_count must be >= 0");
  require(m.train_count >= -1, ErrorCode::config, "dataset.train_count must be >= -1");
  require(m.side >= 16, ErrorCode::config, "dataset.side must be >= 16");
  return m;
}

std::string DatasetManifest::label() const {
  if (source.rfind("synthetic:", 0) == 0) return source.substr(10);
  fs::path p = source.substr(4);
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

namespace {

ImageBuffer apply_crop(const ImageBuffer& img, const DatasetManifest& m, std::mt19937_64& rng) {
  if (img.width == m.side && img.height == m.side) return img;
  return m.crop == CropPolicy::center_resize ? center_crop_resize(img, m.side) : random_crop(img, m.side, rng);
}

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

std::vector<std::string> split_files(const json& j, const char* key) {
  return j.contains(key) ? j.at(key).get<std::vector<std::string>>() : std::vector<std::string>{};
}

}  // namespace

Dataset ingest_directory(const fs::path& dir, const DatasetManifest& manifest) {
  require(fs::is_directory(dir), ErrorCode::io, "dataset directory '" + dir.string() + "' does not exist");
  Dataset ds;
  ds.manifest = manifest;
  std::mt19937_64 crop_rng(manifest.seed ^ 0x9E3779B97F4A7C15ull);

  std::vector<std::string> train_files = manifest.train_files;
  std::vector<std::string> test_files = manifest.test_files;
  if (train_files.empty() && test_files.empty() && fs::exists(dir / "manifest.json")) {
    std::ifstream in(dir / "manifest.json");
    json j;
    try {
      j = json::parse(in);
      train_files = split_files(j, "train_files");
      test_files = split_files(j, "test_files");
    } catch (const json::exception& e) {
      spdlog::warn("ignoring unreadable manifest.json in '{}': {}", dir.string(), e.what());
    }
  }

  auto decode = [&](const std::string& name) -> std::optional<ImageBuffer> {
    try {
      return apply_crop(read_png(dir / name, 3), manifest, crop_rng);
    } catch (const Error& e) {
      spdlog::warn("skipping '{}': {}", (dir / name).string(), e.what());
      return std::nullopt;
    }
  };

  if (!train_files.empty() || !test_files.empty()) {
    auto take = [&](const std::vector<std::string>& names, int limit, std::vector<ImageBuffer>& imgs,
                    std::vector<std::string>& ids) {
      for (const auto& name : names) {
        if (limit >= 0 && static_cast<int>(imgs.size()) >= limit) break;
        if (auto img = decode(name)) {
          imgs.push_back(std::move(*img));
          ids.push_back(name);
        }
      }
    };
    take(train_files, manifest.train_count, ds.train, ds.train_ids);
    take(test_files, manifest.test_count, ds.test, ds.test_ids);
  } else {
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && is_png(entry.path())) names.push_back(entry.path().filename().string());
    require(!names.empty(), ErrorCode::io, "dataset directory '" + dir.string() + "' contains no PNG files");
    std::sort(names.begin(), names.end());
    std::mt19937_64 shuffle_rng(manifest.seed);
    std::shuffle(names.begin(), names.end(), shuffle_rng);
    // Test split first so its membership does not depend on train_count.
    for (const auto& name : names) {
      const bool test_full = static_cast<int>(ds.test.size()) >= manifest.test_count;
      const bool train_full = manifest.train_count >= 0 && static_cast<int>(ds.train.size()) >= manifest.train_count;
      if (test_full && train_full) break;
      auto img = decode(name);
      if (!img) continue;
      if (!test_full) {
        ds.test.push_back(std::move(*img));
        ds.test_ids.push_back(name);
      } else {
        ds.train.push_back(std::move(*img));
        ds.train_ids.push_back(name);
      }
    }
  }
  require(!ds.train.empty() || !ds.test.empty(), ErrorCode::io, "no decodable PNG files in '" + dir.string() + "'");
  return ds;
}

Dataset load_dataset(const DatasetManifest& m) {
  if (m.source.rfind("dir:", 0) == 0) return ingest_directory(m.source.substr(4), m);
  const Family family = parse_family(m.source.substr(10));
  require(m.train_count >= 0, ErrorCode::config, "synthetic datasets need an explicit train_count");
  const int n = m.train_count + m.test_count;
  Dataset ds;
  ds.manifest = m;
  std::vector<ImageBuffer> all = synth_dataset(family, n, m.seed, m.side);
  for (int i = 0; i < n; ++i) {
    const std::string id = family_name(family) + "#" + std::to_string(i);
    if (i < m.train_count) {
      ds.train.push_back(std::move(all[static_cast<std::size_t>(i)]));
      ds.train_ids.push_back(id);
    } else {
      ds.test.push_back(std::move(all[static_cast<std::size_t>(i)]));
      ds.test_ids.push_back(id);
    }
  }
  return ds;
}

DatasetManifest write_synthetic_dataset(Family family, int n, std::uint64_t seed, int test_count,
                                        const fs::path& out_dir, bool force) {
  require(n > 0, ErrorCode::usage, "synth: --n must be > 0");
  require(test_count >= 0 && test_count <= n, ErrorCode::usage, "synth: test count must be in [0, n]");
  if (fs::exists(out_dir) && !fs::is_empty(out_dir))
    require(force, ErrorCode::usage, "output directory '" + out_dir.string() + "' is not empty (use --force)");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, ErrorCode::io, "cannot create '" + out_dir.string() + "': " + ec.message());

  DatasetManifest m;
  m.source = "dir:" + out_dir.string();
  m.seed = seed;
  m.train_count = n - test_count;
  m.test_count = test_count;
  const std::string fam = family_name(family);
  for (int i = 0; i < n; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%05d.png", fam.c_str(), i);
    write_png(out_dir / name, synth_image(family, seed, i));
    (i < m.train_count ? m.train_files : m.test_files).push_back(name);
  }
  json j = m.to_json();
  j["family"] = fam;
  j["n"] = n;
  j["generator"] = "synthetic:" + fam;
  std::ofstream out(out_dir / "manifest.json");
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCode::io, "cannot write manifest in '" + out_dir.string() + "'");
  return m;
}

Pair make_pair(const ImageBuffer& target, Task task, int u, const CannyParams& canny) {
  require(target.channels == 3, ErrorCode::invalid_argument, "make_pair: target must be RGB");
  require(u >= 0 && u <= 16, ErrorCode::invalid_argument, "make_pair: invalid upscale exponent " + std::to_string(u));
  const int factor = 1 << u;
  require(target.width % factor == 0 && target.height % factor == 0, ErrorCode::invalid_argument,
          "make_pair: target side not divisible by 2^" + std::to_string(u));
  const int w = target.width / factor, h = target.height / factor;
  switch (task) {
    case Task::sr:
      return {bicubic_resize(target, w, h), target};
    case Task::color:
      require(u == 0, ErrorCode::invalid_argument, "make_pair: colorization runs at upscale ratio 1 (u must be 0)");
      return {to_grayscale(target), target};
    case Task::edges: {
      ImageBuffer edges = canny_edges(to_grayscale(target), canny);
      return {u == 0 ? edges : bicubic_resize(edges, w, h), target};
    }
  }
  fail(ErrorCode::invalid_argument, "make_pair: unknown task");
}

Tensor images_to_tensor(const std::vector<const ImageBuffer*>& images, int channels) {
  require(!images.empty(), ErrorCode::invalid_argument, "images_to_tensor: empty batch");
  const int w = images[0]->width, h = images[0]->height;
  Tensor t(Shape{static_cast<std::int64_t>(images.size()), channels, h, w});
  auto d = t.mutable_data();
  for (std::size_t n = 0; n < images.size(); ++n) {
    const ImageBuffer& img = *images[n];
    require(img.width == w && img.height == h, ErrorCode::shape_mismatch, "images_to_tensor: mixed image sizes");
    require(img.channels == channels || img.channels == 1, ErrorCode::shape_mismatch,
            "images_to_tensor: cannot map " + std::to_string(img.channels) + " channels to " + std::to_string(channels));
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const float v = img.at(x, y, img.channels == 1 ? 0 : c);
          d[((n * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)) * h + static_cast<std::size_t>(y)) * w +
            static_cast<std::size_t>(x)] = 2.0f * v - 1.0f;
        }
  }
  return t;
}

ImageBuffer tensor_to_image(const Tensor& t, std::int64_t n) {
  require(t.rank() == 4 && (t.dim(1) == 1 || t.dim(1) == 3), ErrorCode::shape_mismatch,
          "tensor_to_image: expected (N,1|3,H,W), got " + shape_str(t.shape()));
  const int c = static_cast<int>(t.dim(1)), h = static_cast<int>(t.dim(2)), w = static_cast<int>(t.dim(3));
  ImageBuffer img(w, h, c);
  auto d = t.data();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const float v = d[static_cast<std::size_t>(((n * c + ch) * h + y) * w + x)];
        img.at(x, y, ch) = std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f);
      }
  return img;
}

SampleBatch make_batch(const std::vector<const Pair*>& pairs, Task task, int u, int input_channels) {
  std::vector<const ImageBuffer*> in, tgt;
  for (const Pair* p : pairs) {
    require(p->target.width == p->input.width << u && p->target.height == p->input.height << u,
            ErrorCode::shape_mismatch, "make_batch: pair violates target side = input side * 2^u");
    in.push_back(&p->input);
    tgt.push_back(&p->target);
  }
  return {images_to_tensor(in, input_channels), images_to_tensor(tgt, 3), task, u};
}

}  // namespace srgan::data
