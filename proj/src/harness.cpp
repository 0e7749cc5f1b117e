#include "srgan/harness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "srgan/checkpoint.hpp"
#include "srgan/png_io.hpp"

namespace srgan::harness {

using nlohmann::json;
using data::ImageBuffer;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    require(!ec, ErrorCode::io, "cannot create '" + path.parent_path().string() + "': " + ec.message());
  }
  nn::write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = nn::read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::io, "'" + dir.string() + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct LoadedGenerator {
  std::optional<nn::Network<float>> net;
  std::string label;
};

LoadedGenerator load_generator(const std::string& checkpoint) {
  if (checkpoint == kPassthrough) return {std::nullopt, kPassthrough};
  const nn::Archive a = nn::decode_archive(nn::read_file_bytes(checkpoint));
  LoadedGenerator g{nn::network_from_archive(a), fs::path(checkpoint).stem().string()};
  require(g.net->spec().role == nn::Role::generator, ErrorCode::spec_mismatch,
          "checkpoint '" + checkpoint + "' holds a discriminator, not a generator");
  if (a.header.contains("config") && a.header["config"].contains("dataset")) {
    try {
      g.label = data::DatasetManifest::from_json(a.header["config"]["dataset"]).label();
    } catch (const Error&) {
    }
  }
  return g;
}

ImageBuffer as_rgb(const ImageBuffer& img) { return img.channels == 3 ? img : data::replicate_channels(img, 3); }

ImageBuffer nearest_resize(const ImageBuffer& img, int w, int h) {
  ImageBuffer out(w, h, img.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = img.at(x * img.width / w, y * img.height / h, c);
  return out;
}

// Runs the generator over inputs in chunks; BN runs on running statistics so
// chunking does not change the result.
std::vector<ImageBuffer> generate(nn::Network<float>& net, const std::vector<const ImageBuffer*>& inputs) {
  std::vector<ImageBuffer> out;
  const std::size_t chunk = 8;
  for (std::size_t start = 0; start < inputs.size(); start += chunk) {
    std::vector<const ImageBuffer*> part(inputs.begin() + static_cast<std::ptrdiff_t>(start),
                                         inputs.begin() + static_cast<std::ptrdiff_t>(std::min(inputs.size(), start + chunk)));
    const Tensor y = net.infer(data::images_to_tensor(part, net.spec().input_channels));
    for (std::size_t i = 0; i < part.size(); ++i) out.push_back(data::tensor_to_image(y, static_cast<std::int64_t>(i)));
  }
  return out;
}

}  // namespace

data::DatasetManifest cmd_synth(const SynthOptions& opt) {
  require(opt.n > 0, ErrorCode::usage, "synth: --n must be > 0");
  const data::Family family = data::parse_family(opt.family);
  const int test_count = opt.test_count >= 0 ? opt.test_count : std::min(32, opt.n / 2);
  return data::write_synthetic_dataset(family, opt.n, opt.seed, test_count, opt.out_dir, opt.force);
}

train::TrainResult cmd_train(const TrainOptions& opt) {
  train::ExperimentConfig cfg = train::ExperimentConfig::load(opt.config.string());
  if (opt.out_dir) cfg.out_dir = opt.out_dir->string();
  if (opt.seed) cfg.seed = *opt.seed;
  return train::train(cfg, opt.resume);
}

int cmd_infer(const InferOptions& opt) {
  LoadedGenerator g = load_generator(opt.checkpoint);
  const auto inputs = list_pngs(opt.input_dir);
  require(!inputs.empty(), ErrorCode::io, "infer: no PNG files in '" + opt.input_dir.string() + "'");
  const int in_channels = g.net ? g.net->spec().input_channels : 3;
  int written = 0;
  for (const auto& path : inputs) {
    ImageBuffer img = data::read_png(path, 3);
    if (in_channels == 1) img = data::to_grayscale(img);
    ImageBuffer out;
    if (g.net) {
      out = generate(*g.net, {&img}).front();
    } else {
      out = as_rgb(img);
    }
    const std::string name = path.filename().string();
    std::error_code ec;
    fs::create_directories(opt.out_dir / "triptych", ec);
    require(!ec, ErrorCode::io, "cannot create '" + opt.out_dir.string() + "': " + ec.message());
    data::write_png(opt.out_dir / name, out);

    std::vector<ImageBuffer> panels = {nearest_resize(as_rgb(img), out.width, out.height)};
    if (opt.target_dir && fs::exists(*opt.target_dir / name)) {
      ImageBuffer target = data::read_png(*opt.target_dir / name, 3);
      require(target.width == out.width && target.height == out.height, ErrorCode::shape_mismatch,
              "infer: target '" + name + "' is " + std::to_string(target.width) + "x" + std::to_string(target.height) +
                  ", output is " + std::to_string(out.width) + "x" + std::to_string(out.height));
      panels.push_back(std::move(target));
    }
    panels.push_back(out);
    ImageBuffer strip(out.width * static_cast<int>(panels.size()), out.height, 3);
    for (std::size_t p = 0; p < panels.size(); ++p)
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
          for (int c = 0; c < 3; ++c) strip.at(static_cast<int>(p) * out.width + x, y, c) = panels[p].at(x, y, c);
    data::write_png(opt.out_dir / "triptych" / name, strip);
    ++written;
  }
  return written;
}

metrics::MetricsRow evaluate_generator(const std::optional<nn::Network<float>>& generator,
                                       const train::ExperimentConfig& cfg, const std::string& train_label,
                                       const metrics::FeatureExtractor& extractor, std::int64_t n, bool leakage) {
  if (generator) {
    const nn::NetworkSpec& s = generator->spec();
    require(s.upscale_exponent == cfg.upscale_exponent && s.input_channels == cfg.generator.input_channels,
            ErrorCode::spec_mismatch,
            "spec mismatch: generator expects " + std::to_string(s.input_channels) + "-channel input at u=" +
                std::to_string(s.upscale_exponent) + ", eval set provides " +
                std::to_string(cfg.generator.input_channels) + "-channel input at u=" +
                std::to_string(cfg.upscale_exponent));
  } else {
    require(cfg.upscale_exponent == 0, ErrorCode::usage, "passthrough evaluation requires upscale_exponent 0");
  }
  const data::Dataset ds = data::load_dataset(cfg.dataset);
  const auto& pool = leakage ? ds.train : ds.test;
  require(n >= 2 && n <= static_cast<std::int64_t>(pool.size()), ErrorCode::usage,
          "eval: n=" + std::to_string(n) + " but the " + (leakage ? "train" : "test") + " split has " +
              std::to_string(pool.size()) + " images");
  std::vector<data::Pair> pairs;
  for (std::int64_t i = 0; i < n; ++i)
    pairs.push_back(data::make_pair(pool[static_cast<std::size_t>(i)], cfg.task, cfg.upscale_exponent, cfg.canny));
  std::vector<const ImageBuffer*> inputs;
  std::vector<ImageBuffer> targets;
  for (const auto& p : pairs) {
    inputs.push_back(&p.input);
    targets.push_back(p.target);
  }
  std::vector<ImageBuffer> generated;
  if (generator) {
    nn::Network<float> net = *generator;
    generated = generate(net, inputs);
  } else {
    for (const auto* in : inputs) generated.push_back(as_rgb(*in));
  }
  metrics::MetricsRow row = metrics::score_pair_sets(targets, generated, extractor, n);
  row.train_set = train_label;
  row.eval_set = cfg.dataset.label() + (leakage ? "[train-split]" : "");
  row.seed = cfg.seed;
  return row;
}

namespace {

void append_row(const fs::path& csv, const metrics::MetricsRow& row) {
  std::string text;
  if (fs::exists(csv)) {
    text = read_text(csv);
    metrics::MetricsReport::from_csv(text, csv.string());
    if (!text.empty() && text.back() != '\n') text += '\n';
  } else {
    text = std::string(metrics::kReportHeader) + "\n";
  }
  write_text(csv, text + metrics::format_row(row) + "\n");
}

}  // namespace

metrics::MetricsRow cmd_eval(const EvalOptions& opt) {
  const train::ExperimentConfig cfg = train::ExperimentConfig::load(opt.config.string());
  const LoadedGenerator g = load_generator(opt.checkpoint);
  const auto extractor = metrics::make_extractor(opt.extractor);
  const metrics::MetricsRow row = evaluate_generator(g.net, cfg, g.label, *extractor, opt.n, opt.leakage);
  if (opt.out_csv) append_row(*opt.out_csv, row);
  return row;
}

MatrixConfig MatrixConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::config, "matrix config '" + path.string() + "' is not valid JSON: " + e.what());
  } catch (const Error& e) {
    fail(ErrorCode::config, std::string("matrix config: ") + e.what());
  }
  require(j.is_object() && j.contains("train") && j.at("train").is_array(), ErrorCode::config,
          "matrix config needs a 'train' array of experiment configs");
  for (const auto& [key, value] : j.items())
    require(key == "train" || key == "extractor" || key == "n" || key == "out_dir" || key == "cache_dir",
            ErrorCode::config, "matrix config: unknown field '" + key + "'");
  MatrixConfig m;
  const fs::path base = path.parent_path();
  for (const auto& entry : j.at("train")) {
    if (entry.is_string()) {
      fs::path p = entry.get<std::string>();
      m.train_configs.push_back(train::ExperimentConfig::load((p.is_absolute() ? p : base / p).string()));
    } else {
      m.train_configs.push_back(train::ExperimentConfig::from_json(entry));
    }
  }
  try {
    m.extractor = j.value("extractor", m.extractor);
    m.n = j.value("n", m.n);
    m.out_dir = j.value("out_dir", m.out_dir.string());
    m.cache_dir = j.value("cache_dir", m.cache_dir.string());
  } catch (const json::exception& e) {
    fail(ErrorCode::config, std::string("matrix config: ") + e.what());
  }
  require(!m.train_configs.empty(), ErrorCode::config, "matrix config: 'train' is empty");
  return m;
}

bool MatrixResult::complete() const {
  for (const auto& row : cells)
    for (const auto& c : row)
      if (!c) return false;
  return true;
}

std::string MatrixResult::grid_csv(const std::string& metric) const {
  std::string out = "train\\eval";
  for (const auto& e : eval_labels) out += "," + e;
  out += "\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out += train_labels[i];
    for (const auto& c : cells[i]) {
      if (!c) {
        out += ",MISSING";
        continue;
      }
      out += "," + metrics::format_number(metric == "fid" ? c->fid : metric == "ssim" ? c->ssim : c->psnr_db);
    }
    out += "\n";
  }
  return out;
}

json MatrixResult::plot_json() const {
  json j = {{"extractor", extractor}, {"n", n}, {"groups", eval_labels}, {"metrics", json::object()}};
  for (const char* metric : {"fid", "psnr_db", "ssim"}) {
    json series = json::array();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      json values = json::array();
      for (const auto& c : cells[i]) {
        if (!c) {
          values.push_back("MISSING");
          continue;
        }
        const double v = std::string(metric) == "fid" ? c->fid : std::string(metric) == "ssim" ? c->ssim : c->psnr_db;
        values.push_back(std::isinf(v) ? json("inf") : json(v));
      }
      series.push_back({{"train", train_labels[i]}, {"values", values}});
    }
    j["metrics"][metric] = series;
  }
  return j;
}

MatrixResult cmd_matrix(const MatrixOptions& opt) {
  MatrixConfig m = MatrixConfig::load(opt.config);
  if (opt.out_dir) m.out_dir = *opt.out_dir;
  if (opt.extractor) m.extractor = *opt.extractor;
  if (opt.n) m.n = *opt.n;
  const auto& first = m.train_configs.front();
  for (const auto& c : m.train_configs)
    require(c.task == first.task && c.upscale_exponent == first.upscale_exponent && c.dataset.side == first.dataset.side &&
                c.generator.input_channels == first.generator.input_channels,
            ErrorCode::config, "matrix: every train config must share task, upscale_exponent, side and input channels");
  const auto extractor = metrics::make_extractor(m.extractor);

  MatrixResult res;
  res.extractor = extractor->id();
  res.n = m.n;
  for (const auto& c : m.train_configs) {
    res.train_labels.push_back(c.dataset.label());
    res.eval_labels.push_back(c.dataset.label());
  }
  const std::size_t k = m.train_configs.size();
  res.cells.assign(k, std::vector<std::optional<metrics::MetricsRow>>(k));
  std::optional<Error> first_error;
  json checkpoints = json::array();

  for (std::size_t i = 0; i < k; ++i) {
    train::ExperimentConfig cfg = m.train_configs[i];
    const fs::path run_dir = m.cache_dir / cfg.content_hash();
    cfg.out_dir = run_dir.string();
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", cfg.epochs);
    const fs::path final_ckpt = run_dir / name;
    std::optional<nn::Network<float>> gen;
    try {
      bool reuse = false;
      if (fs::exists(final_ckpt) && fs::exists(run_dir / "run.json"))
        reuse = json::parse(read_text(run_dir / "run.json")).value("status", std::string()) == "complete";
      if (reuse) {
        spdlog::info("matrix: reusing {} for '{}'", final_ckpt.string(), res.train_labels[i]);
      } else {
        spdlog::info("matrix: training '{}' into {}", res.train_labels[i], run_dir.string());
        train::train(cfg);
      }
      gen = nn::load_checkpoint(final_ckpt, cfg.generator);
      checkpoints.push_back({{"train", res.train_labels[i]}, {"checkpoint", final_ckpt.string()}, {"reused", reuse}});
    } catch (const Error& e) {
      spdlog::error("matrix: training '{}' failed: {}", res.train_labels[i], e.what());
      if (!first_error) first_error = e;
      continue;
    }
    for (std::size_t j = 0; j < k; ++j) {
      try {
        res.cells[i][j] = evaluate_generator(gen, m.train_configs[j], res.train_labels[i], *extractor, m.n, false);
        res.cells[i][j]->seed = m.train_configs[i].seed;
      } catch (const Error& e) {
        spdlog::error("matrix: cell ({}, {}) failed: {}", res.train_labels[i], res.eval_labels[j], e.what());
        if (!first_error) first_error = e;
      }
    }
  }

  std::string csv = std::string(metrics::kReportHeader) + "\n";
  json cells = json::array();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const auto& c = res.cells[i][j];
      if (c) {
        csv += metrics::format_row(*c) + "\n";
        cells.push_back(metrics::MetricsReport{{*c}}.to_json()[0]);
      } else {
        csv += res.train_labels[i] + "," + res.eval_labels[j] + ",MISSING,MISSING,MISSING," + std::to_string(m.n) + "," +
               res.extractor + ",MISSING\n";
        cells.push_back({{"train_set", res.train_labels[i]}, {"eval_set", res.eval_labels[j]}, {"status", "MISSING"}});
      }
    }
  write_text(m.out_dir / "matrix.csv", csv);
  for (const char* metric : {"fid", "psnr_db", "ssim"})
    write_text(m.out_dir / "grids" / (std::string(metric) + ".csv"), res.grid_csv(metric));
  write_text(m.out_dir / "plot.json", res.plot_json().dump(2) + "\n");
  write_text(m.out_dir / "matrix.json", json{{"extractor", res.extractor},
                                             {"n", res.n},
                                             {"train_labels", res.train_labels},
                                             {"eval_labels", res.eval_labels},
                                             {"complete", res.complete()},
                                             {"checkpoints", checkpoints},
                                             {"cells", cells}}
                                                .dump(2) +
                                            "\n");
  if (first_error) throw *first_error;
  return res;
}

metrics::MetricsReport merge_reports(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::io, "report: '" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  using Key = std::tuple<std::string, std::string, std::string, std::int64_t, std::uint64_t>;
  std::map<Key, std::pair<metrics::MetricsRow, std::string>> merged;
  std::vector<std::string> conflicts;
  for (const auto& f : files) {
    const auto rep = metrics::MetricsReport::from_csv(read_text(f), f.string());
    for (const auto& r : rep.rows) {
      const Key key{r.train_set, r.eval_set, r.extractor, r.n, r.seed};
      auto [it, inserted] = merged.emplace(key, std::pair{r, f.filename().string()});
      if (!inserted && !(it->second.first == r))
        conflicts.push_back(metrics::format_row(r) + " (" + f.filename().string() + ") vs " +
                            metrics::format_row(it->second.first) + " (" + it->second.second + ")");
    }
  }
  if (!conflicts.empty()) {
    std::string msg = "report: conflicting duplicate rows:";
    for (const auto& c : conflicts) msg += "\n  " + c;
    fail(ErrorCode::conflict, msg);
  }
  metrics::MetricsReport out;
  for (auto& [key, value] : merged) out.rows.push_back(value.first);
  return out;
}

metrics::MetricsReport cmd_report(const fs::path& dir, const std::optional<fs::path>& out_csv) {
  const metrics::MetricsReport rep = merge_reports(dir);
  const fs::path csv = out_csv ? *out_csv : dir / "report.csv";
  write_text(csv, rep.to_csv());
  fs::path js = csv;
  js.replace_extension(".json");
  write_text(js, rep.to_json().dump(2) + "\n");
  return rep;
}

}  // namespace srgan::harness
