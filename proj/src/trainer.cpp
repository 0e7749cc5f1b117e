#include "srgan/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "srgan/checkpoint.hpp"
#include "srgan/parallel.hpp"

namespace srgan::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double grad_norm(const std::vector<Tensor>& grads) {
  double s = 0;
  for (const auto& g : grads)
    for (float v : g.data()) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

bool finite(std::initializer_list<double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

std::vector<Tensor*> trainable_ptrs(nn::Network<float>& net) {
  std::vector<Tensor*> out;
  for (std::size_t i : net.trainable()) out.push_back(&net.tensors()[i].value);
  return out;
}

std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

// Copy-on-write snapshot of everything a step mutates, restored when the step
// aborts so a failed step leaves no half-applied update behind.
class Rollback {
 public:
  explicit Rollback(TrainState& st)
      : st_(st), g_(st.generator), d_(st.discriminator), g_opt_(st.g_opt), d_opt_(st.d_opt), g_steps_(st.g_steps),
        d_steps_(st.d_steps) {}

  template <typename F>
  auto run(F&& f) {
    try {
      return f();
    } catch (const NumericalAbort&) {
      st_.generator = std::move(g_);
      st_.discriminator = std::move(d_);
      st_.g_opt = std::move(g_opt_);
      st_.d_opt = std::move(d_opt_);
      st_.g_steps = g_steps_;
      st_.d_steps = d_steps_;
      throw;
    }
  }

 private:
  TrainState& st_;
  nn::Network<float> g_, d_;
  AdamState<float> g_opt_, d_opt_;
  std::int64_t g_steps_, d_steps_;
};

[[noreturn]] void abort_step(const StepLosses& s, const char* phase, double d_norm, double g_norm) {
  json snap = {{"step", s.step},          {"phase", phase},           {"d_loss", s.d_loss},
               {"g_adv", s.g_adv},        {"g_content", s.g_content}, {"g_perceptual", s.g_perceptual},
               {"total", s.total},        {"d_grad_norm", d_norm},    {"g_grad_norm", g_norm}};
  throw NumericalAbort("non-finite loss or gradient at step " + std::to_string(s.step) + " (" + phase + ")",
                       std::move(snap));
}

}  // namespace

std::string format_history_row(const StepLosses& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%d,%.17g,%.17g,%.17g,%.17g,%.17g", static_cast<long long>(s.step), s.epoch,
                s.d_loss, s.g_adv, s.g_content, s.g_perceptual, s.total);
  return buf;
}

TrainState init_state(const ExperimentConfig& cfg) {
  TrainState st;
  auto init = seeded(cfg.seed, 1);
  st.generator = nn::build_generator(cfg.generator, init());
  st.discriminator = nn::build_discriminator(cfg.discriminator, init());
  st.data_rng = seeded(cfg.seed, 2);
  return st;
}

namespace {

double discriminator_update(TrainState& st, const Tensor& real, const Tensor& fake, const AdamConfig& opt,
                            std::int64_t step) {
  Tape<float> tape;
  std::vector<Var<float>> real_leaves, fake_leaves;
  const Var<float> s_real = st.discriminator.forward(Var<float>(real), BnMode::train, &tape, &real_leaves);
  const Var<float> s_fake = st.discriminator.forward(Var<float>(fake), BnMode::train, &tape, &fake_leaves);
  StepLosses snap;
  snap.step = step;
  for (const Var<float>* s : {&s_real, &s_fake})
    for (float v : s->value.data())
      if (!std::isfinite(v)) abort_step(snap, "discriminator", 0.0, 0.0);
  const Var<float> d_loss = discriminator_loss(s_real, s_fake);
  snap.d_loss = d_loss.value.item();
  tape.backward(d_loss);
  std::vector<Tensor> grads;
  for (std::size_t i = 0; i < real_leaves.size(); ++i) {
    Tensor g = tape.grad(real_leaves[i]);
    const Tensor gf = tape.grad(fake_leaves[i]);
    auto gd = g.mutable_data();
    auto fd = gf.data();
    for (std::size_t k = 0; k < gd.size(); ++k) gd[k] += fd[k];
    grads.push_back(std::move(g));
  }
  const double norm = grad_norm(grads);
  if (!finite({snap.d_loss, norm})) abort_step(snap, "discriminator", norm, 0.0);
  adam_step(trainable_ptrs(st.discriminator), grads, st.d_opt, opt);
  ++st.d_steps;
  return snap.d_loss;
}

void generator_update(TrainState& st, Tape<float>& tape, const std::vector<Var<float>>& leaves, const Var<float>& fake,
                      const data::SampleBatch& batch, const LossConfig& loss,
                      const metrics::ConvFeatureNet<float>& feature_net, const AdamConfig& opt, StepLosses& out) {
  Var<float> total;
  bool have_total = false;
  auto accumulate = [&](const Var<float>& term, double weight) {
    total = have_total ? add(total, scale(term, weight)) : scale(term, weight);
    have_total = true;
  };
  const Var<float> target(batch.target);
  if (loss.content_weight > 0) {
    const Var<float> c = content_loss(fake, target, loss.content);
    out.g_content = c.value.item();
    accumulate(c, loss.content_weight);
  }
  if (loss.perceptual_weight > 0) {
    const Var<float> p = perceptual_loss(fake, target, feature_net);
    out.g_perceptual = p.value.item();
    accumulate(p, loss.perceptual_weight);
  }
  if (loss.adversarial_weight > 0) {
    const Var<float> s = st.discriminator.forward(fake, BnMode::train_frozen);
    for (float v : s.value.data())
      if (!std::isfinite(v)) abort_step(out, "generator", 0.0, 0.0);
    const Var<float> a = generator_adversarial_loss(s);
    out.g_adv = a.value.item();
    accumulate(a, loss.adversarial_weight);
  }
  out.total = total.value.item();
  if (!finite({out.total, out.g_content, out.g_perceptual, out.g_adv})) abort_step(out, "generator", 0.0, 0.0);
  const double recomposed =
      loss.content_weight * out.g_content + loss.perceptual_weight * out.g_perceptual + loss.adversarial_weight * out.g_adv;
  require(std::abs(recomposed - out.total) <= 1e-4 * std::max(1.0, std::abs(recomposed)), ErrorCode::internal,
          "total loss does not recompose from its weighted terms");

  tape.backward(total);
  std::vector<Tensor> grads;
  for (const auto& leaf : leaves) grads.push_back(tape.grad(leaf));
  const double norm = grad_norm(grads);
  if (!std::isfinite(norm)) abort_step(out, "generator", 0.0, norm);
  adam_step(trainable_ptrs(st.generator), grads, st.g_opt, opt);
  ++st.g_steps;
}

Var<float> generator_forward(TrainState& st, const data::SampleBatch& batch, Tape<float>& tape,
                             std::vector<Var<float>>& leaves, std::int64_t step) {
  const Var<float> fake = st.generator.forward(Var<float>(batch.input), BnMode::train, &tape, &leaves);
  require(fake.shape() == batch.target.shape(), ErrorCode::shape_mismatch,
          "generator output " + shape_str(fake.shape()) + " does not match target " + shape_str(batch.target.shape()));
  for (float v : fake.value.data())
    if (!std::isfinite(v)) {
      StepLosses snap;
      snap.step = step;
      abort_step(snap, "generator forward", 0.0, 0.0);
    }
  return fake;
}

}  // namespace

double discriminator_step(TrainState& st, const Tensor& real, const Tensor& fake, const AdamConfig& opt,
                          std::int64_t step) {
  return Rollback(st).run([&] { return discriminator_update(st, real, fake, opt, step); });
}

void generator_step(TrainState& st, const data::SampleBatch& batch, const LossConfig& loss,
                    const metrics::ConvFeatureNet<float>& feature_net, const AdamConfig& opt, StepLosses& out) {
  Rollback(st).run([&] {
    Tape<float> tape;
    std::vector<Var<float>> leaves;
    const Var<float> fake = generator_forward(st, batch, tape, leaves, out.step);
    generator_update(st, tape, leaves, fake, batch, loss, feature_net, opt, out);
  });
}

StepLosses train_step(TrainState& st, const data::SampleBatch& batch, const LossConfig& loss,
                      const metrics::ConvFeatureNet<float>& feature_net, const AdamConfig& opt) {
  require(st.g_steps == st.d_steps, ErrorCode::internal, "generator and discriminator step counters diverged");
  StepLosses out;
  out.step = st.g_steps + 1;
  return Rollback(st).run([&] {
    // One generator forward serves both phases, so running statistics advance
    // once per step.
    Tape<float> tape;
    std::vector<Var<float>> leaves;
    const Var<float> fake = generator_forward(st, batch, tape, leaves, out.step);
    out.d_loss = discriminator_update(st, batch.target, fake.value, opt, out.step);
    generator_update(st, tape, leaves, fake, batch, loss, feature_net, opt, out);
    return out;
  });
}

const char* convergence_name(Convergence c) { return c == Convergence::converged ? "converged" : "diverged"; }

Convergence detect_divergence(const std::vector<StepLosses>& history, double ratio) {
  require(!history.empty(), ErrorCode::invalid_argument, "detect_divergence: empty loss history");
  const bool use_content = std::any_of(history.begin(), history.end(), [](const auto& s) { return s.g_content != 0; });
  auto value = [&](const StepLosses& s) { return use_content ? s.g_content : s.total; };
  std::vector<StepLosses> first, last;
  const int e0 = history.front().epoch, e1 = history.back().epoch;
  if (e0 != e1) {
    for (const auto& s : history) {
      if (s.epoch == e0) first.push_back(s);
      if (s.epoch == e1) last.push_back(s);
    }
  } else {
    const std::size_t q = std::max<std::size_t>(1, history.size() / 4);
    first.assign(history.begin(), history.begin() + static_cast<std::ptrdiff_t>(q));
    last.assign(history.end() - static_cast<std::ptrdiff_t>(q), history.end());
  }
  auto mean = [&](const std::vector<StepLosses>& v) {
    double s = 0;
    for (const auto& x : v) s += value(x);
    return s / static_cast<double>(v.size());
  };
  const double a = mean(first), b = mean(last);
  if (!std::isfinite(a) || !std::isfinite(b)) return Convergence::diverged;
  return b < ratio * a ? Convergence::converged : Convergence::diverged;
}

namespace {

json config_for_header(const ExperimentConfig& cfg) {
  json j = cfg.to_json();
  j.erase("out_dir");
  j.erase("threads");
  return j;
}

void push_opt(nn::Archive& a, const std::string& prefix, const AdamState<float>& s) {
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    a.tensors.push_back({prefix + "m/" + std::to_string(i), s.m[i], false});
    a.tensors.push_back({prefix + "v/" + std::to_string(i), s.v[i], false});
  }
}

AdamState<float> pull_opt(const nn::Archive& a, const std::string& prefix, std::int64_t t, std::size_t count) {
  AdamState<float> s;
  s.t = t;
  if (t == 0) return s;
  for (std::size_t i = 0; i < count; ++i) {
    for (const char* which : {"m/", "v/"}) {
      const std::string name = prefix + which + std::to_string(i);
      auto it = std::find_if(a.tensors.begin(), a.tensors.end(), [&](const auto& x) { return x.name == name; });
      require(it != a.tensors.end(), ErrorCode::missing_tensor, "training checkpoint is missing '" + name + "'");
      (which[0] == 'm' ? s.m : s.v).push_back(it->value);
    }
  }
  return s;
}

}  // namespace

void save_train_state(const TrainState& st, const ExperimentConfig& cfg, const fs::path& path) {
  std::ostringstream rng;
  rng << st.data_rng;
  json history = json::array();
  for (const auto& h : st.history)
    history.push_back({h.step, h.epoch, h.d_loss, h.g_adv, h.g_content, h.g_perceptual, h.total});
  json header = {{"kind", "train_state"},
                 {"epoch", st.epoch},
                 {"g_steps", st.g_steps},
                 {"d_steps", st.d_steps},
                 {"g_opt_t", st.g_opt.t},
                 {"d_opt_t", st.d_opt.t},
                 {"data_rng", rng.str()},
                 {"discriminator_spec", st.discriminator.spec().to_json()},
                 {"config", config_for_header(cfg)},
                 {"config_hash", cfg.content_hash()},
                 {"history", history}};
  nn::Archive a = nn::network_archive(st.generator, header);
  for (const auto& t : st.discriminator.tensors()) a.tensors.push_back({"disc/" + t.name, t.value, t.trainable});
  push_opt(a, "opt/g/", st.g_opt);
  push_opt(a, "opt/d/", st.d_opt);
  nn::write_file_atomic(path, nn::encode_archive(a));
}

TrainState load_train_state(const fs::path& path, ExperimentConfig* cfg_out) {
  const nn::Archive a = nn::decode_archive(nn::read_file_bytes(path));
  require(a.header.value("kind", std::string()) == "train_state", ErrorCode::unsupported_format,
          "'" + path.string() + "' is not a training-state checkpoint");
  TrainState st;
  try {
    st.generator = nn::network_from_archive(a);
    nn::Archive d;
    d.header = {{"spec", a.header.at("discriminator_spec")}};
    for (const auto& t : a.tensors)
      if (t.name.rfind("disc/", 0) == 0) d.tensors.push_back({t.name.substr(5), t.value, t.trainable});
    st.discriminator = nn::network_from_archive(d);
    st.epoch = a.header.at("epoch").get<int>();
    st.g_steps = a.header.at("g_steps").get<std::int64_t>();
    st.d_steps = a.header.at("d_steps").get<std::int64_t>();
    st.g_opt = pull_opt(a, "opt/g/", a.header.at("g_opt_t").get<std::int64_t>(), st.generator.trainable().size());
    st.d_opt = pull_opt(a, "opt/d/", a.header.at("d_opt_t").get<std::int64_t>(), st.discriminator.trainable().size());
    std::istringstream rng(a.header.at("data_rng").get<std::string>());
    rng >> st.data_rng;
    require(!rng.fail(), ErrorCode::unsupported_format, "training checkpoint has a corrupt RNG state");
    for (const auto& h : a.header.at("history"))
      st.history.push_back({h.at(0).get<std::int64_t>(), h.at(1).get<int>(), h.at(2).get<double>(), h.at(3).get<double>(),
                            h.at(4).get<double>(), h.at(5).get<double>(), h.at(6).get<double>()});
    if (cfg_out) {
      json c = a.header.at("config");
      c["out_dir"] = cfg_out->out_dir;
      c["threads"] = cfg_out->threads;
      *cfg_out = ExperimentConfig::from_json(c);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::unsupported_format, "training checkpoint '" + path.string() + "': " + e.what());
  }
  return st;
}

namespace {

std::unique_ptr<metrics::ConvFeatureNet<float>> make_feature_net(const std::string& id) {
  if (id == "tinyconv") return std::make_unique<metrics::ConvFeatureNet<float>>(metrics::ConvFeatureNet<float>::tinyconv());
  if (id.rfind("archive:", 0) == 0)
    return std::make_unique<metrics::ConvFeatureNet<float>>(metrics::ConvFeatureNet<float>::from_archive(id.substr(8)));
  fail(ErrorCode::config, "loss.feature_net: unknown feature network '" + id + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  nn::write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_history(const fs::path& path, const std::vector<StepLosses>& history) {
  std::string csv = std::string(kLossHistoryHeader) + "\n";
  for (const auto& h : history) csv += format_history_row(h) + "\n";
  write_text(path, csv);
}

void write_run_manifest(const ExperimentConfig& cfg, const fs::path& dir, const json& status) {
  json j = {{"config", cfg.to_json()},
            {"config_hash", cfg.content_hash()},
            {"producer_mode", "single"},
            {"threads", num_threads()}};
  j.update(status);
  write_text(dir / "run.json", j.dump(2) + "\n");
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg, const std::optional<fs::path>& resume) {
  cfg.validate();
  apply_thread_request(cfg.threads);
  if (cfg.dataset.source.rfind("dir:", 0) == 0)
    require(fs::is_directory(cfg.dataset.source.substr(4)), ErrorCode::config,
            "dataset.source: directory '" + cfg.dataset.source.substr(4) + "' does not exist");

  TrainState st;
  if (resume) {
    ExperimentConfig stored = cfg;
    st = load_train_state(*resume, &stored);
    require(stored.content_hash() == cfg.content_hash(), ErrorCode::config,
            "resume: checkpoint '" + resume->string() + "' was written by a different configuration");
    require(st.epoch <= cfg.epochs, ErrorCode::config, "resume: checkpoint is past the configured epoch count");
  } else {
    st = init_state(cfg);
  }

  const data::Dataset ds = data::load_dataset(cfg.dataset);
  require(!ds.train.empty(), ErrorCode::config, "dataset has no training images");
  std::vector<data::Pair> pairs;
  pairs.reserve(ds.train.size());
  for (const auto& img : ds.train) pairs.push_back(data::make_pair(img, cfg.task, cfg.upscale_exponent, cfg.canny));
  const auto feature_net = make_feature_net(cfg.loss.feature_net);

  const fs::path dir = cfg.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::io, "cannot create '" + dir.string() + "': " + ec.message());
  write_run_manifest(cfg, dir, {{"status", "running"}, {"epochs_completed", st.epoch}});

  TrainResult result;
  const std::size_t n = pairs.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  try {
    for (int epoch = st.epoch + 1; epoch <= cfg.epochs; ++epoch) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), st.data_rng);
      for (std::size_t start = 0; start < n; start += bs) {
        std::vector<const data::Pair*> chunk;
        for (std::size_t k = start; k < std::min(n, start + bs); ++k) chunk.push_back(&pairs[order[k]]);
        const data::SampleBatch batch =
            data::make_batch(chunk, cfg.task, cfg.upscale_exponent, cfg.generator.input_channels);
        StepLosses s = train_step(st, batch, cfg.loss, *feature_net, cfg.optimizer);
        s.epoch = epoch;
        st.history.push_back(s);
      }
      st.epoch = epoch;
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
      save_train_state(st, cfg, dir / name);
      result.checkpoints.push_back(dir / name);
      write_history(dir / "loss_history.csv", st.history);
      spdlog::info("{}: epoch {}/{} done, last step total {:.6g}", cfg.name, epoch, cfg.epochs, st.history.back().total);
    }
  } catch (const NumericalAbort& e) {
    write_text(dir / "nan_snapshot.json", e.snapshot().dump(2) + "\n");
    write_history(dir / "loss_history.csv", st.history);
    write_run_manifest(cfg, dir, {{"status", "aborted"}, {"epochs_completed", st.epoch}, {"error", e.what()}});
    throw;
  }

  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", cfg.epochs);
  result.final_checkpoint = dir / name;
  result.history = st.history;
  result.convergence = st.history.empty() ? Convergence::converged : detect_divergence(st.history);
  if (result.convergence == Convergence::diverged)
    spdlog::warn("{}: training did not converge (loss did not fall over the run)", cfg.name);
  write_run_manifest(cfg, dir,
                     {{"status", "complete"},
                      {"epochs_completed", st.epoch},
                      {"convergence", convergence_name(result.convergence)},
                      {"final_checkpoint", result.final_checkpoint.filename().string()}});
  return result;
}

}  // namespace srgan::train
