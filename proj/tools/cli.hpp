#pragma once

// mfd command line: train, eval, detect, bench.
// Exit codes: 0 success, 1 usage error or invalid option value, 2 runtime failure.

#include <CLI11.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mfd/mfd.hpp"

namespace mfd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

struct TrainOptions {
  std::string data, out, test;
  std::size_t epochs = 10, batch = 16;
  double lr = 0.001;
  std::uint64_t seed = 42;
  double shear = 0.2, zoom_lo = 0.8, zoom_hi = 1.2, flip_p = 0.5;
};

struct EvalOptions {
  std::string data, conditions, model, cascade, report, json;
  std::string precision = "f32";
};

struct DetectOptions {
  std::string input, model, cascade, out = "detections";
  std::string precision = "f32";
  double scale_factor = 1.1, margin = 0.0;
  int min_neighbors = 3, min_size = 30;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
};

struct BenchOptions {
  std::string model;
  std::string precision = "f32";
  std::size_t iters = 1000, warmup = 100;
  std::size_t threads = 1;
  bool reference = false;
};

// Activation tensors are tens of MB. glibc would mmap and unmap each one and
// page-fault it in again every batch; keeping them on the heap avoids that.
inline void keep_large_allocations() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

inline fs::path history_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p += ".history.csv";
  return p;
}

inline int run_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  cfg.validate();
  AugmentConfig aug{o.shear, o.zoom_lo, o.zoom_hi, o.flip_p, o.seed};
  aug.validate();

  auto ds = load_dataset(o.data);
  for (const auto& w : ds.warnings) err << "warning: skipped " << w << '\n';
  out << "training on " << ds.size() << " images (";
  for (auto c : kAllClasses) out << (ordinal(c) ? ", " : "") << class_name(c) << ' ' << ds.counts[ordinal(c)];
  out << ")\n";

  Network<double> net = build_mask_net(o.seed);
  const DirectorySource train_set(std::move(ds));
  auto log_epoch = [&](const EpochStats& e) {
    out << "epoch " << e.epoch << "/" << cfg.epochs << "  loss " << e.loss << "  train_acc " << e.train_accuracy
        << std::endl;
  };
  TrainHistory hist;
  if (!o.test.empty()) {
    hist = train(net, train_set, cfg, Augmenter{aug, true}, DirectorySource(load_dataset(o.test)), log_epoch);
    out << "test_acc " << *hist.test_accuracy << '\n';
  } else {
    hist = train(net, train_set, cfg, Augmenter{aug, true}, NoTestSet{}, log_epoch);
  }

  nlohmann::json meta;
  meta["seed"] = o.seed;
  meta["epochs"] = o.epochs;
  meta["batch_size"] = o.batch;
  meta["learning_rate"] = o.lr;
  meta["optimizer"] = {{"name", "adam"}, {"beta1", cfg.beta1}, {"beta2", cfg.beta2}, {"epsilon", cfg.epsilon}};
  meta["augment"] = {{"shear", aug.shear_max}, {"zoom_lo", aug.zoom_lo}, {"zoom_hi", aug.zoom_hi},
                     {"flip_p", aug.flip_probability}};
  meta["train_images"] = train_set.size();
  if (!hist.epochs.empty()) {
    meta["final_loss"] = hist.epochs.back().loss;
    meta["final_train_accuracy"] = hist.epochs.back().train_accuracy;
  }
  if (hist.test_accuracy) meta["test_accuracy"] = *hist.test_accuracy;
  save_model(net, o.out, meta);

  std::ofstream h(history_path(o.out));
  if (!h) throw IoError("cannot write '" + history_path(o.out).string() + "'");
  write_history(h, hist);
  out << "saved " << o.out << " and " << history_path(o.out).string() << '\n';
  return kExitOk;
}

inline DetectParams detect_params(double scale_factor, int min_neighbors, int min_size) {
  DetectParams p;
  p.scale_factor = scale_factor;
  p.min_neighbors = min_neighbors;
  p.min_size = min_size;
  return p;
}

inline CascadeModel load_cascade(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_cascade_xml(std::string(bytes.begin(), bytes.end()));
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
}

// Runs `fn` with the model as float32 or float64 according to `precision`.
template <class Fn>
auto with_precision(const Network<double>& net, const std::string& precision, Fn&& fn) {
  if (precision == "f64") return fn(net);
  return fn(net.cast<float>());
}

inline int run_eval(const EvalOptions& o, const DetectOptions& d, std::ostream& out) {
  const Network<double> net = load_model(o.model);
  if (!o.conditions.empty()) {
    const auto cascade = load_cascade(o.cascade);
    PipelineConfig pc{detect_params(d.scale_factor, d.min_neighbors, d.min_size), d.margin};
    const auto rep = with_precision(net, o.precision, [&](const auto& n) {
      return evaluate_conditions(o.conditions, [&](const Image& img) {
        return process_frame(img, cascade, n, pc).detections;
      });
    });
    const std::string text = render_condition_report(rep);
    out << text;
    if (!o.report.empty()) write_text(o.report, text);
    if (!o.json.empty()) write_text(o.json, condition_report_json(rep).dump(2) + "\n");
    return kExitOk;
  }

  const DirectorySource data(load_dataset(o.data));
  const auto ev = with_precision(net, o.precision, [&](const auto& n) { return evaluate_dataset(n, data); });
  const std::string text = render_report(ev.report);
  out << text;
  if (!o.report.empty()) write_text(o.report, text);
  if (!o.json.empty()) write_text(o.json, report_json(ev.matrix, ev.report).dump(2) + "\n");
  return kExitOk;
}

inline int run_detect(const DetectOptions& o, std::ostream& out, std::ostream& err) {
  const Network<double> net = load_model(o.model);
  const auto cascade = load_cascade(o.cascade);
  std::vector<FrameInput> frames;
  if (fs::is_directory(o.input)) {
    frames = frames_from_directory(o.input);
  } else if (fs::exists(o.input)) {
    const fs::path p = o.input;
    frames.push_back({p.filename().string(), [p] { return decode_image(p); }});
  } else {
    throw IoError("input '" + o.input + "' does not exist");
  }
  fs::create_directories(o.out);
  PipelineConfig pc{detect_params(o.scale_factor, o.min_neighbors, o.min_size), o.margin};
  if (!(o.margin >= 0)) throw ValidationError("--margin must be >= 0");

  std::ofstream det(fs::path(o.out) / "detections.txt");
  if (!det) throw IoError("cannot write detections under '" + o.out + "'");
  std::size_t failed = 0, faces = 0;
  const auto seq = with_precision(net, o.precision, [&](const auto& n) {
    return process_sequence(frames, cascade, n, pc, o.threads, [&](const FrameRecord& rec) {
      if (!rec.result) {
        ++failed;
        err << "error: frame " << rec.id << ": " << rec.error << '\n';
        return;
      }
      faces += rec.result->detections.size();
      write_detections(det, rec.id, rec.result->detections);
      write_image(fs::path(o.out) / (fs::path(rec.id).stem().string() + ".png"), rec.result->annotated);
    });
  });
  out << "frames " << frames.size() << "  faces " << faces << "  errors " << failed << '\n';
  if (seq.frame_latency.count)
    out << "frame latency ms  median " << seq.frame_latency.median_ms << "  p95 " << seq.frame_latency.p95_ms << '\n';
  if (seq.face_latency.count)
    out << "face latency ms   median " << seq.face_latency.median_ms << "  p95 " << seq.face_latency.p95_ms << '\n';
  return !frames.empty() && failed == frames.size() ? kExitRuntime : kExitOk;
}

inline int run_bench(const BenchOptions& o, std::ostream& out) {
  const Network<double> net = load_model(o.model);
  const KernelPath path = o.reference ? KernelPath::reference : KernelPath::optimized;
  const auto s = with_precision(net, o.precision, [&](const auto& n) {
    return benchmark_classifier(n, o.iters, o.warmup, o.threads, path);
  });
  out << "per-face classification (" << o.precision << ", " << (o.reference ? "reference" : "optimized")
      << ", " << o.threads << " thread" << (o.threads == 1 ? "" : "s") << ", " << s.count << " samples)\n";
  out << "median_ms " << s.median_ms << "\np95_ms " << s.p95_ms << '\n';
  return kExitOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Face mask detection: train, evaluate, detect and benchmark", "mfd"};
  app.require_subcommand(1);

  TrainOptions t;
  auto* train_cmd = app.add_subcommand("train", "Train the classifier and write a checkpoint");
  train_cmd->add_option("--data", t.data, "Dataset root with correct_mask/ incorrect_mask/ without_mask/")
      ->required();
  train_cmd->add_option("--out", t.out, "Checkpoint path (.mfd); history goes to <out>.history.csv")->required();
  train_cmd->add_option("--test", t.test, "Optional held-out dataset root, evaluated after training");
  train_cmd->add_option("--epochs", t.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--batch", t.batch, "Minibatch size")->capture_default_str();
  train_cmd->add_option("--lr", t.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--seed", t.seed, "Seed for initialization, shuffling and augmentation")
      ->capture_default_str();
  train_cmd->add_option("--shear", t.shear, "Max shear angle, radians")->capture_default_str();
  train_cmd->add_option("--zoom-lo", t.zoom_lo, "Lower zoom factor")->capture_default_str();
  train_cmd->add_option("--zoom-hi", t.zoom_hi, "Upper zoom factor")->capture_default_str();
  train_cmd->add_option("--flip-p", t.flip_p, "Horizontal flip probability")->capture_default_str();

  EvalOptions e;
  DetectOptions ed;  // detector settings for --conditions
  auto* eval_cmd = app.add_subcommand("eval", "Classification report on a labeled dataset");
  auto* data_opt = eval_cmd->add_option("--data", e.data, "Dataset root (category directories)");
  auto* cond_opt = eval_cmd->add_option(
      "--conditions", e.conditions,
      "Annotated tree <lighting>/<single|multiple>/ with annotations.csv; runs detection + classification");
  data_opt->excludes(cond_opt);
  eval_cmd->add_option("--model", e.model, "Checkpoint (.mfd)")->required();
  eval_cmd->add_option("--cascade", e.cascade, "Haar cascade XML (needed with --conditions)");
  eval_cmd->add_option("--report", e.report, "Also write the text report here");
  eval_cmd->add_option("--json", e.json, "Write the machine-readable report here");
  eval_cmd->add_option("--precision", e.precision, "Inference precision")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  eval_cmd->add_option("--scale-factor", ed.scale_factor, "Detector scale step (--conditions)")
      ->capture_default_str();
  eval_cmd->add_option("--min-neighbors", ed.min_neighbors, "Detector grouping threshold (--conditions)")
      ->capture_default_str();
  eval_cmd->add_option("--min-size", ed.min_size, "Smallest window side in pixels (--conditions)")
      ->capture_default_str();
  eval_cmd->add_option("--margin", ed.margin, "Crop margin as a fraction of the box side (--conditions)")
      ->capture_default_str();

  DetectOptions d;
  auto* detect_cmd = app.add_subcommand("detect", "Detect and classify faces in an image or frame directory");
  detect_cmd->add_option("--input", d.input, "Image file or directory of frames")->required();
  detect_cmd->add_option("--model", d.model, "Checkpoint (.mfd)")->required();
  detect_cmd->add_option("--cascade", d.cascade, "Haar cascade XML")->required();
  detect_cmd->add_option("--out", d.out, "Output directory (annotated PNGs + detections.txt)")
      ->capture_default_str();
  detect_cmd->add_option("--scale-factor", d.scale_factor, "Detector scale step")->capture_default_str();
  detect_cmd->add_option("--min-neighbors", d.min_neighbors, "Detector grouping threshold")->capture_default_str();
  detect_cmd->add_option("--min-size", d.min_size, "Smallest window side in pixels")->capture_default_str();
  detect_cmd->add_option("--margin", d.margin, "Crop margin as a fraction of the box side")->capture_default_str();
  detect_cmd->add_option("--threads", d.threads, "Worker threads")->capture_default_str();
  detect_cmd->add_option("--precision", d.precision, "Inference precision")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();

  BenchOptions b;
  auto* bench_cmd = app.add_subcommand("bench", "Per-face classification latency (median / p95)");
  bench_cmd->add_option("--model", b.model, "Checkpoint (.mfd)")->required();
  bench_cmd->add_option("--iters", b.iters, "Timed iterations")->capture_default_str();
  bench_cmd->add_option("--warmup", b.warmup, "Untimed warmup iterations")->capture_default_str();
  bench_cmd->add_option("--threads", b.threads, "Concurrent benchmark threads")->capture_default_str();
  bench_cmd->add_option("--precision", b.precision, "Inference precision")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  bench_cmd->add_flag("--reference", b.reference, "Use the unoptimized reference kernels");

  try {
    app.parse(argc, argv);
    if (eval_cmd->parsed()) {
      if (e.data.empty() == e.conditions.empty())
        throw CLI::ValidationError("eval", "exactly one of --data or --conditions is required");
      if (!e.conditions.empty() && e.cascade.empty())
        throw CLI::ValidationError("eval", "--conditions needs --cascade");
    }
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return run_train(t, out, err);
    if (eval_cmd->parsed()) return run_eval(e, ed, out);
    if (detect_cmd->parsed()) return run_detect(d, out, err);
    return run_bench(b, out);
  } catch (const mfd::ValidationError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace mfd::cli
