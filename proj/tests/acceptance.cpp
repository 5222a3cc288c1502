// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "support/gradcheck.hpp"
#include "support/haar_oracle.hpp"
#include "support/paths.hpp"
#include "support/toy_data.hpp"

namespace {

using namespace mfd;
using testing::data_path;
using testing::random_tensor;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void criterion(int n, const char* name, const std::function<Outcome()>& fn) {
  const auto t0 = Clock::now();
  Outcome o{false, ""};
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  failures += !o.pass;
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << n << "] " << name << ": " << o.detail
            << fmt(" (%.1f s)", seconds_since(t0)) << std::endl;
}

// ---- 1 ----

Outcome architecture() {
  const auto t0 = Clock::now();
  const auto net = build_mask_net(1);
  const std::vector<std::size_t> counts{896, 0, 9248, 0, 9248, 0, 0, 924900, 303};
  const std::vector<Shape> chain{{1, 148, 148, 32}, {1, 74, 74, 32}, {1, 72, 72, 32}, {1, 36, 36, 32}, {1, 34, 34, 32},
                                 {1, 17, 17, 32},   {1, 9248},       {1, 100},        {1, 3}};
  Tensor<double> x({1, 150, 150, 3}, 0.5);
  const bool forward_ok = predict(net, x).shape() == Shape{1, 3};
  const double secs = seconds_since(t0);
  const bool ok = net.param_count() == 944595 && net.layer_param_counts() == counts &&
                  net.output_shapes(1) == chain && forward_ok && secs < 1.0;
  return {ok, fmt("total params %zu, per-layer and shape chain %s, %.3f s", net.param_count(),
                  net.layer_param_counts() == counts && net.output_shapes(1) == chain ? "match" : "differ", secs)};
}

// ---- 2 ----

Outcome gradients() {
  using testing::dot;
  using testing::max_grad_error;
  const auto t0 = Clock::now();
  double worst = 0;
  auto track = [&](double e) { worst = std::max(worst, e); };
  Rng rng(2024);
  {
    Conv2DParams<double> p{random_tensor({3, 3, 2, 3}, rng), random_tensor({3}, rng)};
    auto x = random_tensor({2, 6, 5, 2}, rng);
    const auto r = random_tensor({2, 4, 3, 3}, rng);
    auto loss = [&] { return dot(r, conv2d_forward(x, p)); };
    const auto g = conv2d_backward(x, p, r, true);
    track(max_grad_error(x, *g.input, loss));
    track(max_grad_error(p.kernel, g.kernel, loss));
    track(max_grad_error(p.bias, g.bias, loss));
  }
  {
    auto x = random_tensor({2, 4, 5, 3}, rng);
    const auto r = random_tensor({2, 2, 2, 3}, rng);
    auto loss = [&] { return dot(r, maxpool2d_forward(x).output); };
    track(max_grad_error(x, maxpool2d_backward(x.shape(), maxpool2d_forward(x).argmax, r), loss));
  }
  {
    auto x = random_tensor({3, 7}, rng);
    const auto r = random_tensor({3, 7}, rng);
    auto loss = [&] { return dot(r, relu(x)); };
    track(max_grad_error(x, relu_backward(relu(x), r), loss));
  }
  {
    DenseParams<double> p{random_tensor({5, 4}, rng), random_tensor({4}, rng)};
    auto x = random_tensor({3, 5}, rng);
    const auto r = random_tensor({3, 4}, rng);
    auto loss = [&] { return dot(r, dense_forward(x, p)); };
    const auto g = dense_backward(x, p, r);
    track(max_grad_error(x, g.input, loss));
    track(max_grad_error(p.weights, g.weights, loss));
    track(max_grad_error(p.bias, g.bias, loss));
  }
  {
    auto z = random_tensor({3, 4}, rng, -2, 2);
    const auto r = random_tensor({3, 4}, rng);
    auto loss = [&] { return dot(r, softmax(z)); };
    track(max_grad_error(z, softmax_backward(softmax(z), r), loss));
  }
  {
    auto net = testing::tiny_network(9);
    const auto x = random_tensor({4, 8, 8, 3}, rng, 0, 1);
    const auto y = one_hot<double>({MaskClass::CorrectMask, MaskClass::WithoutMask, MaskClass::IncorrectMask,
                                    MaskClass::WithoutMask});
    auto loss = [&] { return cross_entropy_loss(predict(net, x), y).loss; };
    const auto pass = network_forward(net, x, true);
    const auto g = network_backward(net, pass, cross_entropy_loss(pass.output, y).grad_logits,
                                    GradientTarget::logits);
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) track(max_grad_error(*params[i], g[i], loss));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60,
          fmt("conv/pool/relu/dense/softmax/network max relative error %.2e (< 1e-4), %.1f s", worst, secs)};
}

// ---- 3 ----

double rel_diff(const double* a, const double* b, std::size_t n) {
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < n; ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return worst / std::max(scale, 1e-300);
}

Outcome kernels() {
  using gemm::Trans;
  Rng rng(3);
  double worst = 0;
  for (auto [m, n, k] : {std::tuple{64, 64, 64}, std::tuple{17, 33, 9}, std::tuple{1, 64, 40}, std::tuple{50, 3, 64}})
    for (Trans ta : {Trans::no, Trans::yes})
      for (Trans tb : {Trans::no, Trans::yes}) {
        std::vector<double> a(m * k), b(k * n), c(m * n), ref(m * n, 0.0);
        for (auto& v : a) v = rng.uniform(-1, 1);
        for (auto& v : b) v = rng.uniform(-1, 1);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p)
              ref[i * n + j] += (ta == Trans::no ? a[i * k + p] : a[p * m + i]) *
                                (tb == Trans::no ? b[p * n + j] : b[j * k + p]);
        gemm::gemm(ta, tb, m, n, k, a.data(), ta == Trans::no ? k : m, b.data(), tb == Trans::no ? n : k, c.data(),
                   n, false);
        worst = std::max(worst, rel_diff(c.data(), ref.data(), c.size()));
      }
  // Conv on a 16x16x8 input with 8 filters, against direct loops.
  Conv2DParams<double> p{random_tensor({3, 3, 8, 8}, rng), random_tensor({8}, rng)};
  const auto x = random_tensor({2, 16, 16, 8}, rng);
  Tensor<double> ref({2, 14, 14, 8});
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < 14; ++i)
      for (std::size_t j = 0; j < 14; ++j)
        for (std::size_t o = 0; o < 8; ++o) {
          double acc = p.bias[o];
          for (std::size_t u = 0; u < 3; ++u)
            for (std::size_t v = 0; v < 3; ++v)
              for (std::size_t c = 0; c < 8; ++c)
                acc += x[((s * 16 + i + u) * 16 + j + v) * 8 + c] * p.kernel[((u * 3 + v) * 8 + c) * 8 + o];
          ref[((s * 14 + i) * 14 + j) * 8 + o] = acc;
        }
  const auto y = conv2d_forward(x, p, KernelPath::optimized);
  worst = std::max(worst, rel_diff(y.data(), ref.data(), y.size()));
  return {worst < 1e-10, fmt("gemm up to 64x64x64 and conv 16x16x8 vs naive: max relative error %.2e (< 1e-10)", worst)};
}

// ---- 4 ----

Outcome toy_training() {
  const auto t0 = Clock::now();
  const auto train_set = testing::toy_dataset(100, 4001);
  const auto test_set = testing::toy_dataset(20, 4002);
  auto net = build_mask_net(42);
  TrainConfig cfg;  // 10 epochs, batch 16, Adam lr 0.001
  const auto hist = train(net, train_set, cfg, Augmenter{AugmentConfig{}, true}, test_set);
  const double secs = seconds_since(t0);
  const double acc = *hist.test_accuracy;
  return {acc >= 0.95 && secs < 300,
          fmt("300 train / 60 test, 10 epochs, batch 16: test accuracy %.4f (>= 0.95), final train loss %.4f, "
              "%.0f s (< 300 s)",
              acc, hist.epochs.back().loss, secs)};
}

// ---- 5 ----

Outcome latency() {
  const auto net = build_mask_net(42);
  const auto f32 = net.cast<float>();
  const auto opt = benchmark_classifier(f32, 200, 20);

  const auto t0 = Clock::now();
  const auto ref = benchmark_classifier(net, 5, 1, 1, KernelPath::reference);
  (void)t0;

  Image crop(150, 150, 3);
  Rng rng(8);
  for (auto& v : crop.pixels.values()) v = std::floor(rng.uniform() * 256);
  const auto x = stack_images<double>({rescale_unit(crop)});
  const auto p_opt = predict(f32, x.cast<float>());
  const auto p_ref = predict(net, x, KernelPath::reference);
  double diff = 0;
  for (std::size_t i = 0; i < p_ref.size(); ++i) diff = std::max(diff, std::abs(double(p_opt[i]) - p_ref[i]));
  return {opt.median_ms < 10 && ref.median_ms < 200 && diff < 1e-3,
          fmt("optimized f32 median %.2f ms, p95 %.2f ms (< 10 ms); reference median %.1f ms (< 200 ms); "
              "max output difference %.2e (< 1e-3)",
              opt.median_ms, opt.p95_ms, ref.median_ms, diff)};
}

// ---- 6 ----

Outcome cascade() {
  const auto bytes = read_file_bytes(data_path("fixture_cascade.xml"));
  const auto c = parse_cascade_xml(std::string(bytes.begin(), bytes.end()));
  const Image img = decode_image(data_path("fixture_gray.pgm"));
  GrayImage g(img.width(), img.height());
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x) g.at(x, y) = static_cast<std::uint8_t>(img.at(y, x, 0));
  const auto ii = integral_images(g);
  std::size_t windows = 0, agree = 0, accepted = 0;
  for (double s : {1.0, 1.25, 1.5, 2.0}) {
    const auto [w, h] = window_size(c, s);
    for (int y = 0; y + h <= int(g.height); ++y)
      for (int x = 0; x + w <= int(g.width); ++x) {
        const bool fast = evaluate_window(c, ii, x, y, s);
        ++windows;
        agree += fast == testing::brute_force_window(c, g, x, y, s).accept;
        accepted += fast;
      }
  }
  Rng rng(6);
  const auto big = [&] {
    GrayImage r(64, 48);
    for (auto& p : r.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    return r;
  }();
  const auto bii = integral_images(big);
  std::size_t rect_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const int x = int(rng.below(64)), y = int(rng.below(48));
    const int w = int(rng.below(65 - x)), h = int(rng.below(49 - y));
    rect_ok += bii.rect_sum(x, y, w, h) == testing::naive_sum(big, x, y, w, h);
  }
  return {agree == windows && rect_ok == 1000,
          fmt("evaluate_window agrees with brute force on %zu/%zu windows (%zu accepted); rectangle sums exact "
              "on %zu/1000",
              agree, windows, accepted, rect_ok)};
}

// ---- 7 ----

Outcome detection() {
  const auto c = cli::load_cascade(data_path("haarcascade_frontalface_default.xml"));
  const auto faces = detect_multiscale(c, to_grayscale(decode_image(data_path("astronaut.png"))));
  const auto truth = read_annotations(data_path("astronaut_faces.csv")).at(0).box;
  double best = 0;
  for (const auto& f : faces) best = std::max(best, iou(f, truth));
  const auto blank = detect_multiscale(c, GrayImage(320, 240, 128));
  return {!faces.empty() && best >= 0.5 && blank.empty(),
          fmt("astronaut: %zu box(es), best IoU %.3f (>= 0.5); blank frame: %zu boxes", faces.size(), best,
              blank.size())};
}

// ---- 8 ----

Outcome metrics() {
  using enum MaskClass;
  const auto cm = confusion_matrix({CorrectMask, CorrectMask, IncorrectMask, WithoutMask, WithoutMask, WithoutMask},
                                   {CorrectMask, IncorrectMask, IncorrectMask, WithoutMask, WithoutMask, CorrectMask});
  const auto r = classification_report(cm);
  const double p[3] = {0.5, 0.5, 1.0}, rc[3] = {0.5, 1.0, 2.0 / 3.0};
  double err = std::abs(r.accuracy - 4.0 / 6.0);
  for (int k = 0; k < 3; ++k) {
    err = std::max(err, std::abs(r.classes[k].precision - p[k]));
    err = std::max(err, std::abs(r.classes[k].recall - rc[k]));
    err = std::max(err, std::abs(r.classes[k].f1 - 2 * p[k] * rc[k] / (p[k] + rc[k])));
  }
  err = std::max(err, std::abs(r.weighted.f1 - (2 * 0.5 + 1 * (2.0 / 3.0) + 3 * 0.8) / 6));
  const auto diag =
      classification_report(ConfusionMatrix(ConfusionMatrix::default_labels(), {{100, 0, 0}, {0, 96, 0}, {0, 0, 97}}));
  const std::string golden =
      "                precision    recall  f1-score   support\n"
      "\n"
      "  correct_mask       0.50      0.50      0.50         2\n"
      "incorrect_mask       0.50      1.00      0.67         1\n"
      "  without_mask       1.00      0.67      0.80         3\n"
      "\n"
      "      accuracy                           0.67         6\n"
      "     macro avg       0.67      0.72      0.66         6\n"
      "  weighted avg       0.75      0.67      0.68         6\n";
  const bool layout = render_report(r) == golden;
  return {err < 1e-9 && diag.accuracy == 1.0 && diag.total_support == 293 && layout,
          fmt("hand matrix max error %.1e (< 1e-9); diag(100,96,97) accuracy %.2f support %zu; layout %s", err,
              diag.accuracy, diag.total_support, layout ? "matches" : "differs")};
}

// ---- 9 and 10 share a scratch tree and the CLI binary ----

int shell(const std::string& cmd) {
  const int s = std::system(cmd.c_str());
  return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

const fs::path& scratch() {
  static const fs::path p = testing::scratch_dir("acceptance");
  return p;
}

Outcome determinism() {
  const auto root = scratch();
  testing::write_toy_dataset(root / "data", 4, 99);
  const std::string train = std::string(MFD_CLI_PATH) + " train --data " + quote(root / "data") +
                            " --epochs 2 --batch 4 --seed 5 --out ";
  const int a = shell(train + quote(root / "a.mfd") + " >/dev/null");
  const int b = shell(train + quote(root / "b.mfd") + " >/dev/null");
  if (a != 0 || b != 0) return {false, fmt("train exit codes %d and %d", a, b)};
  const bool same = read_file_bytes(root / "a.mfd") == read_file_bytes(root / "b.mfd");

  // Save/load round trip: parameters bitwise, evaluation outputs exactly.
  const auto net = load_model(root / "a.mfd");
  save_model(net, root / "c.mfd", load_checkpoint(root / "a.mfd").metadata);
  const auto back = load_model(root / "c.mfd");
  bool params_equal = true;
  const auto pa = net.parameters(), pb = back.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) params_equal = params_equal && *pa[i] == *pb[i];
  const DirectorySource data(load_dataset(root / "data"));
  const auto ea = evaluate_dataset(net, data), eb = evaluate_dataset(back, data);
  Rng rng(1);
  const auto x = random_tensor({2, 150, 150, 3}, rng, 0, 1);
  const bool outputs_equal = predict(net, x) == predict(back, x) && ea.matrix == eb.matrix &&
                             render_report(ea.report) == render_report(eb.report);
  const bool bytes_equal = read_file_bytes(root / "a.mfd") == read_file_bytes(root / "c.mfd");
  return {same && params_equal && outputs_equal && bytes_equal,
          fmt("two train runs %s; round trip parameters %s, outputs %s, bytes %s", same ? "bitwise identical" : "DIFFER",
              params_equal ? "identical" : "DIFFER", outputs_equal ? "identical" : "DIFFER",
              bytes_equal ? "identical" : "DIFFER")};
}

// Builds <root>/<lighting>/{single,multiple}/ from the bundled face photos,
// darkened per lighting level, and runs `eval --conditions` through the CLI.
Outcome condition_report() {
  const auto root = scratch() / "conditions";
  const auto single = decode_image(data_path("astronaut.png"));
  const auto multiple = decode_image(data_path("two_faces.png"));
  for (auto [name, gain] : {std::pair{"bright", 1.0}, std::pair{"dim", 0.6}}) {
    for (auto [group, img, csv] : {std::tuple{"single", &single, "astronaut_faces.csv"},
                                   std::tuple{"multiple", &multiple, "two_faces.csv"}}) {
      const auto dir = root / name / group;
      fs::create_directories(dir);
      Image out = *img;
      for (auto& v : out.pixels.values()) v = std::round(v * gain);
      const auto ann = read_annotations(data_path(csv));
      write_image(dir / ann.at(0).frame_id, out);
      fs::copy_file(data_path(csv), dir / "annotations.csv", fs::copy_options::overwrite_existing);
    }
  }
  const auto model = scratch() / "a.mfd";
  if (!fs::exists(model)) return {false, "needs the checkpoint from criterion 9"};
  const int code = shell(std::string(MFD_CLI_PATH) + " eval --conditions " + quote(root) + " --model " +
                         quote(model) + " --cascade " + quote(data_path("haarcascade_frontalface_default.xml")) +
                         " --report " + quote(scratch() / "table.txt") + " --json " + quote(scratch() / "table.json") +
                         " >/dev/null");
  if (code != 0) return {false, fmt("eval --conditions exited %d", code)};
  const auto bytes = read_file_bytes(scratch() / "table.txt");
  const std::string table(bytes.begin(), bytes.end());
  const auto j = nlohmann::json::parse(read_file_bytes(scratch() / "table.json"));
  const bool shaped = table.find("Single person") != std::string::npos &&
                      table.find("Multiple/image") != std::string::npos && table.find("bright") != std::string::npos &&
                      table.find("dim") != std::string::npos && j["dim"]["multiple"]["faces"] == 2 &&
                      j["bright"]["single"]["faces"] == 1;
  std::cout << table;
  return {shaped, "per-condition report produced from an annotated image tree (rows bright/dim; single, multiple "
                  "per face and per image)"};
}

}  // namespace

int main() {
  mfd::cli::keep_large_allocations();
  criterion(1, "architecture golden", architecture);
  criterion(2, "gradient fidelity", gradients);
  criterion(3, "numerical kernel oracle", kernels);
  criterion(4, "toy training", toy_training);
  criterion(5, "latency", latency);
  criterion(6, "cascade correctness", cascade);
  criterion(7, "detection smoke test", detection);
  criterion(8, "metrics exactness", metrics);
  criterion(9, "determinism and persistence", determinism);
  criterion(10, "per-condition accuracy report", condition_report);
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << "(" << 10 - failures << "/10)" << std::endl;
  return failures ? 1 : 0;
}
