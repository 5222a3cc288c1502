#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "mfd/layers.hpp"
#include "mfd/random.hpp"
#include "mfd/tensor.hpp"

namespace mfd {

enum class Activation { linear, relu, softmax };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

template <class T>
struct ConvLayer {
  Conv2DParams<T> params;
  Activation activation = Activation::relu;
};

struct PoolLayer {};
struct FlattenLayer {};

template <class T>
struct DenseLayer {
  DenseParams<T> params;
  Activation activation = Activation::relu;
};

template <class T>
using Layer = std::variant<ConvLayer<T>, PoolLayer, FlattenLayer, DenseLayer<T>>;

// Architecture knobs. The defaults are the 150x150x3 mask classifier:
// three conv(3x3, 32)+relu / maxpool(2x2) pairs, flatten, dense(100, relu),
// dense(3, softmax).
struct NetworkConfig {
  std::size_t height = 150;
  std::size_t width = 150;
  std::size_t channels = 3;
  std::vector<std::size_t> conv_filters{32, 32, 32};
  std::size_t kernel = 3;
  std::size_t hidden = 100;
  std::size_t classes = 3;
};

template <class T>
class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::vector<Layer<T>> layers)
      : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {}

  // Per-sample input extents (H, W, C).
  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<Layer<T>>& layers() const noexcept { return layers_; }
  std::vector<Layer<T>>& layers() noexcept { return layers_; }

  std::size_t classes() const {
    return std::get<DenseLayer<T>>(layers_.back()).params.out_features();
  }

  std::vector<std::size_t> layer_param_counts() const {
    std::vector<std::size_t> counts;
    for (const auto& l : layers_)
      counts.push_back(std::visit(
          [](const auto& layer) -> std::size_t {
            if constexpr (requires { layer.params; })
              return layer.params.param_count();
            else
              return 0;
          },
          l));
    return counts;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (auto c : layer_param_counts()) n += c;
    return n;
  }

  // Parameter tensors in canonical order: each layer's kernel/weights then bias.
  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    for (auto& l : layers_) {
      if (auto* c = std::get_if<ConvLayer<T>>(&l)) {
        out.push_back(&c->params.kernel);
        out.push_back(&c->params.bias);
      } else if (auto* d = std::get_if<DenseLayer<T>>(&l)) {
        out.push_back(&d->params.weights);
        out.push_back(&d->params.bias);
      }
    }
    return out;
  }

  std::vector<const Tensor<T>*> parameters() const {
    std::vector<const Tensor<T>*> out;
    for (auto* p : const_cast<Network*>(this)->parameters()) out.push_back(p);
    return out;
  }

  // Output shape of every layer for a batch of `batch` samples.
  std::vector<Shape> output_shapes(std::size_t batch = 1) const {
    std::vector<Shape> shapes;
    Shape s{batch, input_shape_[0], input_shape_[1], input_shape_[2]};
    for (const auto& l : layers_) {
      if (auto* c = std::get_if<ConvLayer<T>>(&l)) {
        s = {batch, s[1] - c->params.kh() + 1, s[2] - c->params.kw() + 1,
             c->params.out_channels()};
      } else if (std::holds_alternative<PoolLayer>(l)) {
        s = {batch, s[1] / 2, s[2] / 2, s[3]};
      } else if (std::holds_alternative<FlattenLayer>(l)) {
        s = {batch, shape_size(s) / batch};
      } else {
        s = {batch, std::get<DenseLayer<T>>(l).params.out_features()};
      }
      shapes.push_back(s);
    }
    return shapes;
  }

  std::vector<std::string> layer_names() const {
    std::vector<std::string> names;
    std::size_t nc = 0, np = 0, nf = 0, nd = 0;
    for (const auto& l : layers_) {
      if (std::holds_alternative<ConvLayer<T>>(l))
        names.push_back("conv2d_" + std::to_string(++nc));
      else if (std::holds_alternative<PoolLayer>(l))
        names.push_back("max_pooling2d_" + std::to_string(++np));
      else if (std::holds_alternative<FlattenLayer>(l))
        names.push_back("flatten_" + std::to_string(++nf));
      else
        names.push_back("dense_" + std::to_string(++nd));
    }
    return names;
  }

  template <class U>
  Network<U> cast() const {
    std::vector<Layer<U>> out;
    for (const auto& l : layers_) {
      if (auto* c = std::get_if<ConvLayer<T>>(&l))
        out.push_back(ConvLayer<U>{
            {c->params.kernel.template cast<U>(), c->params.bias.template cast<U>()},
            c->activation});
      else if (auto* d = std::get_if<DenseLayer<T>>(&l))
        out.push_back(DenseLayer<U>{
            {d->params.weights.template cast<U>(), d->params.bias.template cast<U>()},
            d->activation});
      else if (std::holds_alternative<PoolLayer>(l))
        out.push_back(PoolLayer{});
      else
        out.push_back(FlattenLayer{});
    }
    return Network<U>(input_shape_, std::move(out));
  }

  // Keras-style summary table.
  std::string summary() const {
    std::ostringstream os;
    const auto shapes = output_shapes(1);
    const auto names = layer_names();
    const auto counts = layer_param_counts();
    os << std::left << std::setw(32) << "Layer (type)" << std::setw(24) << "Output Shape"
       << "Param #\n";
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      static const char* kinds[] = {"Conv2D", "MaxPooling2D", "Flatten", "Dense"};
      std::string shape = "(None";
      for (std::size_t d = 1; d < shapes[i].size(); ++d) shape += ", " + std::to_string(shapes[i][d]);
      shape += ")";
      os << std::setw(32) << (names[i] + " (" + kinds[layers_[i].index()] + ")") << std::setw(24)
         << shape << counts[i] << "\n";
    }
    os << "Total params: " << with_commas(param_count()) << "\n";
    return os.str();
  }

 private:
  static std::string with_commas(std::size_t n) {
    std::string s = std::to_string(n);
    for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
    return s;
  }

  Shape input_shape_;
  std::vector<Layer<T>> layers_;
};

namespace detail {

template <class T>
Tensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace detail

// Glorot-uniform weights, zero biases, drawn from one seeded stream in layer order.
inline Network<double> build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Layer<double>> layers;
  std::size_t h = cfg.height, w = cfg.width, c = cfg.channels;
  const std::size_t k = cfg.kernel;
  for (std::size_t filters : cfg.conv_filters) {
    if (h < k || w < k) throw ValidationError("build_network: input too small for conv stack");
    layers.push_back(ConvLayer<double>{
        {detail::glorot_uniform<double>({k, k, c, filters}, k * k * c, k * k * filters, rng),
         Tensor<double>({filters})},
        Activation::relu});
    h = h - k + 1;
    w = w - k + 1;
    c = filters;
    if (h < 2 || w < 2) throw ValidationError("build_network: input too small for pooling");
    layers.push_back(PoolLayer{});
    h /= 2;
    w /= 2;
  }
  layers.push_back(FlattenLayer{});
  const std::size_t flat = h * w * c;
  layers.push_back(DenseLayer<double>{
      {detail::glorot_uniform<double>({flat, cfg.hidden}, flat, cfg.hidden, rng),
       Tensor<double>({cfg.hidden})},
      Activation::relu});
  layers.push_back(DenseLayer<double>{
      {detail::glorot_uniform<double>({cfg.hidden, cfg.classes}, cfg.hidden, cfg.classes, rng),
       Tensor<double>({cfg.classes})},
      Activation::softmax});
  return Network<double>({cfg.height, cfg.width, cfg.channels}, std::move(layers));
}

inline Network<double> build_mask_net(std::uint64_t seed) { return build_network({}, seed); }

// Activations saved by a training-mode forward pass: activations[0] is the
// input batch, activations[i + 1] the output of layer i. Pool layers also
// keep their argmax maps.
template <class T>
struct ForwardCache {
  std::vector<Tensor<T>> activations;
  std::vector<std::vector<std::uint32_t>> argmax;
};

template <class T>
struct ForwardPass {
  Tensor<T> output;
  std::optional<ForwardCache<T>> cache;
};

namespace detail {

template <class T>
void apply_activation(Tensor<T>& t, Activation a) {
  if (a == Activation::relu)
    relu_inplace(t);
  else if (a == Activation::softmax)
    t = softmax(t);
}

}  // namespace detail

template <class T>
void check_input(const Network<T>& net, const Tensor<T>& batch) {
  const Shape& in = net.input_shape();
  if (batch.rank() != 4 || batch.dim(1) != in[0] || batch.dim(2) != in[1] || batch.dim(3) != in[2])
    throw ShapeError("network: expected input (b," + std::to_string(in[0]) + "," +
                     std::to_string(in[1]) + "," + std::to_string(in[2]) + "), got " +
                     to_string(batch.shape()));
}

// Runs the layers in order. Output rows are class probability vectors.
template <class T>
ForwardPass<T> network_forward(const Network<T>& net, const Tensor<T>& batch, bool training,
                               KernelPath path = KernelPath::optimized) {
  check_input(net, batch);
  ForwardPass<T> pass;
  if (training) {
    pass.cache.emplace();
    pass.cache->activations.reserve(net.layers().size() + 1);
    pass.cache->activations.push_back(batch);
    pass.cache->argmax.resize(net.layers().size());
  }
  // In training mode each activation is moved into the cache and read back
  // from there; the reserve above keeps those references stable.
  const Tensor<T>* cur = &batch;
  Tensor<T> x;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    Tensor<T> y;
    if (auto* c = std::get_if<ConvLayer<T>>(&l)) {
      y = conv2d_forward(*cur, c->params, path);
      detail::apply_activation(y, c->activation);
    } else if (std::holds_alternative<PoolLayer>(l)) {
      auto r = maxpool2d_forward(*cur);
      y = std::move(r.output);
      if (training) pass.cache->argmax[i] = std::move(r.argmax);
    } else if (std::holds_alternative<FlattenLayer>(l)) {
      const std::size_t b = cur->dim(0);
      y = training || cur == &batch ? reshape(*cur, {b, cur->size() / b})
                                    : reshape(std::move(x), {b, x.size() / b});
    } else {
      const auto& d = std::get<DenseLayer<T>>(l);
      y = dense_forward(*cur, d.params, path);
      detail::apply_activation(y, d.activation);
    }
    if (training) {
      pass.cache->activations.push_back(std::move(y));
      cur = &pass.cache->activations.back();
    } else {
      x = std::move(y);
      cur = &x;
    }
  }
  pass.output = training ? *cur : std::move(x);
  return pass;
}

// Convenience inference call.
template <class T>
Tensor<T> predict(const Network<T>& net, const Tensor<T>& batch,
                  KernelPath path = KernelPath::optimized) {
  return network_forward(net, batch, false, path).output;
}

// What the upstream gradient handed to network_backward is taken with
// respect to: the softmax probabilities, or the logits just before the final
// softmax (the fused cross-entropy form).
enum class GradientTarget { probabilities, logits };

// One gradient tensor per parameter, in Network::parameters() order.
template <class T>
using Gradients = std::vector<Tensor<T>>;

template <class T>
Gradients<T> network_backward(const Network<T>& net, const ForwardPass<T>& pass,
                              const Tensor<T>& grad_output,
                              GradientTarget target = GradientTarget::probabilities) {
  if (!pass.cache)
    throw StateError("network_backward: forward pass was not run in training mode");
  const auto& acts = pass.cache->activations;
  const auto& layers = net.layers();
  if (acts.size() != layers.size() + 1)
    throw StateError("network_backward: cache does not belong to this network");
  if (grad_output.shape() != acts.back().shape())
    throw ShapeError("network_backward: gradient shape " + to_string(grad_output.shape()) +
                     " does not match output " + to_string(acts.back().shape()));

  std::size_t n_params = 0;
  std::size_t first_param_layer = layers.size();
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (std::holds_alternative<ConvLayer<T>>(layers[i]) ||
        std::holds_alternative<DenseLayer<T>>(layers[i])) {
      n_params += 2;
      first_param_layer = std::min(first_param_layer, i);
    }
  Gradients<T> grads(n_params);
  std::size_t slot = n_params;

  auto through_activation = [&](Tensor<T> g, Activation a, std::size_t i) {
    if (a == Activation::relu) return relu_backward(acts[i + 1], std::move(g));
    if (a == Activation::softmax) {
      if (target == GradientTarget::logits && i + 1 == layers.size()) return g;
      return softmax_backward(acts[i + 1], g);
    }
    return g;
  };

  Tensor<T> g = grad_output;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& l = layers[i];
    if (auto* c = std::get_if<ConvLayer<T>>(&l)) {
      g = through_activation(std::move(g), c->activation, i);
      auto cg = conv2d_backward(acts[i], c->params, g, i > first_param_layer);
      grads[--slot] = std::move(cg.bias);
      grads[--slot] = std::move(cg.kernel);
      if (cg.input) g = std::move(*cg.input);
    } else if (std::holds_alternative<PoolLayer>(l)) {
      g = maxpool2d_backward(acts[i].shape(), pass.cache->argmax[i], g);
    } else if (std::holds_alternative<FlattenLayer>(l)) {
      g = reshape(std::move(g), acts[i].shape());
    } else {
      const auto& d = std::get<DenseLayer<T>>(l);
      g = through_activation(std::move(g), d.activation, i);
      auto dg = dense_backward(acts[i], d.params, g);
      grads[--slot] = std::move(dg.bias);
      grads[--slot] = std::move(dg.weights);
      g = std::move(dg.input);
    }
    if (i == first_param_layer) break;
  }
  return grads;
}

}  // namespace mfd
