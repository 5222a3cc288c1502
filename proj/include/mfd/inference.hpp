#pragma once

#include <algorithm>
#include <vector>

#include "mfd/augment.hpp"
#include "mfd/mask_class.hpp"
#include "mfd/network.hpp"
#include "mfd/samples.hpp"

namespace mfd {

// Index of the largest entry; ties go to the lowest index.
template <class T>
std::size_t argmax_row(const Tensor<T>& probs, std::size_t row) {
  const std::size_t k = probs.dim(1);
  const T* p = probs.data() + row * k;
  return static_cast<std::size_t>(std::max_element(p, p + k) - p);
}

// Copies unit-domain images into a b x H x W x C batch tensor.
template <class T>
Tensor<T> stack_images(const std::vector<Image>& images) {
  const auto& s = images.front().pixels.shape();
  Tensor<T> batch({images.size(), s[0], s[1], s[2]});
  T* out = batch.data();
  for (const auto& img : images) {
    if (img.pixels.shape() != s) throw ShapeError("stack_images: images differ in size");
    out = std::transform(img.pixels.values().begin(), img.pixels.values().end(), out,
                         [](double v) { return static_cast<T>(v); });
  }
  return batch;
}

// Test-time predictions (rescale only) for every sample, batched.
template <class T, SampleSource S>
std::vector<MaskClass> predict_labels(const Network<T>& net, const S& source,
                                      std::size_t batch_size = 16) {
  std::vector<MaskClass> out;
  out.reserve(source.size());
  for (std::size_t start = 0; start < source.size(); start += batch_size) {
    const std::size_t end = std::min(source.size(), start + batch_size);
    std::vector<Image> imgs;
    for (std::size_t i = start; i < end; ++i) imgs.push_back(rescale_unit(source.image(i)));
    const Tensor<T> probs = predict(net, stack_images<T>(imgs));
    for (std::size_t r = 0; r < end - start; ++r) out.push_back(class_from_ordinal(argmax_row(probs, r)));
  }
  return out;
}

}  // namespace mfd
