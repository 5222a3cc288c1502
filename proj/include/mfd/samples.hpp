#pragma once

#include <concepts>
#include <cstddef>
#include <vector>

#include "mfd/image.hpp"
#include "mfd/mask_class.hpp"

namespace mfd {

// Indexable labeled images. image(i) yields a raw-domain image already at
// the network's input size.
template <class S>
concept SampleSource = requires(const S& s, std::size_t i) {
  { s.size() } -> std::convertible_to<std::size_t>;
  { s.label(i) } -> std::convertible_to<MaskClass>;
  { s.image(i) } -> std::convertible_to<Image>;
};

struct Sample {
  Image image;
  MaskClass label;
};

// Samples held in memory.
class MemorySource {
 public:
  MemorySource() = default;
  explicit MemorySource(std::vector<Sample> samples) : samples_(std::move(samples)) {}

  std::size_t size() const { return samples_.size(); }
  MaskClass label(std::size_t i) const { return samples_.at(i).label; }
  const Image& image(std::size_t i) const { return samples_.at(i).image; }

  void push_back(Sample s) { samples_.push_back(std::move(s)); }
  const std::vector<Sample>& samples() const { return samples_; }

 private:
  std::vector<Sample> samples_;
};

}  // namespace mfd
