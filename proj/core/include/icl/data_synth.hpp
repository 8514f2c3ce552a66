#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "icl/label_map.hpp"
#include "icl/tensor.hpp"

// Synthetic cardiac-like phantoms: an elliptical "LV" blood pool (class 3), a
// surrounding "Myo" ring (class 2) whose intensity is close to the
// background, and an adjacent "RV" crescent (class 1). Classes beyond 3 are
// extra elliptical blobs.
namespace icl {

struct PhantomConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t classes = 4;
  double noise_sigma = 0.05;
};

struct SegSample {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> image;  // [0, 1], values exactly representable as float32
  LabelMap mask;              // empty when the labels are withheld
  std::uint64_t seed = 0;

  bool has_mask() const { return !mask.labels.empty(); }
  // [1 x H x W] constant tensor.
  Tensor image_tensor() const;
};

// Deterministic in (seed, config). Throws ArgumentError for fewer than two
// classes and GenerationError when the structures cannot be placed within
// 100 attempts.
SegSample generate_sample(std::uint64_t seed, const PhantomConfig& config);

struct SplitConfig {
  std::size_t n_labeled = 4;
  std::size_t n_unlabeled = 60;
  std::size_t n_val = 20;
  std::uint64_t master_seed = 0;
};

struct DatasetSplit {
  std::vector<SegSample> labeled;
  std::vector<SegSample> unlabeled;  // masks withheld
  std::vector<SegSample> val;
};

// Draws n + m + v distinct generation seeds from the master seed and assigns
// them to the three pools.
DatasetSplit make_split(const SplitConfig& split, const PhantomConfig& phantom);

struct Batch {
  std::vector<SegSample> labeled;
  std::vector<SegSample> unlabeled;
};

struct BatchPlan {
  std::uint64_t master_seed = 0;
  std::uint64_t step = 0;
  std::size_t labeled = 2;
  std::size_t unlabeled = 2;
};

// Labeled items are drawn with replacement, unlabeled ones without
// replacement within each pass over the pool. Every item gets a random
// flip/90-degree rotation applied identically to image and mask. Throws
// ConfigError when a requested pool is empty.
Batch compose_batch(const DatasetSplit& split, const BatchPlan& plan);

// Applies the dihedral transform (optional horizontal/vertical flip, then
// `quarter_turns` counter-clockwise rotations) to image and mask alike.
SegSample augment(const SegSample& sample, bool flip_h, bool flip_v, unsigned quarter_turns);

// Flat binary sample file: "ICLS", u32 version, u32 H, u32 W, u32 Z, image
// as f32 little-endian, mask as u8 (all zeros when withheld).
inline constexpr std::uint32_t kSampleFormatVersion = 1;
std::vector<std::uint8_t> encode_sample(const SegSample& sample, std::size_t classes);
SegSample decode_sample(const std::vector<std::uint8_t>& bytes, std::size_t* classes = nullptr);
void save_sample(const std::string& path, const SegSample& sample, std::size_t classes);
SegSample load_sample(const std::string& path, std::size_t* classes = nullptr);

}  // namespace icl
