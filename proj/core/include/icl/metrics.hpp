#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "icl/label_map.hpp"

namespace icl {

// Binary mask of one class.
struct ClassMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  ClassMask() = default;
  ClassMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}
  static ClassMask from_labels(const LabelMap& labels, std::uint8_t cls);

  bool at(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

// 2|P n G| / (|P| + |G|); 1 when both are empty, 0 when exactly one is.
double dsc(const ClassMask& pred, const ClassMask& gt);

// Mask pixels with at least one 4-neighbour outside the mask (the image
// border counts as outside), as (row, col).
std::vector<std::pair<std::size_t, std::size_t>> boundary_pixels(const ClassMask& mask);

// 95th percentile (nearest rank) of the union of both directed
// boundary-to-boundary Euclidean distance sets, in pixels. 0 when both masks
// are empty, the image diagonal when exactly one is.
double hd95(const ClassMask& pred, const ClassMask& gt);

// Index (0-based) of the nearest-rank 95th percentile in a sorted sample of n.
std::size_t percentile95_rank(std::size_t n);

struct ClassMetrics {
  std::size_t cls = 0;
  double dsc = 0.0;
  double hd95 = 0.0;
};

struct VolumeMetrics {
  std::vector<ClassMetrics> per_class;  // foreground classes 1..Z-1
  double mean_dsc = 0.0;
  double mean_hd95 = 0.0;
};

// Per-slice metrics averaged over slices for every foreground class, then an
// unweighted mean over classes. Throws ArgumentError on count mismatch and
// DimensionError on shape mismatch.
VolumeMetrics evaluate_volume(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
                              std::size_t classes);

}  // namespace icl
