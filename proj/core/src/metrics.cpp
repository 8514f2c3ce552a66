#include "icl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "icl/errors.hpp"

namespace icl {

namespace {

void require_same_shape(const ClassMask& a, const ClassMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError("mask shapes differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

constexpr double kFar = std::numeric_limits<double>::max() / 4;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Exact 1-D squared distance transform: lower envelope of the parabolas
// rooted at finite entries of f. Entries of f are kFar where no site exists.
void distance_1d(const double* f, double* d, std::size_t n, std::vector<std::size_t>& v, std::vector<double>& z) {
  auto sq = [](double q) { return q * q; };
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] >= kFar) continue;
    if (!any) {
      any = true;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    const double fq = f[q] + sq(static_cast<double>(q));
    while (true) {
      const std::size_t p = v[k];
      const double s = (fq - (f[p] + sq(static_cast<double>(p)))) / (2.0 * static_cast<double>(q - p));
      if (s <= z[k]) {
        --k;  // z[0] is -inf, so k never underflows
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
      break;
    }
  }
  if (!any) {
    std::fill_n(d, n, kFar);
    return;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const std::size_t p = v[k];
    d[q] = sq(static_cast<double>(q) - static_cast<double>(p)) + f[p];
  }
}

// Squared Euclidean distance from every pixel to the nearest site.
std::vector<double> squared_distance_map(const std::vector<std::pair<std::size_t, std::size_t>>& sites,
                                         std::size_t h, std::size_t w) {
  std::vector<double> grid(h * w, kFar);
  for (auto [y, x] : sites) grid[y * w + x] = 0.0;
  const std::size_t n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<std::size_t> v(n);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) f[y] = grid[y * w + x];
    distance_1d(f.data(), d.data(), h, v, z);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = d[y];
  }
  for (std::size_t y = 0; y < h; ++y) {
    distance_1d(grid.data() + y * w, d.data(), w, v, z);
    std::copy_n(d.begin(), w, grid.begin() + static_cast<std::ptrdiff_t>(y * w));
  }
  return grid;
}

}  // namespace

ClassMask ClassMask::from_labels(const LabelMap& labels, std::uint8_t cls) {
  ClassMask m(labels.height, labels.width);
  for (std::size_t i = 0; i < labels.size(); ++i) m.bits[i] = labels.labels[i] == cls ? 1 : 0;
  return m;
}

std::size_t ClassMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

double dsc(const ClassMask& pred, const ClassMask& gt) {
  require_same_shape(pred, gt);
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    const bool a = pred.bits[i] != 0, b = gt.bits[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<std::pair<std::size_t, std::size_t>> boundary_pixels(const ClassMask& mask) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t h = mask.height, w = mask.width;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w || !mask.at(y - 1, x) || !mask.at(y + 1, x) ||
                        !mask.at(y, x - 1) || !mask.at(y, x + 1);
      if (edge) out.emplace_back(y, x);
    }
  }
  return out;
}

std::size_t percentile95_rank(std::size_t n) {
  const std::size_t rank = (95 * n + 99) / 100;  // ceil(0.95 n)
  return rank == 0 ? 0 : rank - 1;
}

double hd95(const ClassMask& pred, const ClassMask& gt) {
  require_same_shape(pred, gt);
  const auto bp = boundary_pixels(pred);
  const auto bg = boundary_pixels(gt);
  if (bp.empty() && bg.empty()) return 0.0;
  if (bp.empty() || bg.empty()) {
    const double h = static_cast<double>(pred.height - 1), w = static_cast<double>(pred.width - 1);
    return std::sqrt(h * h + w * w);
  }
  const auto to_gt = squared_distance_map(bg, gt.height, gt.width);
  const auto to_pred = squared_distance_map(bp, pred.height, pred.width);
  std::vector<double> squared;
  squared.reserve(bp.size() + bg.size());
  for (auto [y, x] : bp) squared.push_back(to_gt[y * gt.width + x]);
  for (auto [y, x] : bg) squared.push_back(to_pred[y * pred.width + x]);
  const auto k = percentile95_rank(squared.size());
  std::nth_element(squared.begin(), squared.begin() + static_cast<std::ptrdiff_t>(k), squared.end());
  return std::sqrt(squared[k]);
}

VolumeMetrics evaluate_volume(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
                              std::size_t classes) {
  if (pred.size() != gt.size()) {
    throw ArgumentError("evaluate_volume: " + std::to_string(pred.size()) + " predicted slices vs " +
                        std::to_string(gt.size()) + " reference slices");
  }
  if (pred.empty()) throw ArgumentError("evaluate_volume: no slices");
  if (classes < 2) throw ArgumentError("evaluate_volume: need at least one foreground class");
  VolumeMetrics out;
  for (std::size_t c = 1; c < classes; ++c) {
    ClassMetrics m{c, 0.0, 0.0};
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto p = ClassMask::from_labels(pred[i], static_cast<std::uint8_t>(c));
      const auto g = ClassMask::from_labels(gt[i], static_cast<std::uint8_t>(c));
      m.dsc += dsc(p, g);
      m.hd95 += hd95(p, g);
    }
    m.dsc /= static_cast<double>(pred.size());
    m.hd95 /= static_cast<double>(pred.size());
    out.per_class.push_back(m);
  }
  for (const auto& m : out.per_class) {
    out.mean_dsc += m.dsc;
    out.mean_hd95 += m.hd95;
  }
  out.mean_dsc /= static_cast<double>(out.per_class.size());
  out.mean_hd95 /= static_cast<double>(out.per_class.size());
  return out;
}

}  // namespace icl
