#include "icl/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "icl/binary_io.hpp"
#include "icl/errors.hpp"
#include "icl/rng.hpp"

namespace icl {

namespace {

constexpr int kMaxAttempts = 100;
constexpr std::size_t kMinClassPixels = 4;

// Ellipse in normalised image coordinates ([0,1] on both axes).
struct Ellipse {
  double cx, cy, ra, rb, angle;

  // <= 1 inside.
  double level(double u, double v) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double du = u - cx, dv = v - cy;
    const double p = (c * du + s * dv) / ra;
    const double q = (-s * du + c * dv) / rb;
    return p * p + q * q;
  }
  Ellipse grown(double by) const { return {cx, cy, ra + by, rb + by, angle}; }
};

double quantize(double v) { return static_cast<double>(static_cast<float>(std::clamp(v, 0.0, 1.0))); }

}  // namespace

Tensor SegSample::image_tensor() const { return Tensor::from({1, height, width}, image); }

SegSample generate_sample(std::uint64_t seed, const PhantomConfig& config) {
  if (config.classes < 2) throw ArgumentError("generate_sample: need at least two classes");
  if (config.classes > 255) throw ArgumentError("generate_sample: at most 255 classes");
  if (config.height < 8 || config.width < 8) throw ArgumentError("generate_sample: image smaller than 8x8");
  const std::size_t h = config.height, w = config.width;
  Rng rng(mix_seed(seed, 0x1c15));

  // Cardiac structures in label order: RV, Myo, LV (the last ones survive
  // when fewer classes are configured).
  const std::size_t cardiac = std::min<std::size_t>(config.classes - 1, 3);
  const std::size_t extra = config.classes - 1 - cardiac;

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const double pi = std::numbers::pi;
    Ellipse lv{rng.uniform(0.38, 0.62), rng.uniform(0.38, 0.62), rng.uniform(0.08, 0.13), 0.0,
               rng.uniform(0.0, pi)};
    lv.rb = lv.ra * rng.uniform(0.75, 1.0);
    const double wall = rng.uniform(0.035, 0.055);
    const Ellipse myo = lv.grown(wall);
    const double phi = rng.uniform(0.0, 2.0 * pi);
    const double reach = (std::max(myo.ra, myo.rb)) * rng.uniform(0.75, 1.0);
    Ellipse rv{lv.cx + reach * std::cos(phi), lv.cy + reach * std::sin(phi), myo.ra * rng.uniform(0.95, 1.3),
               myo.rb * rng.uniform(0.6, 0.9), phi + pi / 2.0};
    std::vector<Ellipse> blobs;
    for (std::size_t e = 0; e < extra; ++e) {
      const double r = rng.uniform(0.04, 0.07);
      blobs.push_back({rng.uniform(0.12, 0.88), rng.uniform(0.12, 0.88), r, r * rng.uniform(0.7, 1.0),
                       rng.uniform(0.0, pi)});
    }

    LabelMap mask(h, w);
    std::vector<std::size_t> counts(config.classes, 0);
    bool touches_border = false, overlap = false;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
        const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
        std::size_t label = 0;
        const bool in_lv = lv.level(u, v) <= 1.0;
        const bool in_myo = myo.level(u, v) <= 1.0;
        const bool in_rv = rv.level(u, v) <= 1.0;
        // Structures outside the configured class budget fall back to background.
        if (in_lv) {
          label = cardiac;
        } else if (in_myo && cardiac >= 2) {
          label = cardiac - 1;
        } else if (in_rv && cardiac >= 3 && !in_myo) {
          label = 1;
        }
        for (std::size_t e = 0; e < blobs.size(); ++e) {
          if (blobs[e].level(u, v) <= 1.0) {
            if (label != 0 || rv.grown(0.03).level(u, v) <= 1.0 || myo.grown(0.03).level(u, v) <= 1.0) overlap = true;
            label = cardiac + 1 + e;
          }
        }
        mask.at(y, x) = static_cast<std::uint8_t>(label);
        ++counts[label];
        if (label != 0 && (x == 0 || y == 0 || x + 1 == w || y + 1 == h)) touches_border = true;
      }
    }
    const bool all_present = std::all_of(counts.begin() + 1, counts.end(),
                                         [](std::size_t c) { return c >= kMinClassPixels; });
    if (!all_present || touches_border || overlap) continue;

    const double background = rng.uniform(0.15, 0.35);
    std::vector<double> level(config.classes);
    level[0] = background;
    if (cardiac >= 1) level[cardiac] = rng.uniform(0.7, 0.95);               // LV blood pool
    if (cardiac >= 2) level[cardiac - 1] = background + rng.uniform(0.05, 0.15);  // Myo, close to background
    if (cardiac >= 3) level[1] = rng.uniform(0.55, 0.85);                    // RV
    for (std::size_t e = 0; e < extra; ++e) level[cardiac + 1 + e] = rng.uniform(0.45, 0.95);

    const double gx = rng.uniform(-0.2, 0.2), gy = rng.uniform(-0.2, 0.2), gr = rng.uniform(-0.3, 0.3);
    SegSample sample;
    sample.height = h;
    sample.width = w;
    sample.seed = seed;
    sample.image.resize(h * w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(w) - 0.5;
        const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(h) - 0.5;
        const double bias = 1.0 + gx * u + gy * v + gr * (u * u + v * v);
        const double value = level[mask.at(y, x)] * bias + rng.normal(0.0, config.noise_sigma);
        sample.image[y * w + x] = quantize(value);
      }
    }
    sample.mask = std::move(mask);
    return sample;
  }
  throw GenerationError("generate_sample: could not place structures for seed " + std::to_string(seed) +
                        " after " + std::to_string(kMaxAttempts) + " attempts");
}

DatasetSplit make_split(const SplitConfig& split, const PhantomConfig& phantom) {
  const std::size_t total = split.n_labeled + split.n_unlabeled + split.n_val;
  std::vector<std::uint64_t> seeds(total);
  const std::uint64_t base = mix_seed(split.master_seed, 0x5eed);
  for (std::size_t i = 0; i < total; ++i) seeds[i] = mix_seed(base, i);
  Rng rng(mix_seed(split.master_seed, 0x5b11));
  for (std::size_t i = total; i > 1; --i) std::swap(seeds[i - 1], seeds[rng.index(i)]);

  DatasetSplit out;
  std::size_t next = 0;
  for (std::size_t i = 0; i < split.n_labeled; ++i) out.labeled.push_back(generate_sample(seeds[next++], phantom));
  for (std::size_t i = 0; i < split.n_unlabeled; ++i) {
    auto s = generate_sample(seeds[next++], phantom);
    s.mask = {};
    out.unlabeled.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < split.n_val; ++i) out.val.push_back(generate_sample(seeds[next++], phantom));
  return out;
}

SegSample augment(const SegSample& sample, bool flip_h, bool flip_v, unsigned quarter_turns) {
  quarter_turns %= 4;
  const std::size_t h = sample.height, w = sample.width;
  if (quarter_turns % 2 == 1 && h != w) throw ArgumentError("augment: quarter turn of a non-square image");
  SegSample out = sample;
  const bool has_mask = sample.has_mask();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t sy = flip_v ? h - 1 - y : y;
      std::size_t sx = flip_h ? w - 1 - x : x;
      // Destination after rotating (sy, sx) counter-clockwise.
      std::size_t dy = sy, dx = sx;
      for (unsigned t = 0; t < quarter_turns; ++t) {
        const std::size_t ny = w - 1 - dx;  // square when t is odd
        dx = dy;
        dy = ny;
      }
      out.image[dy * w + dx] = sample.image[y * w + x];
      if (has_mask) out.mask.labels[dy * w + dx] = sample.mask.labels[y * w + x];
    }
  }
  return out;
}

Batch compose_batch(const DatasetSplit& split, const BatchPlan& plan) {
  if (plan.labeled > 0 && split.labeled.empty()) throw ConfigError("compose_batch: labeled pool is empty");
  if (plan.unlabeled > 0 && split.unlabeled.empty()) throw ConfigError("compose_batch: unlabeled pool is empty");
  Rng rng(mix_seed(plan.master_seed, 0xba7c4000ULL + plan.step));
  auto augmented = [&rng](const SegSample& s) {
    const bool fh = rng.coin();
    const bool fv = rng.coin();
    unsigned turns = static_cast<unsigned>(rng.index(4));
    if (s.height != s.width) turns &= 2u;
    return augment(s, fh, fv, turns);
  };
  Batch batch;
  for (std::size_t i = 0; i < plan.labeled; ++i) {
    batch.labeled.push_back(augmented(split.labeled[rng.index(split.labeled.size())]));
  }
  const std::size_t m = split.unlabeled.size();
  std::uint64_t cached_epoch = ~0ULL;
  std::vector<std::size_t> order(m);
  for (std::size_t j = 0; j < plan.unlabeled; ++j) {
    const std::uint64_t position = plan.step * plan.unlabeled + j;
    const std::uint64_t epoch = position / m;
    if (epoch != cached_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng perm(mix_seed(plan.master_seed, 0xe90c0000ULL + epoch));
      for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[perm.index(i)]);
      cached_epoch = epoch;
    }
    batch.unlabeled.push_back(augmented(split.unlabeled[order[position % m]]));
  }
  return batch;
}

std::vector<std::uint8_t> encode_sample(const SegSample& sample, std::size_t classes) {
  binary::Writer out;
  out.put_bytes("ICLS");
  out.put<std::uint32_t>(kSampleFormatVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(sample.height));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(sample.width));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(classes));
  for (double v : sample.image) out.put<float>(static_cast<float>(v));
  for (std::size_t i = 0; i < sample.height * sample.width; ++i) {
    out.put<std::uint8_t>(sample.has_mask() ? sample.mask.labels[i] : 0);
  }
  return out.take();
}

SegSample decode_sample(const std::vector<std::uint8_t>& bytes, std::size_t* classes) {
  binary::Reader in(bytes);
  if (in.get_string(4, "magic") != "ICLS") throw FormatError("not a sample file (bad magic)", 0);
  const std::size_t version_at = in.offset();
  const auto version = in.get<std::uint32_t>("version");
  if (version != kSampleFormatVersion) {
    throw FormatError("unsupported sample version " + std::to_string(version), version_at);
  }
  SegSample s;
  s.height = in.get<std::uint32_t>("height");
  s.width = in.get<std::uint32_t>("width");
  const auto z = in.get<std::uint32_t>("classes");
  if (s.height == 0 || s.width == 0 || z < 2) throw FormatError("invalid sample header", in.offset());
  s.image.resize(s.height * s.width);
  for (auto& v : s.image) v = static_cast<double>(in.get<float>("image"));
  s.mask = LabelMap(s.height, s.width);
  for (auto& l : s.mask.labels) {
    const std::size_t at = in.offset();
    l = in.get<std::uint8_t>("mask");
    if (l >= z) throw FormatError("mask label " + std::to_string(l) + " outside class range", at);
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after sample", in.offset());
  if (classes) *classes = z;
  return s;
}

void save_sample(const std::string& path, const SegSample& sample, std::size_t classes) {
  binary::write_file(path, encode_sample(sample, classes));
}

SegSample load_sample(const std::string& path, std::size_t* classes) {
  return decode_sample(binary::read_file(path), classes);
}

}  // namespace icl
