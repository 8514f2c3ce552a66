#include <gtest/gtest.h>

#include <cmath>

#include "icl/errors.hpp"
#include "icl/losses.hpp"
#include "icl/ops.hpp"
#include "icl/rng.hpp"
#include "icl_verify/oracles.hpp"

using namespace icl;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
  auto v = random_values(numel(shape), rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

LabelMap random_labels(std::size_t h, std::size_t w, std::size_t classes, Rng& rng) {
  LabelMap m(h, w);
  for (auto& l : m.labels) l = static_cast<std::uint8_t>(rng.index(classes));
  return m;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Large-margin logits that put all mass on the labelled class.
Tensor confident_logits(const LabelMap& labels, std::size_t classes, double margin) {
  std::vector<double> v(classes * labels.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) v[labels.labels[i] * labels.size() + i] = margin;
  return Tensor::from({classes, labels.height, labels.width}, v);
}

ScaleMaps random_maps(std::size_t classes, Rng& rng, bool grad = false) {
  return {random_tensor({classes, 1, 1}, rng, grad), random_tensor({classes, 2, 2}, rng, grad),
          random_tensor({classes, 4, 4}, rng, grad)};
}

// Oracle for dice + CE of one map upsampled to the label grid.
double dice_ce_oracle(const Tensor& map, const LabelMap& labels) {
  const std::size_t z = map.dim(0);
  auto up = oracle::bilinear(values(map), z, map.dim(1), map.dim(2), labels.height, labels.width);
  std::vector<double> target(up.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) target[labels.labels[i] * labels.size() + i] = 1.0;
  return oracle::soft_dice(oracle::softmax_classes(up, z), target, z) + oracle::cross_entropy(up, z, labels);
}

double abs_grad_sum(const Tensor& t) {
  double total = 0.0;
  for (double g : t.grad()) total += std::abs(g);
  return total;
}

}  // namespace

TEST(SoftDice, PerfectOneHotIsNearZero) {
  Rng rng(1);
  auto labels = random_labels(4, 4, 3, rng);
  Tensor t = one_hot(labels, 3);
  const double loss = soft_dice(t, t).item();
  EXPECT_GE(loss, 0.0);
  EXPECT_LE(loss, kDiceEpsilon);
}

TEST(SoftDice, DisjointOneHotIsNearOne) {
  LabelMap a(2, 2), b(2, 2);
  a.labels = {0, 1, 0, 1};
  b.labels = {1, 0, 1, 0};
  EXPECT_NEAR(soft_dice(one_hot(a, 2), one_hot(b, 2)).item(), 1.0, 1e-5);
}

TEST(SoftDice, HandEvaluatedSingleClass) {
  Tensor p = Tensor::from({1, 2, 2}, {1, 1, 0, 0});
  Tensor t = Tensor::from({1, 2, 2}, {1, 0, 0, 0});
  const double want = 1.0 - (2.0 + kDiceEpsilon) / (3.0 + kDiceEpsilon);
  EXPECT_NEAR(soft_dice(p, t).item(), want, 1e-15);
  EXPECT_NEAR(want, 1.0 / 3.0, 1e-5);
}

TEST(SoftDice, ShapeMismatch) {
  EXPECT_THROW(soft_dice(Tensor::zeros({2, 2, 2}), Tensor::zeros({2, 2, 3})), DimensionError);
}

TEST(CrossEntropy, UniformLogitsGiveLogZ) {
  Rng rng(2);
  EXPECT_NEAR(cross_entropy(Tensor::zeros({4, 3, 3}), random_labels(3, 3, 4, rng)).item(), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, LargeMarginApproachesZero) {
  Rng rng(3);
  auto labels = random_labels(3, 3, 4, rng);
  double previous = 1e9;
  for (double margin : {5.0, 20.0, 60.0}) {
    const double loss = cross_entropy(confident_logits(labels, 4, margin), labels).item();
    EXPECT_LT(loss, previous);
    previous = loss;
  }
  EXPECT_LT(previous, 1e-20);
}

TEST(CrossEntropy, MatchesLogSumExpOracle) {
  Rng rng(4);
  Tensor logits = random_tensor({4, 3, 3}, rng);
  auto labels = random_labels(3, 3, 4, rng);
  EXPECT_NEAR(cross_entropy(logits, labels).item(), oracle::cross_entropy(values(logits), 4, labels), 1e-10);
}

TEST(CrossEntropy, LabelOutOfRange) {
  LabelMap labels(2, 2);
  labels.labels[3] = 4;
  EXPECT_THROW(cross_entropy(Tensor::zeros({4, 2, 2}), labels), DataError);
}

TEST(LossSpa, IdenticalScalesAverageToTheirValue) {
  Rng rng(5);
  auto labels = random_labels(4, 4, 3, rng);
  Tensor m = random_tensor({3, 2, 2}, rng);
  const double v = loss_spa({m, m, m}, labels).item();
  EXPECT_NEAR(v, dice_ce_oracle(m, labels), 1e-10);
}

TEST(LossSpa, PerfectMapsAreNearZero) {
  Rng rng(6);
  auto labels = random_labels(4, 4, 3, rng);
  Tensor perfect = confident_logits(labels, 3, 40.0);
  EXPECT_LT(loss_spa({perfect, perfect, perfect}, labels).item(), 1e-5);
}

TEST(LossSpa, MatchesComposedOracle) {
  Rng rng(7);
  auto labels = random_labels(4, 4, 3, rng);
  auto maps = random_maps(3, rng);
  double want = 0.0;
  for (const auto& m : maps) want += dice_ce_oracle(m, labels) / 3.0;
  EXPECT_NEAR(loss_spa(maps, labels).item(), want, 1e-10);
}

TEST(LossUsc, EqualDistributionsGiveTheSoftDiceSelfValue) {
  Rng rng(8);
  Tensor pred = random_tensor({3, 4, 4}, rng);
  const double got = loss_usc({pred, pred, pred}, pred).item();
  auto p = oracle::softmax_classes(values(pred), 3);
  EXPECT_NEAR(got, oracle::soft_dice(p, p, 3), 1e-10);
  EXPECT_GT(got, 0.01);  // soft targets keep the self-value away from zero
}

TEST(LossUsc, MatchesOracle) {
  Rng rng(9);
  auto guided = random_maps(3, rng);
  Tensor pred = random_tensor({3, 4, 4}, rng);
  auto target = oracle::softmax_classes(values(pred), 3);
  double want = 0.0;
  for (const auto& g : guided) {
    auto up = oracle::bilinear(values(g), 3, g.dim(1), g.dim(2), 4, 4);
    want += oracle::soft_dice(oracle::softmax_classes(up, 3), target, 3) / 3.0;
  }
  EXPECT_NEAR(loss_usc(guided, pred).item(), want, 1e-10);
}

TEST(LossUsc, PredictionPathCarriesNoGradient) {
  Rng rng(10);
  auto guided = random_maps(3, rng, true);
  Tensor pred = random_tensor({3, 4, 4}, rng, true);
  loss_usc(guided, pred).backward();
  EXPECT_EQ(abs_grad_sum(pred), 0.0);
  EXPECT_GT(abs_grad_sum(guided[2]), 0.0);
}

TEST(LossCon, IdenticalMapsGiveZero) {
  Rng rng(11);
  auto maps = random_maps(3, rng);
  EXPECT_EQ(loss_con(maps, maps).item(), 0.0);
}

TEST(LossCon, MatchesElementwiseOracle) {
  Rng rng(12);
  auto g = random_maps(3, rng), m = random_maps(3, rng);
  double want = 0.0;
  for (std::size_t s = 0; s < kNumScales; ++s) {
    auto pg = oracle::softmax_classes(values(g[s]), 3);
    auto pm = oracle::softmax_classes(values(m[s]), 3);
    double acc = 0.0;
    for (std::size_t i = 0; i < pg.size(); ++i) acc += (pg[i] - pm[i]) * (pg[i] - pm[i]);
    want += acc / static_cast<double>(pg.size()) / 3.0;
  }
  EXPECT_NEAR(loss_con(g, m).item(), want, 1e-12);
}

TEST(LossCon, SspaMapsCarryNoGradient) {
  Rng rng(13);
  auto g = random_maps(3, rng, true), m = random_maps(3, rng, true);
  loss_con(g, m).backward();
  for (const auto& t : m) EXPECT_EQ(abs_grad_sum(t), 0.0);
  for (const auto& t : g) EXPECT_GT(abs_grad_sum(t), 0.0);
}

TEST(LossCon, ScaleShapeMismatch) {
  Rng rng(14);
  auto g = random_maps(3, rng), m = random_maps(3, rng);
  m[1] = Tensor::zeros({3, 4, 4});
  EXPECT_THROW(loss_con(g, m), DimensionError);
}

class LossTotal : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(15);
    for (int i = 0; i < 2; ++i) {
      labels.push_back(random_labels(4, 4, 3, rng));
    }
    for (int i = 0; i < 2; ++i) {
      labeled.push_back({random_tensor({3, 4, 4}, rng), random_maps(3, rng), &labels[i]});
      unlabeled.push_back({random_tensor({3, 4, 4}, rng), random_maps(3, rng), random_maps(3, rng)});
    }
  }

  std::vector<LabelMap> labels;
  std::vector<LabeledForward> labeled;
  std::vector<UnlabeledForward> unlabeled;
};

TEST_F(LossTotal, DefaultWeights) {
  LossWeights w;
  EXPECT_EQ(w.alpha, 1.0);
  EXPECT_EQ(w.beta, 50.0);
}

TEST_F(LossTotal, ZeroWeightsReduceToSupervisedTerms) {
  auto r = loss_total(labeled, unlabeled, {0.0, 0.0}).report();
  EXPECT_EQ(r.total, r.seg + r.spa);
}

TEST_F(LossTotal, RecomposesFromSeparateTerms) {
  const LossWeights w{0.7, 12.5};
  auto r = loss_total(labeled, unlabeled, w).report();
  double seg = 0, spa = 0, usc = 0, con = 0;
  for (const auto& l : labeled) {
    seg += loss_seg(l.logits, *l.labels).item() / 2.0;
    spa += loss_spa(l.sspa, *l.labels).item() / 2.0;
  }
  for (const auto& u : unlabeled) {
    usc += loss_usc(u.guided, u.logits).item() / 2.0;
    con += loss_con(u.guided, u.sspa).item() / 2.0;
  }
  EXPECT_NEAR(r.seg, seg, 1e-12);
  EXPECT_NEAR(r.spa, spa, 1e-12);
  EXPECT_NEAR(r.usc, usc, 1e-12);
  EXPECT_NEAR(r.con, con, 1e-12);
  EXPECT_NEAR(r.total, seg + spa + w.alpha * usc + w.beta * con, 1e-9);
}

TEST_F(LossTotal, DisabledTermsReportZero) {
  for (auto& l : labeled) l.sspa = {};
  auto r = loss_total(labeled, {}, {}).report();
  EXPECT_EQ(r.spa, 0.0);
  EXPECT_EQ(r.usc, 0.0);
  EXPECT_EQ(r.con, 0.0);
  EXPECT_EQ(r.total, r.seg);
}

TEST_F(LossTotal, NegativeWeightsRejected) {
  EXPECT_THROW(loss_total(labeled, unlabeled, {-1.0, 1.0}), ArgumentError);
}

TEST(LossSeg, MatchesDiceAndCrossEntropyOracles) {
  Rng rng(16);
  auto labels = random_labels(4, 4, 3, rng);
  Tensor logits = random_tensor({3, 4, 4}, rng);
  std::vector<double> target(48, 0.0);
  for (std::size_t i = 0; i < 16; ++i) target[labels.labels[i] * 16 + i] = 1.0;
  const double want = oracle::soft_dice(oracle::softmax_classes(values(logits), 3), target, 3) +
                      oracle::cross_entropy(values(logits), 3, labels);
  EXPECT_NEAR(loss_seg(logits, labels).item(), want, 1e-10);
}
