#include <gtest/gtest.h>

#include "icl/ops.hpp"
#include "icl_verify/suites.hpp"

using namespace icl;

namespace {

verify::SuiteOptions quick() {
  verify::SuiteOptions o;
  o.gradient_seeds = 2;
  o.metric_pairs = 100;
  o.attention_instances = 8;
  o.finiteness_trials = 50;
  return o;
}

void expect_pass(const verify::GroupResult& r) {
  EXPECT_TRUE(r.passed()) << r.summary();
  EXPECT_FALSE(r.checks.empty()) << r.group;
}

}  // namespace

TEST(VerifyGroups, TensorOracles) { expect_pass(verify::tensor_oracles(quick())); }
TEST(VerifyGroups, Gradients) { expect_pass(verify::gradient_suite(quick())); }
TEST(VerifyGroups, Attention) { expect_pass(verify::attention_oracles(quick())); }
TEST(VerifyGroups, Detach) { expect_pass(verify::detach_probes(quick())); }
TEST(VerifyGroups, Metrics) { expect_pass(verify::metric_fuzz(quick())); }
TEST(VerifyGroups, Invariants) { expect_pass(verify::invariants(quick())); }
TEST(VerifyGroups, Pipeline) { expect_pass(verify::pipeline_oracles(quick())); }

TEST(VerifyGroups, SoftmaxSignFlipBreaksGradientGroup) {
  auto opts = quick();
  opts.gradient_seeds = 1;
  {
    icl::testing::SoftmaxBackwardSignFlip flip;
    auto r = verify::gradient_suite(opts);
    EXPECT_FALSE(r.passed());
    EXPECT_NE(r.summary().find("FAIL"), std::string::npos);
    EXPECT_NE(r.summary().find("failed "), std::string::npos);
  }
  // The guard restores the correct backward.
  EXPECT_TRUE(verify::gradient_suite(opts).passed());
}

TEST(GroupResult, SummaryFormat) {
  verify::GroupResult r;
  r.group = "demo";
  r.seconds = 1.25;
  r.checks.push_back({"a", 1e-12, 1e-10, true, ""});
  r.checks.push_back({"b", 3e-3, 1e-4, false, "seed 7"});
  EXPECT_EQ(r.failures(), 1u);
  EXPECT_FALSE(r.passed());
  const auto s = r.summary();
  EXPECT_EQ(s.rfind("FAIL demo", 0), 0u) << s;
  EXPECT_NE(s.find("2 checks"), std::string::npos);
  EXPECT_NE(s.find("worst 3.00e-03"), std::string::npos);
  EXPECT_NE(s.find("failed b: deviation 3.000e-03 > 1.0e-04 (seed 7)"), std::string::npos) << s;
  r.checks.pop_back();
  EXPECT_EQ(r.summary().rfind("PASS demo", 0), 0u);
}
