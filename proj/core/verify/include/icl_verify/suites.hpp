#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

// Verification groups shared by `icl verify`, the unit tests and the
// acceptance runner. Each group compares library results against the
// oracles or checks an exact invariant, and reports the worst deviation.
namespace icl::verify {

struct Check {
  std::string name;
  double worst = 0.0;      // largest observed deviation (0 for exact checks that hold)
  double tolerance = 0.0;  // passes when worst <= tolerance
  bool passed = false;
  std::string detail;
};

struct GroupResult {
  std::string group;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const;
  std::size_t failures() const;
  // "PASS gradients  (41 checks, worst 2.3e-09, 4.1 s)" plus a line per failed check.
  std::string summary() const;
};

struct SuiteOptions {
  std::size_t gradient_seeds = 20;
  std::size_t metric_pairs = 600;
  std::size_t attention_instances = 50;
  std::size_t finiteness_trials = 1000;
  std::uint64_t seed = 0;
};

GroupResult tensor_oracles(const SuiteOptions& options = {});
GroupResult gradient_suite(const SuiteOptions& options = {});
GroupResult attention_oracles(const SuiteOptions& options = {});
GroupResult detach_probes(const SuiteOptions& options = {});
GroupResult metric_fuzz(const SuiteOptions& options = {});
GroupResult invariants(const SuiteOptions& options = {});
GroupResult pipeline_oracles(const SuiteOptions& options = {});

std::vector<GroupResult> run_all(const SuiteOptions& options = {});

}  // namespace icl::verify
