#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dfgp {

struct GradcheckGroup {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;  // lstm, projection, embeddings, kernel
  double tolerance = 1e-4;
  std::size_t seeds = 0;
  bool passed = false;
};

struct GradcheckOptions {
  std::size_t seed_count = 20;
  std::uint64_t first_seed = 1;
  /// Test fixture: splices an identity node with a deliberately wrong
  /// backward rule into the factor pipeline, which must make the check fail.
  bool corrupt_backward = false;
};

/// Compares the full-model autodiff gradients against central finite
/// differences (h = 1e-5) on a miniature instance (N=3, T=20, K=2) across the
/// requested seeds. Relative error per coordinate is |a-b| / max(1, |a|, |b|).
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace dfgp
