#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cfin {

struct GradcheckOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double step = 1e-5;
  double tolerance = 1e-4;
  // Coordinates checked per tensor per seed; the rest are skipped.
  std::size_t samples_per_tensor = 4;
};

struct GradcheckResult {
  std::string suite;
  double worst = 0.0;       // worst relative error over every checked coordinate
  std::string worst_where;  // "seed=2 mask=relaxed blocks.0.cfgt.cga1.q.weight[17]"
  std::size_t checked = 0;
  // Coordinates skipped because the one-sided differences disagreed (a
  // ReLU or max-pool switch inside the step); replaced by other coordinates.
  std::size_t kinks = 0;
  bool passed = false;
};

/// rifu, ciam, cgm, cga, cfgt, model
const std::vector<std::string>& gradcheck_suites();

/// Compares backward() against central finite differences of the scalar
/// loss sum(out * R) for a fixed random R. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-4). Modules with a RIFU mask are checked twice:
/// with the hard mask held constant (replayed across perturbations) and with
/// the soft relaxation in the forward pass.
GradcheckResult run_gradcheck(const std::string& suite, const GradcheckOptions& opts = {});

}  // namespace cfin
