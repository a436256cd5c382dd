#pragma once

#include <cstddef>
#include <vector>

namespace trance {

/// Fidelity, coherence and their mean for one (class, explainer) pair.
struct FaithReport {
  double fidelity = 0.0;      // 1 - relative absolute error, clamped to [0,1]
  double fidelity_raw = 0.0;  // the relative absolute error itself
  double coherence = 0.0;     // mean magnitude-squared coherence over retained bins
  double faith = 0.0;         // (fidelity + coherence) / 2
  double half_gap = 0.0;      // (coherence - fidelity) / 2, the reported "+-" spread
  std::vector<double> gamma_sq_bins;
  std::size_t n_samples = 0;
};

}  // namespace trance
