#pragma once

#include <stdexcept>

namespace calinv {

// Declared compact support does not hold (field visible on the box
// boundary, or a map pushed points outside the working box).
struct SupportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An implicit solve or an iteration did not converge within budget.
struct SolveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Step-halving or refinement disagreement above tolerance.
struct ResolutionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace calinv
