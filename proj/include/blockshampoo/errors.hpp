#pragma once

#include <stdexcept>
#include <string>

namespace blockshampoo {

/// Raised when a numerical routine cannot produce a trustworthy result:
/// divergence, non-finite intermediates, non-convergence of the eigensolver,
/// or a spectrum that a dampening heuristic reduces to nothing.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace blockshampoo
