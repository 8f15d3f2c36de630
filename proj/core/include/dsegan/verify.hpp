#pragma once

#include <string>
#include <vector>

namespace dsegan {

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Invariant suite behind the verify command: masked/naive recomposition
// agreement, finite-difference gradient checks on every module, loss
// identities, and routing bounds. Pure; prints nothing.
std::vector<VerifyCheck> run_verification();

}  // namespace dsegan
