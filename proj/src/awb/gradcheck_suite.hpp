#pragma once

#include <string>
#include <vector>

namespace awb {

struct ComponentCheck {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = false;
};

// Central-difference checks (64-bit, eps 1e-5) for every layer type, the
// histogram stack, the fire module, the full tiny models and both losses.
// Threshold 1e-4.
std::vector<ComponentCheck> run_gradcheck_suite();

}  // namespace awb
