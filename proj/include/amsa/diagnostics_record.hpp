#pragma once

#include <optional>
#include <vector>

namespace amsa {

// Residual snapshot at one recorded iteration.
//   x_norms[i]  = ||theta_i - y_i(theta_{1:i-1})||       (optimal residual)
//   df_norms[i] = ||f_i - F_bar_i(theta)||               (estimation residual)
//   V           = sum_i (x_i^2 + df_i^2) for amsa runs, sum_i x_i^2 for msa
struct DiagnosticsRecord {
  long t = 0;
  std::vector<double> x_norms;
  std::vector<double> df_norms;
  double V = 0.0;
  std::optional<double> weighted_V;  // msa, N = 3 only
};

}  // namespace amsa
