#pragma once

namespace manycov {

// Inverse standard normal CDF (Acklam's rational approximation with one
// Halley refinement step, accurate to ~1e-15). p must be in (0,1).
double normal_quantile(double p);

}  // namespace manycov
