#pragma once

namespace metab {

// phi(x) = coth(x) - 1/x extended to the whole line by phi(0) = 0 and
// oddness. Strictly increasing from -1 to 1, concave on (0, inf); the link
// between a bin's normalized mean offset 2(y-c)/d and its tilt lambda*d/2.
double phi(double x);

// Derivative 1/x^2 - 1/sinh(x)^2, positive everywhere, phi_prime(0) = 1/3.
double phi_prime(double x);

// Inverse of phi on (-1,1). Residual |phi(x) - u| is driven to ~1e-15
// (bisection bracket plus Newton polish). Throws std::domain_error when
// |u| >= 1, which signals a bin mean on or outside the bin boundary.
double phi_inv(double u);

}  // namespace metab
