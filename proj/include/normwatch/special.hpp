#pragma once

// Special functions and distribution tails used for p-values.

namespace normwatch {

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// Regularized lower incomplete gamma P(a, x) and its complement Q(a, x).
double incomplete_gamma_p(double a, double x);
double incomplete_gamma_q(double a, double x);

// Two-sided p-value of a standard normal z.
double normal_two_sided_p(double z);

// Two-sided p-value of Student's t with df degrees of freedom (df may be real).
double students_t_two_sided_p(double t, double df);

// Upper tail of the chi-square distribution.
double chi_square_sf(double statistic, double df);

}  // namespace normwatch
