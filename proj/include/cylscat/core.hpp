#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cylscat {

using cplx = std::complex<double>;

inline constexpr double pi = 3.141592653589793238462643383279502884;

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// malformed user input: bad config keys, invalid family parameters
struct input_error : error {
  using error::error;
};
// geometric hypotheses violated: profile not admissible, f(5) = 1, ...
struct geometry_error : error {
  using error::error;
};
// operation called outside its contract (wrong mode class, missing bc data, ...)
struct precondition_error : error {
  using error::error;
};
// a regular linear solve hit an exactly singular system
struct pole_error : error {
  using error::error;
};
// adaptive refinement hit its depth cap before certifying the answer
struct resolution_error : error {
  using error::error;
};

// branch of sqrt with nonnegative imaginary part everywhere
cplx sqrt_upper(cplx z);

// quintic smoothstep, C^2: 0 for t <= 0, 1 for t >= 1
double smoothstep(double t);
// 0 at r <= a, 1 at r >= b
double ramp_up(double r, double a, double b);
// 1 at r <= a, 0 at r >= b
double ramp_down(double r, double a, double b);
// 1 on [a+w, b-w], 0 outside (a, b)
double plateau(double r, double a, double b, double w);

void set_workers(int n);
int workers();
// runs body(0..n-1); results must be written by index so the schedule is immaterial
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

std::string fmt(double v);
std::uint64_t fnv1a(const std::string& s);

// least-squares line y = slope*x + intercept
struct LineFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace cylscat
