#include "cylscat/core.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

namespace cylscat {

cplx sqrt_upper(cplx z) {
  cplx w = std::sqrt(z);
  if (w.imag() < 0) w = -w;
  return w;
}

double smoothstep(double t) {
  if (t <= 0) return 0;
  if (t >= 1) return 1;
  return t * t * t * (10 + t * (-15 + 6 * t));
}

double ramp_up(double r, double a, double b) { return smoothstep((r - a) / (b - a)); }

double ramp_down(double r, double a, double b) { return 1 - ramp_up(r, a, b); }

double plateau(double r, double a, double b, double w) {
  return ramp_up(r, a, a + w) * ramp_down(r, b - w, b);
}

namespace {
int g_workers = 1;
}

void set_workers(int n) { g_workers = n < 1 ? 1 : n; }

int workers() { return g_workers; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  int nw = g_workers;
  if (nw <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  if ((std::size_t)nw > n) nw = (int)n;
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(nw);
  std::atomic<bool> failed{false};
  for (int t = 0; t < nw; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          body(i);
        } catch (...) {
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failed.load()) throw error("parallel_for: worker threw");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t x = 14695981039346656037ull;
  for (unsigned char c : s) {
    x ^= c;
    x *= 1099511628211ull;
  }
  return x;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit out;
  std::size_t n = x.size();
  if (n < 2 || y.size() != n) return out;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) return out;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  out.r2 = syy == 0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return out;
}

}  // namespace cylscat
