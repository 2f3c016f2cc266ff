#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace quad {

// n-point Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
inline std::vector<std::pair<double, double>> gauss_legendre(int n) {
  std::vector<std::pair<double, double>> out;
  for (int i = 1; i <= n; ++i) {
    double x = std::cos(std::numbers::pi * (i - 0.25) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    out.push_back({x, 2.0 / ((1.0 - x * x) * dp * dp)});
  }
  return out;
}

// Composite rule: `panels` equal panels over [a, b], `order` nodes each.
inline std::vector<std::pair<double, double>> composite(double a, double b, int panels,
                                                        int order = 10) {
  const auto gl = gauss_legendre(order);
  std::vector<std::pair<double, double>> out;
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (const auto& [x, w] : gl) out.push_back({mid + 0.5 * h * x, 0.5 * h * w});
  }
  return out;
}

}  // namespace quad
