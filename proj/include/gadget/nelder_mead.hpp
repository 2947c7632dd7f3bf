#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace gadget {

struct SimplexOptions {
    int max_evaluations = 400;
    double f_tolerance = 1e-13;  // spread of simplex values
    double x_tolerance = 1e-9;   // max vertex distance from the best vertex
};

struct SimplexResult {
    std::vector<double> x;
    double value = 0.0;
    int evaluations = 0;
};

// Nelder-Mead minimization with the standard coefficients (1, 2, 0.5, 0.5).
// Deterministic: ties are broken by vertex order.
inline SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                                 const std::vector<double>& step, const SimplexOptions& opt = {}) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> pts(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step[i];
    std::vector<double> vals(n + 1);
    int evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        return f(x);
    };
    for (std::size_t i = 0; i <= n; ++i) vals[i] = eval(pts[i]);

    std::vector<std::size_t> order(n + 1);
    auto sort_simplex = [&] {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        std::vector<std::vector<double>> p2(n + 1);
        std::vector<double> v2(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            p2[i] = pts[order[i]];
            v2[i] = vals[order[i]];
        }
        pts.swap(p2);
        vals.swap(v2);
    };
    auto affine = [&](const std::vector<double>& c, const std::vector<double>& x, double t) {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = c[i] + t * (x[i] - c[i]);
        return r;
    };

    sort_simplex();
    while (evals < opt.max_evaluations) {
        double xs = 0.0;
        for (std::size_t k = 1; k <= n; ++k)
            for (std::size_t i = 0; i < n; ++i) xs = std::max(xs, std::abs(pts[k][i] - pts[0][i]));
        if (vals[n] - vals[0] <= opt.f_tolerance && xs <= opt.x_tolerance) break;
        if (xs <= opt.x_tolerance * 1e-3) break;

        std::vector<double> c(n, 0.0);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i) c[i] += pts[k][i] / static_cast<double>(n);

        const auto xr = affine(c, pts[n], -1.0);
        const double fr = eval(xr);
        if (fr < vals[0]) {
            const auto xe = affine(c, pts[n], -2.0);
            const double fe = eval(xe);
            if (fe < fr) {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if (fr < vals[n - 1]) {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            const bool outside = fr < vals[n];
            const auto xc = outside ? affine(c, xr, 0.5) : affine(c, pts[n], 0.5);
            const double fc = eval(xc);
            if (fc < (outside ? fr : vals[n])) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for (std::size_t k = 1; k <= n; ++k) {
                    pts[k] = affine(pts[0], pts[k], 0.5);
                    vals[k] = eval(pts[k]);
                }
            }
        }
        sort_simplex();
    }
    return {pts[0], vals[0], evals};
}

}  // namespace gadget
