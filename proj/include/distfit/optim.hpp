#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace distfit {

struct NelderMeadControls {
    double reflection = 1.0;
    double expansion = 2.0;
    double contraction = 0.5;
    double shrink = 0.5;
    double rel_tol = 1e-8;
    double x_tol = 1e-5;  // simplex diameter relative to 1 + |best|, checked alongside rel_tol
    int max_evals = 5000;
    int restarts = 1;  // fresh simplexes built around the best point after convergence
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    int evals = 0;
    bool converged = false;
};

/// Minimizes f with the Nelder-Mead simplex. Non-finite values are treated
/// as +inf so the simplex moves away from infeasible regions.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x0, const NelderMeadControls& ctl = {}) {
    const Eigen::Index n = x0.size();
    NelderMeadResult res;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++res.evals;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };
    if (n == 0) {
        res.x = x0;
        res.value = eval(x0);
        res.converged = true;
        return res;
    }

    Eigen::VectorXd start = x0;
    for (int round = 0; round <= ctl.restarts; ++round) {
        std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(n + 1), start);
        std::vector<double> fv(static_cast<std::size_t>(n + 1));
        fv[0] = eval(start);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double step = std::max(0.1 * std::abs(start[i]), 0.1);
            simplex[static_cast<std::size_t>(i + 1)][i] += step;
            fv[static_cast<std::size_t>(i + 1)] = eval(simplex[static_cast<std::size_t>(i + 1)]);
        }
        std::vector<std::size_t> idx(simplex.size());
        bool converged = false;
        while (res.evals < ctl.max_evals) {
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
            const std::size_t best = idx.front(), worst = idx.back(), second = idx[idx.size() - 2];
            const double spread = fv[worst] - fv[best];
            if (std::isfinite(fv[best]) && spread <= ctl.rel_tol * (std::abs(fv[best]) + ctl.rel_tol)) {
                double diameter = 0.0;
                for (const auto& v : simplex) diameter = std::max(diameter, (v - simplex[best]).cwiseAbs().maxCoeff());
                const bool small = diameter <= ctl.x_tol * (1.0 + simplex[best].cwiseAbs().maxCoeff());
                // A simplex spread along an exactly flat direction cannot shrink further.
                const bool flat = spread <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(fv[best]);
                if (small || flat) {
                    converged = true;
                    break;
                }
            }
            Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
            for (std::size_t k = 0; k + 1 < idx.size(); ++k) centroid += simplex[idx[k]];
            centroid /= static_cast<double>(n);

            const Eigen::VectorXd xr = centroid + ctl.reflection * (centroid - simplex[worst]);
            const double fr = eval(xr);
            if (fr < fv[best]) {
                const Eigen::VectorXd xe = centroid + ctl.expansion * (xr - centroid);
                const double fe = eval(xe);
                if (fe < fr) {
                    simplex[worst] = xe;
                    fv[worst] = fe;
                } else {
                    simplex[worst] = xr;
                    fv[worst] = fr;
                }
                continue;
            }
            if (fr < fv[second]) {
                simplex[worst] = xr;
                fv[worst] = fr;
                continue;
            }
            // Outside contraction when the reflection beats the worst point, inside otherwise.
            const bool outside = fr < fv[worst];
            const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + ctl.contraction * (xr - centroid))
                                               : Eigen::VectorXd(centroid + ctl.contraction * (simplex[worst] - centroid));
            const double fc = eval(xc);
            if (fc < (outside ? fr : fv[worst])) {
                simplex[worst] = xc;
                fv[worst] = fc;
                continue;
            }
            for (std::size_t k = 1; k < idx.size(); ++k) {
                auto& v = simplex[idx[k]];
                v = simplex[best] + ctl.shrink * (v - simplex[best]);
                fv[idx[k]] = eval(v);
            }
        }
        const auto it = std::min_element(fv.begin(), fv.end());
        const std::size_t b = static_cast<std::size_t>(it - fv.begin());
        const bool improved = fv[b] < res.value;
        if (fv[b] <= res.value) {
            res.value = fv[b];
            res.x = simplex[b];
        }
        res.converged = converged;
        if (!converged) break;
        // A restart that finds no improvement confirms the optimum.
        if (round > 0 && !improved) break;
        start = res.x;
    }
    return res;
}

/// Central-difference Hessian with steps rel_step * max(|x_i|, 1).
inline Eigen::MatrixXd finite_difference_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                                 const Eigen::VectorXd& x, double rel_step = 1e-4) {
    const Eigen::Index n = x.size();
    Eigen::VectorXd h(n);
    for (Eigen::Index i = 0; i < n; ++i) h[i] = rel_step * std::max(std::abs(x[i]), 1.0);
    Eigen::MatrixXd H(n, n);
    const double f0 = f(x);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h[i];
        xm[i] -= h[i];
        H(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (h[i] * h[i]);
        for (Eigen::Index j = 0; j < i; ++j) {
            Eigen::VectorXd pp = x, pm = x, mp = x, mm = x;
            pp[i] += h[i]; pp[j] += h[j];
            pm[i] += h[i]; pm[j] -= h[j];
            mp[i] -= h[i]; mp[j] += h[j];
            mm[i] -= h[i]; mm[j] -= h[j];
            H(i, j) = H(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h[i] * h[j]);
        }
    }
    return H;
}

}  // namespace distfit
