#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "rsc/errors.hpp"
#include "rsc/rng.hpp"
#include "rsc/rough_path.hpp"
#include "rsc/time_grid.hpp"

namespace rsc {

using DriftFn = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using DiffusionFn = std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using ControlFn = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

inline ControlFn zero_control() {
    return [](double, const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(0); };
}

// Problem record for dX = b dt + sigma dW + (F X + f) d eta.
//
// Coefficient layout per node k:
//   F[k][a]        dx x dx, state coefficient for driver component a
//   f[k]           dx x d
//   Fprime[k][a][b] dx x dx, variation in direction a of the coefficient for
//                   direction b (empty vector => zero)
//   fprime[k][a]   dx x d, variation of f in direction a (empty => zero)
struct AffineRoughSystem {
    int dim_x = 1, dim_w = 0, dim_eta = 1;
    DriftFn b;       // null => 0
    DiffusionFn sigma;  // null => 0
    std::vector<std::vector<Eigen::MatrixXd>> F;
    std::vector<Eigen::MatrixXd> f;
    std::vector<std::vector<std::vector<Eigen::MatrixXd>>> Fprime;
    std::vector<std::vector<Eigen::MatrixXd>> fprime;

    // Rough coefficient F x + f at node k (dx x d).
    Eigen::MatrixXd rough_coeff(std::size_t k, const Eigen::VectorXd& x) const {
        Eigen::MatrixXd g = f.empty() ? Eigen::MatrixXd::Zero(dim_x, dim_eta) : f[k];
        if (!F.empty())
            for (int a = 0; a < dim_eta; ++a) g.col(a) += F[k][a] * x;
        return g;
    }

    static AffineRoughSystem scalar(const TimeGrid& grid, double F_const, double f_const,
                                    DriftFn drift = nullptr, DiffusionFn diffusion = nullptr,
                                    int dim_w = 0) {
        AffineRoughSystem sys;
        sys.dim_x = 1;
        sys.dim_eta = 1;
        sys.dim_w = dim_w;
        sys.b = std::move(drift);
        sys.sigma = std::move(diffusion);
        sys.F.assign(grid.nodes(), {Eigen::MatrixXd::Constant(1, 1, F_const)});
        sys.f.assign(grid.nodes(), Eigen::MatrixXd::Constant(1, 1, f_const));
        return sys;
    }
};

// Solution pair (X, FX+f) plus the Brownian increments used.
struct Trajectory {
    TimeGrid grid;
    std::vector<Eigen::VectorXd> x;
    std::vector<Eigen::MatrixXd> zprime;        // F x + f per node, dx x d
    std::vector<Eigen::VectorXd> w_increments;  // per interval
};

// One explicit second-order (Davie) step over interval k: the level-2 weight
// is the Gubinelli derivative of the solution, F'x + F(Fx+f) + f'.
inline Eigen::VectorXd davie_step(const AffineRoughSystem& sys, const GridRoughPath& driver,
                                  std::size_t k, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u, const Eigen::VectorXd& dW) {
    const double t = driver.grid.t(k);
    const double dt = driver.grid.dt(k);
    const int d = sys.dim_eta;
    Eigen::VectorXd next = x;
    if (sys.b) next += sys.b(t, x, u) * dt;
    if (sys.sigma) next += sys.sigma(t, x, u) * dW;
    const Eigen::MatrixXd g = sys.rough_coeff(k, x);  // Fx + f
    next += g * driver.increment(k, k + 1);
    const Eigen::MatrixXd& lvl2 = driver.level2[k];
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
            const double w = lvl2(a, b);
            if (w == 0.0) continue;
            Eigen::VectorXd col = sys.F.empty() ? Eigen::VectorXd::Zero(sys.dim_x)
                                                : Eigen::VectorXd(sys.F[k][b] * g.col(a));
            if (!sys.Fprime.empty() && !sys.Fprime[k].empty()) col += sys.Fprime[k][a][b] * x;
            if (!sys.fprime.empty() && !sys.fprime[k].empty()) col += sys.fprime[k][a].col(b);
            next += w * col;
        }
    }
    if (!next.allFinite()) throw BlowupError(k);
    return next;
}

// Iterate davie_step with supplied Brownian increments (one per interval).
inline Trajectory solve_sample_with_increments(const AffineRoughSystem& sys,
                                               const GridRoughPath& driver,
                                               const Eigen::VectorXd& x0, const ControlFn& control,
                                               const std::vector<Eigen::VectorXd>& w_increments) {
    if (!x0.allFinite()) throw ParameterError("x0 must be finite");
    const std::size_t n = driver.grid.intervals();
    if (sys.dim_w > 0 && w_increments.size() != n)
        throw DimensionError("one Brownian increment per interval required");
    Trajectory traj;
    traj.grid = driver.grid;
    traj.x.reserve(n + 1);
    traj.zprime.reserve(n + 1);
    traj.w_increments = w_increments;
    traj.x.push_back(x0);
    traj.zprime.push_back(sys.rough_coeff(0, x0));
    const ControlFn& ctl = control ? control : zero_control();
    Eigen::VectorXd x = x0;
    const Eigen::VectorXd zero_dw = Eigen::VectorXd::Zero(std::max(sys.dim_w, 1));
    for (std::size_t k = 0; k < n; ++k) {
        const Eigen::VectorXd u = ctl(driver.grid.t(k), x);
        const Eigen::VectorXd& dw = sys.dim_w > 0 ? w_increments[k] : zero_dw;
        x = davie_step(sys, driver, k, x, u, dw);
        traj.x.push_back(x);
        traj.zprime.push_back(sys.rough_coeff(k + 1, x));
    }
    return traj;
}

inline std::vector<Eigen::VectorXd> sample_brownian_increments(const TimeGrid& grid, int dim_w,
                                                               std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Eigen::VectorXd> incs;
    incs.reserve(grid.intervals());
    for (std::size_t k = 0; k < grid.intervals(); ++k) {
        const double sd = std::sqrt(grid.dt(k));
        Eigen::VectorXd dw(dim_w);
        for (int a = 0; a < dim_w; ++a) dw[a] = sd * rng.gauss();
        incs.push_back(dw);
    }
    return incs;
}

inline Trajectory solve_sample(const AffineRoughSystem& sys, const GridRoughPath& driver,
                               const Eigen::VectorXd& x0, const ControlFn& control,
                               std::uint64_t seed) {
    std::vector<Eigen::VectorXd> incs;
    if (sys.dim_w > 0) incs = sample_brownian_increments(driver.grid, sys.dim_w, seed);
    return solve_sample_with_increments(sys, driver, x0, control, incs);
}

// Deterministic linear RDE dX = (F X + f) d eta (no Brownian part).
inline Trajectory solve_linear_rde(std::vector<std::vector<Eigen::MatrixXd>> F,
                                   std::vector<std::vector<std::vector<Eigen::MatrixXd>>> Fprime,
                                   std::vector<Eigen::MatrixXd> f,
                                   std::vector<std::vector<Eigen::MatrixXd>> fprime,
                                   const GridRoughPath& driver, const Eigen::VectorXd& x0) {
    AffineRoughSystem sys;
    sys.dim_x = static_cast<int>(x0.size());
    sys.dim_w = 0;
    sys.dim_eta = driver.dim();
    sys.F = std::move(F);
    sys.f = std::move(f);
    sys.Fprime = std::move(Fprime);
    sys.fprime = std::move(fprime);
    return solve_sample(sys, driver, x0, nullptr, 0);
}

struct ConvergenceReport {
    std::vector<std::size_t> strides;  // coarsening factors w.r.t. the fine grid
    std::vector<double> errors;        // sup-node distance to the finest solution
    std::vector<double> orders;        // log2(e_h / e_{h/2}) per refinement
    double mean_order = 0.0;
    bool exact = false;  // all errors identically zero
};

namespace detail {
inline TimeGrid stride_grid(const TimeGrid& fine, std::size_t stride) {
    std::vector<double> t;
    for (std::size_t k = 0; k < fine.nodes(); k += stride) t.push_back(fine.t(k));
    if ((fine.nodes() - 1) % stride != 0) t.push_back(fine.horizon());
    return TimeGrid::from_times(std::move(t));
}

// Restrict a node-indexed coefficient sequence to every stride-th node.
template <typename Seq>
Seq stride_seq(const Seq& seq, std::size_t stride, std::size_t fine_nodes) {
    if (seq.empty()) return seq;
    Seq out;
    for (std::size_t k = 0; k < fine_nodes; k += stride) out.push_back(seq[k]);
    if ((fine_nodes - 1) % stride != 0) out.push_back(seq[fine_nodes - 1]);
    return out;
}
}  // namespace detail

// Self-convergence against the finest-grid solution: the same Brownian path
// (increments aggregated per coarse interval) and the Chen-coarsened driver
// are reused at every level, so the only change is the mesh.
inline ConvergenceReport self_convergence_order(const AffineRoughSystem& sys,
                                                const GridRoughPath& driver_fine,
                                                const Eigen::VectorXd& x0, const ControlFn& control,
                                                std::uint64_t seed,
                                                const std::vector<std::size_t>& strides) {
    if (strides.size() < 3) throw ParameterError("need at least 3 meshes");
    const std::size_t fine_nodes = driver_fine.grid.nodes();
    for (std::size_t s : strides) {
        if (s < 1 || (fine_nodes - 1) % s != 0)
            throw ParameterError("strides must divide the fine interval count");
    }
    const Trajectory ref = solve_sample(sys, driver_fine, x0, control, seed);

    ConvergenceReport rep;
    rep.strides = strides;
    for (std::size_t stride : strides) {
        if (stride == 1) {
            rep.errors.push_back(0.0);
            continue;
        }
        const TimeGrid coarse = detail::stride_grid(driver_fine.grid, stride);
        const GridRoughPath drv = coarsen(driver_fine, coarse);
        AffineRoughSystem csys = sys;
        csys.F = detail::stride_seq(sys.F, stride, fine_nodes);
        csys.f = detail::stride_seq(sys.f, stride, fine_nodes);
        csys.Fprime = detail::stride_seq(sys.Fprime, stride, fine_nodes);
        csys.fprime = detail::stride_seq(sys.fprime, stride, fine_nodes);
        std::vector<Eigen::VectorXd> incs;
        if (sys.dim_w > 0) {
            for (std::size_t k = 0; k + 1 < fine_nodes; k += stride) {
                Eigen::VectorXd agg = Eigen::VectorXd::Zero(sys.dim_w);
                for (std::size_t j = k; j < std::min(k + stride, fine_nodes - 1); ++j)
                    agg += ref.w_increments[j];
                incs.push_back(agg);
            }
        }
        const Trajectory sol = solve_sample_with_increments(csys, drv, x0, control, incs);
        double err = 0.0;
        for (std::size_t k = 0; k < coarse.nodes(); ++k) {
            const std::size_t fk = driver_fine.grid.nearest(coarse.t(k));
            err = std::max(err, (sol.x[k] - ref.x[fk]).norm());
        }
        rep.errors.push_back(err);
    }
    bool all_zero = true;
    for (double e : rep.errors) all_zero = all_zero && e == 0.0;
    if (all_zero) {
        rep.exact = true;
        return rep;
    }
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i + 1 < rep.errors.size(); ++i) {
        if (rep.errors[i] <= 0.0 || rep.errors[i + 1] <= 0.0) continue;
        rep.orders.push_back(std::log2(rep.errors[i] / rep.errors[i + 1]));
        sum += rep.orders.back();
        ++cnt;
    }
    rep.mean_order = cnt ? sum / static_cast<double>(cnt) : 0.0;
    return rep;
}

}  // namespace rsc
