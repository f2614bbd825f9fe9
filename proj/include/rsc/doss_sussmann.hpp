#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "rsc/errors.hpp"
#include "rsc/rough_path.hpp"
#include "rsc/rsde.hpp"

namespace rsc {

// Affine Doss-Sussmann transform phi_t(x) = A_t x + zeta_t. A and its
// inverse are solved from their own RDEs, so product_defect is a genuine
// cross-check rather than a tautology.
struct TransformData {
    TimeGrid grid;
    std::vector<Eigen::MatrixXd> A;
    std::vector<Eigen::MatrixXd> Ainv;
    std::vector<Eigen::VectorXd> zeta;
    double product_defect = 0.0;  // max node norm of Ainv*A - I
};

enum class PhiDirection { forward, inverse };

namespace detail {

// Exponential (log-ODE) one-step generator for the flow dM = F M d eta over
// interval k. exp(Omega) matches the second-order jet
//   I + F_a deta^a + (F_b F_a + F'_{ab}) eta2^{ab}
// to scheme order, and the inverse leg exponentiates the independently built
// mirror generator. For geometric drivers the two generators are exact
// negatives, so the matrix pair stays inverse-consistent down to rounding;
// a plain two-jet pair would leak an O(mesh) product defect instead.
inline Eigen::MatrixXd flow_generator(const std::vector<Eigen::MatrixXd>& Fk,
                                      const std::vector<std::vector<Eigen::MatrixXd>>* Fpk,
                                      const GridRoughPath& driver, std::size_t k) {
    const int d = driver.dim();
    const int dx = static_cast<int>(Fk[0].rows());
    const Eigen::VectorXd inc = driver.increment(k, k + 1);
    Eigen::MatrixXd lin = Eigen::MatrixXd::Zero(dx, dx);
    for (int a = 0; a < d; ++a) lin += inc[a] * Fk[a];
    Eigen::MatrixXd omega = lin - 0.5 * lin * lin;
    const Eigen::MatrixXd& lvl2 = driver.level2[k];
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            const double w = lvl2(a, b);
            if (w == 0.0) continue;
            omega += w * (Fk[b] * Fk[a]);
            if (Fpk) omega += w * (*Fpk)[a][b];
        }
    return omega;
}

inline Eigen::MatrixXd matrix_step_left(const std::vector<Eigen::MatrixXd>& Fk,
                                        const std::vector<std::vector<Eigen::MatrixXd>>* Fpk,
                                        const GridRoughPath& driver, std::size_t k,
                                        const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd next = flow_generator(Fk, Fpk, driver, k).exp() * m;
    if (!next.allFinite()) throw BlowupError(k);
    return next;
}

// Inverse flow dM = -M F d eta: the mirror generator has negated first level
// and F' weights, with the second-order products in reversed composition.
inline Eigen::MatrixXd matrix_step_right(const std::vector<Eigen::MatrixXd>& Fk,
                                         const std::vector<std::vector<Eigen::MatrixXd>>* Fpk,
                                         const GridRoughPath& driver, std::size_t k,
                                         const Eigen::MatrixXd& m) {
    const int d = driver.dim();
    const int dx = static_cast<int>(Fk[0].rows());
    const Eigen::VectorXd inc = driver.increment(k, k + 1);
    Eigen::MatrixXd lin = Eigen::MatrixXd::Zero(dx, dx);
    for (int a = 0; a < d; ++a) lin += inc[a] * Fk[a];
    Eigen::MatrixXd psi = -lin - 0.5 * lin * lin;
    const Eigen::MatrixXd& lvl2 = driver.level2[k];
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            const double w = lvl2(a, b);
            if (w == 0.0) continue;
            psi += w * (Fk[a] * Fk[b]);
            if (Fpk) psi -= w * (*Fpk)[a][b];
        }
    const Eigen::MatrixXd next = m * psi.exp();
    if (!next.allFinite()) throw BlowupError(k);
    return next;
}

}  // namespace detail

inline TransformData build_transform(const std::vector<std::vector<Eigen::MatrixXd>>& F,
                                     const std::vector<std::vector<std::vector<Eigen::MatrixXd>>>& Fprime,
                                     const std::vector<Eigen::MatrixXd>& f,
                                     const std::vector<std::vector<Eigen::MatrixXd>>& fprime,
                                     const GridRoughPath& driver, double tol = 1e-6) {
    const std::size_t n = driver.grid.nodes();
    if (F.size() != n || f.size() != n) throw DimensionError("coefficient grids must match the driver");
    const int dx = static_cast<int>(F[0][0].rows());

    TransformData tr;
    tr.grid = driver.grid;
    tr.A.reserve(n);
    tr.Ainv.reserve(n);
    tr.A.push_back(Eigen::MatrixXd::Identity(dx, dx));
    tr.Ainv.push_back(Eigen::MatrixXd::Identity(dx, dx));
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const auto* fp = Fprime.empty() || Fprime[k].empty() ? nullptr : &Fprime[k];
        tr.A.push_back(detail::matrix_step_left(F[k], fp, driver, k, tr.A.back()));
        tr.Ainv.push_back(detail::matrix_step_right(F[k], fp, driver, k, tr.Ainv.back()));
    }

    // zeta solves d zeta = F zeta d eta + f d eta, the forced linear RDE.
    const Trajectory zt =
        solve_linear_rde(F, Fprime, f, fprime, driver, Eigen::VectorXd::Zero(dx));
    tr.zeta = zt.x;

    double worst = 0.0;
    std::size_t worst_node = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double defect =
            (tr.Ainv[k] * tr.A[k] - Eigen::MatrixXd::Identity(dx, dx)).norm();
        if (defect > worst) {
            worst = defect;
            worst_node = k;
        }
    }
    tr.product_defect = worst;
    if (worst > tol)
        throw InversionError("A^-1 A defect " + std::to_string(worst) + " at node " +
                             std::to_string(worst_node));
    return tr;
}

inline Eigen::VectorXd phi_map(const TransformData& tr, std::size_t k, const Eigen::VectorXd& x,
                               PhiDirection dir) {
    if (k >= tr.grid.nodes()) throw IndexError("node index out of range");
    if (x.size() != tr.A[k].cols()) throw DimensionError("state dimension mismatch");
    if (dir == PhiDirection::forward) return tr.A[k] * x + tr.zeta[k];
    return tr.Ainv[k] * x - tr.Ainv[k] * tr.zeta[k];
}

// Transformed coefficients btilde(t,x~,u) = A^-1 b(t, phi(x~), u) and the
// same for sigma. Evaluation uses exact node lookup (the solvers only ask
// for coefficients at nodes).
struct TransformedCoefficients {
    DriftFn b;
    DiffusionFn sigma;
};

inline TransformedCoefficients transform_coefficients(const TransformData& tr, const DriftFn& b,
                                                      const DiffusionFn& sigma) {
    TransformedCoefficients out;
    if (b)
        out.b = [&tr, b](double t, const Eigen::VectorXd& xt, const Eigen::VectorXd& u) {
            const std::size_t k = tr.grid.nearest(t);
            return Eigen::VectorXd(tr.Ainv[k] * b(t, phi_map(tr, k, xt, PhiDirection::forward), u));
        };
    if (sigma)
        out.sigma = [&tr, sigma](double t, const Eigen::VectorXd& xt, const Eigen::VectorXd& u) {
            const std::size_t k = tr.grid.nearest(t);
            return Eigen::MatrixXd(tr.Ainv[k] *
                                   sigma(t, phi_map(tr, k, xt, PhiDirection::forward), u));
        };
    return out;
}

// Numerical embodiment of the transform identity X = phi(X~): solve the
// rough SDE directly, solve the transformed classical SDE with the same
// Brownian increments (Euler-Maruyama), report the sup-node discrepancy.
inline double crosscheck_transform(const AffineRoughSystem& sys, const GridRoughPath& driver,
                                   const Eigen::VectorXd& x0, const ControlFn& control,
                                   std::uint64_t seed, const TransformData* prebuilt = nullptr) {
    TransformData local;
    if (!prebuilt) {
        local = build_transform(sys.F, sys.Fprime, sys.f, sys.fprime, driver);
        prebuilt = &local;
    }
    const TransformData& tr = *prebuilt;

    const Trajectory rough = solve_sample(sys, driver, x0, control, seed);
    const TransformedCoefficients tc = transform_coefficients(tr, sys.b, sys.sigma);

    const ControlFn& ctl = control ? control : zero_control();
    Eigen::VectorXd xt = x0;  // phi_0 = id
    double worst = (rough.x[0] - phi_map(tr, 0, xt, PhiDirection::forward)).norm();
    for (std::size_t k = 0; k + 1 < driver.grid.nodes(); ++k) {
        const double t = driver.grid.t(k);
        const double dt = driver.grid.dt(k);
        // The control law sees the untransformed state, as in the rough leg.
        const Eigen::VectorXd u = ctl(t, phi_map(tr, k, xt, PhiDirection::forward));
        Eigen::VectorXd next = xt;
        if (tc.b) next += tc.b(t, xt, u) * dt;
        if (tc.sigma && sys.dim_w > 0) next += tc.sigma(t, xt, u) * rough.w_increments[k];
        if (!next.allFinite()) throw BlowupError(k);
        xt = next;
        worst = std::max(worst,
                         (rough.x[k + 1] - phi_map(tr, k + 1, xt, PhiDirection::forward)).norm());
    }
    return worst;
}

}  // namespace rsc
