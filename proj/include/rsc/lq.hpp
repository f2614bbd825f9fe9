#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "rsc/doss_sussmann.hpp"
#include "rsc/errors.hpp"
#include "rsc/rng.hpp"
#include "rsc/rough_path.hpp"
#include "rsc/rsde.hpp"
#include "rsc/time_grid.hpp"

namespace rsc {

// Scalar LQ problem data. Time functions are per-node sequences; the
// closed-form Riccati solve is restricted to the simplified case
// Atil = Ctil = btil = sigtil = 0 with deterministic smooth F, f
// (Fprime = fprime = 0). The simulators accept general coefficients.
struct LqSpec {
    TimeGrid grid;
    std::vector<double> Atil, Btil, Ctil, Dtil, btil, sigtil;
    std::vector<double> Mtil, Ntil;
    double Gtil = 0.0;
    std::vector<double> F, Fprime, f, fprime;
    double x0 = 0.0;
    double T = 1.0;
    std::optional<std::pair<double, double>> control_bounds;
    double n_min = 1e-8;

    static LqSpec constants(const TimeGrid& grid, double Atil, double Btil, double Ctil,
                            double Dtil, double btil, double sigtil, double Mtil, double Ntil,
                            double Gtil, double F, double f, double x0) {
        LqSpec s;
        s.grid = grid;
        const std::size_t n = grid.nodes();
        s.Atil.assign(n, Atil);
        s.Btil.assign(n, Btil);
        s.Ctil.assign(n, Ctil);
        s.Dtil.assign(n, Dtil);
        s.btil.assign(n, btil);
        s.sigtil.assign(n, sigtil);
        s.Mtil.assign(n, Mtil);
        s.Ntil.assign(n, Ntil);
        s.Gtil = Gtil;
        s.F.assign(n, F);
        s.Fprime.assign(n, 0.0);
        s.f.assign(n, f);
        s.fprime.assign(n, 0.0);
        s.x0 = x0;
        s.T = grid.horizon();
        return s;
    }

    void validate() const {
        const std::size_t n = grid.nodes();
        for (const auto* seq : {&Atil, &Btil, &Ctil, &Dtil, &btil, &sigtil, &Mtil, &Ntil, &F,
                                &Fprime, &f, &fprime})
            if (seq->size() != n) throw DimensionError("LQ coefficient length mismatch");
        for (double v : Ntil)
            if (!(v >= n_min)) throw ParameterError("Ntil must stay above n_min");
        for (double v : Mtil)
            if (v < 0.0) throw ParameterError("Mtil must be nonnegative");
        if (Gtil < 0.0) throw ParameterError("Gtil must be nonnegative");
    }

    bool closed_form_scope() const {
        for (std::size_t k = 0; k < grid.nodes(); ++k)
            if (Atil[k] != 0.0 || Ctil[k] != 0.0 || btil[k] != 0.0 || sigtil[k] != 0.0 ||
                Fprime[k] != 0.0 || fprime[k] != 0.0)
                return false;
        return true;
    }
};

// Scalar view of a TransformData for the LQ pipeline.
struct ScalarTransform {
    TimeGrid grid;
    std::vector<double> A, Ainv, zeta;
    double product_defect = 0.0;
};

inline ScalarTransform build_lq_transform(const LqSpec& spec, const GridRoughPath& driver,
                                          double tol = 1e-6) {
    if (driver.dim() != 1) throw DimensionError("LQ pipeline expects a one-dimensional driver");
    if (!spec.grid.same_as(driver.grid)) throw DimensionError("spec and driver grids differ");
    const std::size_t n = spec.grid.nodes();
    std::vector<std::vector<Eigen::MatrixXd>> F(n);
    std::vector<std::vector<std::vector<Eigen::MatrixXd>>> Fp(n);
    std::vector<Eigen::MatrixXd> f(n);
    std::vector<std::vector<Eigen::MatrixXd>> fp(n);
    for (std::size_t k = 0; k < n; ++k) {
        F[k] = {Eigen::MatrixXd::Constant(1, 1, spec.F[k])};
        Fp[k] = {{Eigen::MatrixXd::Constant(1, 1, spec.Fprime[k])}};
        f[k] = Eigen::MatrixXd::Constant(1, 1, spec.f[k]);
        fp[k] = {Eigen::MatrixXd::Constant(1, 1, spec.fprime[k])};
    }
    const TransformData tr = build_transform(F, Fp, f, fp, driver, tol);
    ScalarTransform out;
    out.grid = tr.grid;
    out.product_defect = tr.product_defect;
    out.A.reserve(n);
    out.Ainv.reserve(n);
    out.zeta.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.A.push_back(tr.A[k](0, 0));
        out.Ainv.push_back(tr.Ainv[k](0, 0));
        out.zeta.push_back(tr.zeta[k][0]);
    }
    return out;
}

// Backward pair (P, q) plus the hat coefficients used by the feedback law.
struct RiccatiSolution {
    TimeGrid grid;
    std::vector<double> P, q;
    std::vector<double> hatB, hatD, hatM;
    double hatG = 0.0;
    double denom_min = 0.0;  // min over nodes of Ntil + hatD^2 P
    std::vector<double> Ntil;
    std::optional<std::pair<double, double>> control_bounds;
};

struct HatCoefficients {
    std::vector<double> hatB, hatD, hatM;
    double hatG = 0.0;
};

// hatB = A^-1 Btil, hatD = A^-1 Dtil, hatM = A Mtil, hatG = A_T Gtil.
inline HatCoefficients hat_coefficients(const LqSpec& spec, const ScalarTransform& tr) {
    if (!spec.grid.same_as(tr.grid)) throw DimensionError("spec and transform grids differ");
    HatCoefficients h;
    const std::size_t n = spec.grid.nodes();
    h.hatB.resize(n);
    h.hatD.resize(n);
    h.hatM.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        h.hatB[k] = tr.Ainv[k] * spec.Btil[k];
        h.hatD[k] = tr.Ainv[k] * spec.Dtil[k];
        h.hatM[k] = tr.A[k] * spec.Mtil[k];
    }
    h.hatG = tr.A.back() * spec.Gtil;
    return h;
}

// Backward integration of
//   Pdot = hatB^2 (Ntil + hatD^2 P)^-1 P^2 - hatM A,   P_T = 2 hatG A_T
//   qdot = P hatB^2 (Ntil + hatD^2 P)^-1 q  - hatM zeta, q_T = 2 hatG zeta_T
// with a classical fourth-order one-step method on the grid; coefficients
// between nodes are frozen at the left node. q is solved after P.
inline RiccatiSolution riccati_backward(const LqSpec& spec, const ScalarTransform& tr) {
    spec.validate();
    if (!spec.closed_form_scope())
        throw ParameterError("riccati_backward requires the closed-form LQ scope");
    const HatCoefficients h = hat_coefficients(spec, tr);
    const std::size_t n = spec.grid.nodes();

    RiccatiSolution ric;
    ric.grid = spec.grid;
    ric.hatB = h.hatB;
    ric.hatD = h.hatD;
    ric.hatM = h.hatM;
    ric.hatG = h.hatG;
    ric.Ntil = spec.Ntil;
    ric.control_bounds = spec.control_bounds;
    ric.P.assign(n, 0.0);
    ric.q.assign(n, 0.0);
    ric.P[n - 1] = 2.0 * h.hatG * tr.A[n - 1];
    ric.q[n - 1] = 2.0 * h.hatG * tr.zeta[n - 1];
    ric.denom_min = spec.Ntil[n - 1] + h.hatD[n - 1] * h.hatD[n - 1] * ric.P[n - 1];

    for (std::size_t k = n - 1; k-- > 0;) {
        const double dt = spec.grid.dt(k);
        const double hB2 = h.hatB[k] * h.hatB[k];
        const double hD2 = h.hatD[k] * h.hatD[k];
        const double src = h.hatM[k] * tr.A[k];
        const double nt = spec.Ntil[k];
        auto pdot = [&](double p) {
            const double denom = nt + hD2 * p;
            if (denom <= spec.n_min) throw RiccatiSingularError(spec.grid.t(k), denom);
            return hB2 * p * p / denom - src;
        };
        // RK4 from t_{k+1} down to t_k (step -dt).
        const double p1 = ric.P[k + 1];
        const double k1 = pdot(p1);
        const double k2 = pdot(p1 - 0.5 * dt * k1);
        const double k3 = pdot(p1 - 0.5 * dt * k2);
        const double k4 = pdot(p1 - dt * k3);
        ric.P[k] = p1 - dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (ric.P[k] < -1e-10) throw PositivityError("Riccati solution lost positivity");
        ric.denom_min = std::min(ric.denom_min, nt + hD2 * ric.P[k]);
        if (ric.denom_min <= spec.n_min)
            throw RiccatiSingularError(spec.grid.t(k), ric.denom_min);
    }
    for (std::size_t k = n - 1; k-- > 0;) {
        const double dt = spec.grid.dt(k);
        const double hB2 = h.hatB[k] * h.hatB[k];
        const double hD2 = h.hatD[k] * h.hatD[k];
        const double src = h.hatM[k] * tr.zeta[k];
        // P interpolated linearly along the RK4 substeps; the rate uses the
        // left-node coefficients like the P sweep.
        auto pmid = [&](double frac) { return ric.P[k + 1] + frac * (ric.P[k] - ric.P[k + 1]); };
        auto qdot = [&](double q, double p) {
            return p * hB2 * q / (spec.Ntil[k] + hD2 * p) - src;
        };
        const double q1 = ric.q[k + 1];
        const double k1 = qdot(q1, pmid(0.0));
        const double k2 = qdot(q1 - 0.5 * dt * k1, pmid(0.5));
        const double k3 = qdot(q1 - 0.5 * dt * k2, pmid(0.5));
        const double k4 = qdot(q1 - dt * k3, pmid(1.0));
        ric.q[k] = q1 - dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return ric;
}

struct FeedbackValue {
    double raw = 0.0;      // unconstrained argmin of the Hamiltonian
    double value = 0.0;    // raw clamped to the control bounds, if any
    bool saturated = false;
};

// u* = -(Ntil + hatD^2 P)^-1 (hatB P X~ + hatB q).
inline FeedbackValue optimal_feedback(const RiccatiSolution& ric, std::size_t k, double xtilde) {
    if (k >= ric.grid.nodes()) throw IndexError("node index out of range");
    const double denom = ric.Ntil[k] + ric.hatD[k] * ric.hatD[k] * ric.P[k];
    FeedbackValue out;
    out.raw = -(ric.hatB[k] * ric.P[k] * xtilde + ric.hatB[k] * ric.q[k]) / denom;
    out.value = out.raw;
    if (ric.control_bounds) {
        out.value = std::clamp(out.raw, ric.control_bounds->first, ric.control_bounds->second);
        out.saturated = out.value != out.raw;
    }
    return out;
}

// Scalar LQ Hamiltonian
//   H = 1/2 Ntil u^2 + A^-1 (Btil y~ + Dtil z~) u
//     + A^-1 (Atil x y~ + btil y~ + Ctil x z~ + sigtil z~) + 1/2 Mtil x^2.
inline double hamiltonian_eval(const LqSpec& spec, const ScalarTransform& tr, std::size_t k,
                               double x, double ytilde, double ztilde, double u) {
    if (k >= spec.grid.nodes()) throw IndexError("node index out of range");
    const double ai = tr.Ainv[k];
    return 0.5 * spec.Ntil[k] * u * u + ai * (spec.Btil[k] * ytilde + spec.Dtil[k] * ztilde) * u +
           ai * (spec.Atil[k] * x * ytilde + spec.btil[k] * ytilde + spec.Ctil[k] * x * ztilde +
                 spec.sigtil[k] * ztilde) +
           0.5 * spec.Mtil[k] * x * x;
}

struct AdjointPair {
    std::vector<double> ytilde, ztilde;
};

// LQ ansatz Y~ = P X~ + q and Z~ = P hatD u, nodewise.
inline AdjointPair adjoint_pair_lq(const RiccatiSolution& ric, const std::vector<double>& xtilde,
                                   const std::vector<double>& control) {
    if (xtilde.size() != ric.grid.nodes() || control.size() != ric.grid.nodes())
        throw DimensionError("trajectories must live on the Riccati grid");
    AdjointPair out;
    out.ytilde.resize(xtilde.size());
    out.ztilde.resize(xtilde.size());
    for (std::size_t k = 0; k < xtilde.size(); ++k) {
        out.ytilde[k] = ric.P[k] * xtilde[k] + ric.q[k];
        out.ztilde[k] = ric.P[k] * ric.hatD[k] * control[k];
    }
    return out;
}

// Control law in transformed coordinates: u = law(k, t, xtilde).
using ScalarControlLaw = std::function<double(std::size_t, double, double)>;

inline ScalarControlLaw make_optimal_control(const RiccatiSolution& ric) {
    return [&ric](std::size_t k, double, double xt) { return optimal_feedback(ric, k, xt).value; };
}

struct ClosedLoopRun {
    TimeGrid grid;
    std::vector<double> x, xtilde, u;
    double cost = 0.0;
};

// One sample of the transformed classical SDE under a control law
// (Euler-Maruyama in transformed coordinates), mapped back to X, with the
// realized cost 1/2 (Mtil X^2 + Ntil u^2) by left-point quadrature plus the
// terminal Gtil X_T^2. General coefficients are accepted here.
inline ClosedLoopRun simulate_lq_sample(const LqSpec& spec, const ScalarTransform& tr,
                                        const ScalarControlLaw& law,
                                        const std::vector<double>& w_increments) {
    if (w_increments.size() != spec.grid.intervals())
        throw DimensionError("one Brownian increment per interval required");
    const std::size_t n = spec.grid.nodes();
    ClosedLoopRun run;
    run.grid = spec.grid;
    run.x.resize(n);
    run.xtilde.resize(n);
    run.u.resize(n);
    double xt = spec.x0;
    double cost = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        run.xtilde[k] = xt;
        const double x = tr.A[k] * xt + tr.zeta[k];
        run.x[k] = x;
        const double u = law(k, spec.grid.t(k), xt);
        run.u[k] = u;
        if (k + 1 == n) break;
        const double dt = spec.grid.dt(k);
        cost += 0.5 * (spec.Mtil[k] * x * x + spec.Ntil[k] * u * u) * dt;
        const double ai = tr.Ainv[k];
        const double bt = ai * (spec.Atil[k] * x + spec.Btil[k] * u + spec.btil[k]);
        const double st = ai * (spec.Ctil[k] * x + spec.Dtil[k] * u + spec.sigtil[k]);
        xt += bt * dt + st * w_increments[k];
        if (!std::isfinite(xt)) throw BlowupError(k);
    }
    cost += spec.Gtil * run.x.back() * run.x.back();
    run.cost = cost;
    return run;
}

inline ClosedLoopRun simulate_closed_loop(const LqSpec& spec, const ScalarTransform& tr,
                                          const RiccatiSolution& ric, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> dw(spec.grid.intervals());
    for (std::size_t k = 0; k < dw.size(); ++k) dw[k] = std::sqrt(spec.grid.dt(k)) * rng.gauss();
    return simulate_lq_sample(spec, tr, make_optimal_control(ric), dw);
}

// Nodewise SMP stationarity residual Ntil u + hatB (P X~ + q) + hatD (P hatD u)
// along a run; an algebraic identity at the unconstrained optimum.
inline double stationarity_residual(const RiccatiSolution& ric, const ClosedLoopRun& run) {
    double worst = 0.0;
    for (std::size_t k = 0; k < ric.grid.nodes(); ++k) {
        const double u = run.u[k];
        const double r = ric.Ntil[k] * u + ric.hatB[k] * (ric.P[k] * run.xtilde[k] + ric.q[k]) +
                         ric.hatD[k] * (ric.P[k] * ric.hatD[k] * u);
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

}  // namespace rsc
