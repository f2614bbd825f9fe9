#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rsc/errors.hpp"
#include "rsc/rough_path.hpp"
#include "rsc/time_grid.hpp"

namespace rsc {

// One sample of a stochastic controlled rough path (Z, Z') on a grid.
//
// Values are rows x cols matrices. The Gubinelli derivative is stored per
// driver direction: zprime[n][a] is the directional derivative of Z in the
// a-th driver component, again rows x cols. As an integrand Z must satisfy
// cols == d so that Z * delta_eta is defined; the compensated term pairs as
// (Z' eta2)_i = sum_{a,b} zprime[a](i,b) * eta2(a,b).
struct ControlledSample {
    TimeGrid grid;
    int rows = 1, cols = 1, d = 1;
    std::vector<Eigen::MatrixXd> z;                  // per node
    std::vector<std::vector<Eigen::MatrixXd>> zprime;  // per node, d directions

    // Remainder R^Z_{s,t} = dZ_{s,t} - Z'_s d eta_{s,t}.
    Eigen::MatrixXd remainder(const GridRoughPath& driver, std::size_t i, std::size_t j) const {
        Eigen::MatrixXd r = z[j] - z[i];
        const Eigen::VectorXd inc = driver.increment(i, j);
        for (int a = 0; a < d; ++a) r -= zprime[i][a] * inc[a];
        return r;
    }

    static ControlledSample scalar(const TimeGrid& grid, std::vector<double> values,
                                   std::vector<double> derivs) {
        if (values.size() != grid.nodes() || derivs.size() != grid.nodes())
            throw DimensionError("one value and derivative per node required");
        ControlledSample s;
        s.grid = grid;
        s.rows = s.cols = s.d = 1;
        s.z.reserve(values.size());
        s.zprime.reserve(values.size());
        for (std::size_t n = 0; n < values.size(); ++n) {
            s.z.push_back(Eigen::MatrixXd::Constant(1, 1, values[n]));
            s.zprime.push_back({Eigen::MatrixXd::Constant(1, 1, derivs[n])});
        }
        return s;
    }

    void validate(const GridRoughPath& driver) const {
        if (!grid.same_as(driver.grid)) throw DimensionError("sample and driver grids differ");
        if (d != driver.dim()) throw DimensionError("driver dimension mismatch");
        if (z.size() != grid.nodes() || zprime.size() != grid.nodes())
            throw DimensionError("one entry per grid node required");
    }
};

// Finest-partition compensated Riemann sum
//   sum_n Z_n d eta_n + Z'_n eta2_n over consecutive intervals in [t_i, t_j],
// taken as the discrete definition of the rough stochastic integral.
inline Eigen::VectorXd rough_integral(const ControlledSample& sample, const GridRoughPath& driver,
                                      std::size_t i, std::size_t j) {
    sample.validate(driver);
    if (i >= j || j >= sample.grid.nodes()) throw IndexError("rough_integral needs valid i < j");
    if (sample.cols != sample.d) throw DimensionError("integrand must map driver increments");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(sample.rows);
    for (std::size_t n = i; n < j; ++n) {
        const Eigen::VectorXd inc = driver.values[n + 1] - driver.values[n];
        acc += sample.z[n] * inc;
        const Eigen::MatrixXd& lvl2 = driver.level2[n];
        for (int a = 0; a < sample.d; ++a)
            for (int b = 0; b < sample.d; ++b)
                acc += sample.zprime[n][a].col(b) * lvl2(a, b);
    }
    return acc;
}

// Leibniz product (Zz, Z'z + Zz') nodewise.
inline ControlledSample controlled_product(const ControlledSample& a, const ControlledSample& b) {
    if (!a.grid.same_as(b.grid) || a.d != b.d) throw DimensionError("grids/driver dims differ");
    if (a.cols != b.rows) throw DimensionError("value shapes not composable");
    ControlledSample out;
    out.grid = a.grid;
    out.rows = a.rows;
    out.cols = b.cols;
    out.d = a.d;
    out.z.reserve(a.z.size());
    out.zprime.reserve(a.z.size());
    for (std::size_t n = 0; n < a.z.size(); ++n) {
        out.z.push_back(a.z[n] * b.z[n]);
        std::vector<Eigen::MatrixXd> dp;
        dp.reserve(a.d);
        for (int k = 0; k < a.d; ++k) dp.push_back(a.zprime[n][k] * b.z[n] + a.z[n] * b.zprime[n][k]);
        out.zprime.push_back(std::move(dp));
    }
    return out;
}

// Decomposed process X_t = X_0 + int b dt + int sigma dW + int (X',X'') d eta
// evaluated on a shared grid; xpp[n][a] is the directional derivative of X'.
struct DecomposedProcess {
    TimeGrid grid;
    std::vector<Eigen::VectorXd> x;                 // state, dim_x
    std::vector<Eigen::VectorXd> b;                 // drift values
    std::vector<Eigen::MatrixXd> sigma;             // dim_x x dim_w
    std::vector<Eigen::VectorXd> w_increments;      // per interval
    std::vector<Eigen::MatrixXd> xp;                // dim_x x d per node
    std::vector<std::vector<Eigen::MatrixXd>> xpp;  // per node, d matrices dim_x x d
};

// Max over grid nodes of the defect in the rough Ito formula
//   f(X_t) - f(X_0) - int Df b - int Df sigma dW - int (Y,Y') d eta
//   - 1/2 int trace(sigma sigma^T D2f)
// with (Y, Y') = (Df(X) X', D2f(X)(X')^2 + Df(X) X''). Lebesgue and Brownian
// integrals are left-point sums on the grid.
inline double rough_ito_residual(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& df,
                                 const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& d2f,
                                 const DecomposedProcess& proc, const GridRoughPath& driver) {
    if (!f || !df || !d2f) throw ParameterError("f, Df and D2f callbacks are all required");
    if (!proc.grid.same_as(driver.grid)) throw DimensionError("process and driver grids differ");
    const int d = driver.dim();
    const double f0 = f(proc.x[0]);
    double acc = 0.0, worst = 0.0;
    for (std::size_t n = 0; n + 1 < proc.grid.nodes(); ++n) {
        const Eigen::VectorXd grad = df(proc.x[n]);
        const Eigen::MatrixXd hess = d2f(proc.x[n]);
        const double dt = proc.grid.dt(n);
        acc += grad.dot(proc.b[n]) * dt;
        acc += grad.dot(proc.sigma[n] * proc.w_increments[n]);
        acc += 0.5 * (proc.sigma[n] * proc.sigma[n].transpose() * hess).trace() * dt;
        // (Y, Y') d eta via the compensated sum.
        const Eigen::VectorXd inc = driver.values[n + 1] - driver.values[n];
        const Eigen::MatrixXd y = grad.transpose() * proc.xp[n];  // 1 x d
        acc += (y * inc)(0, 0);
        const Eigen::MatrixXd hx = hess * proc.xp[n];  // dim_x x d
        for (int a = 0; a < d; ++a) {
            const Eigen::MatrixXd yp_a =
                proc.xp[n].col(a).transpose() * hx + grad.transpose() * proc.xpp[n][a];  // 1 x d
            for (int b = 0; b < d; ++b) acc += yp_a(0, b) * driver.level2[n](a, b);
        }
        worst = std::max(worst, std::abs(f(proc.x[n + 1]) - f0 - acc));
    }
    return worst;
}

}  // namespace rsc
