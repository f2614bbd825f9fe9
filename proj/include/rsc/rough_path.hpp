#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rsc/errors.hpp"
#include "rsc/rng.hpp"
#include "rsc/time_grid.hpp"

namespace rsc {

// Discrete alpha-Hoelder rough path on a grid. The second level is stored on
// consecutive intervals only; any other pair is reconstructed through the
// Chen relation, so Chen additivity holds by construction.
struct GridRoughPath {
    TimeGrid grid;
    std::vector<Eigen::VectorXd> values;  // one d-vector per node
    std::vector<Eigen::MatrixXd> level2;  // one d x d matrix per interval
    double alpha = 0.45;

    int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }

    Eigen::VectorXd increment(std::size_t i, std::size_t j) const {
        return values[j] - values[i];
    }

    // eta^(2) over [t_i, t_j]: sum of stored interval areas plus the Chen
    // cross terms delta_k (x) delta_l for k < l.
    Eigen::MatrixXd chen_area(std::size_t i, std::size_t j) const {
        if (i >= j) throw IndexError("chen_area needs i < j");
        if (j >= grid.nodes()) throw IndexError("node index out of range");
        const int d = dim();
        Eigen::MatrixXd area = Eigen::MatrixXd::Zero(d, d);
        Eigen::VectorXd run = Eigen::VectorXd::Zero(d);  // values[k] - values[i]
        for (std::size_t k = i; k < j; ++k) {
            const Eigen::VectorXd inc = values[k + 1] - values[k];
            area += level2[k] + run * inc.transpose();
            run += inc;
        }
        return area;
    }
};

inline void check_same_grid(const GridRoughPath& a, const GridRoughPath& b) {
    if (!a.grid.same_as(b.grid) || a.dim() != b.dim())
        throw DimensionError("rough paths live on different grids/dimensions");
}

// Canonical lift of the piecewise-linear interpolation of the samples:
// over each interval the second level is exactly 1/2 delta (x) delta.
inline GridRoughPath lift_piecewise_linear(const std::vector<Eigen::VectorXd>& samples,
                                           const TimeGrid& grid, double alpha = 0.45) {
    if (samples.size() != grid.nodes())
        throw DimensionError("one sample per grid node required");
    GridRoughPath path;
    path.grid = grid;
    path.values = samples;
    path.alpha = alpha;
    path.level2.reserve(grid.intervals());
    for (std::size_t k = 0; k < grid.intervals(); ++k) {
        const Eigen::VectorXd inc = samples[k + 1] - samples[k];
        path.level2.push_back(0.5 * inc * inc.transpose());
    }
    return path;
}

// Restrict a rough path to a coarser grid whose nodes are a subset of the
// fine nodes; coarse areas come from chen_area so consistency is exact.
inline GridRoughPath coarsen(const GridRoughPath& fine, const TimeGrid& coarse) {
    std::vector<std::size_t> idx(coarse.nodes());
    for (std::size_t k = 0; k < coarse.nodes(); ++k) {
        idx[k] = fine.grid.nearest(coarse.t(k));
        if (std::abs(fine.grid.t(idx[k]) - coarse.t(k)) > 1e-9 * (1.0 + coarse.horizon()))
            throw DimensionError("coarse grid nodes must coincide with fine nodes");
    }
    GridRoughPath out;
    out.grid = coarse;
    out.alpha = fine.alpha;
    out.values.reserve(coarse.nodes());
    for (std::size_t k = 0; k < coarse.nodes(); ++k) out.values.push_back(fine.values[idx[k]]);
    out.level2.reserve(coarse.intervals());
    for (std::size_t k = 0; k + 1 < coarse.nodes(); ++k)
        out.level2.push_back(fine.chen_area(idx[k], idx[k + 1]));
    return out;
}

// Stratonovich Brownian rough path: sample Brownian increments on a
// refinement of the coarse grid, lift piecewise-linearly, Chen-coarsen.
// Piecewise-linear lifts are geometric, so the symmetric part of each coarse
// increment equals 1/2 dB (x) dB exactly. With ito_correction the bracket
// 1/2 dt Id is subtracted from each coarse interval.
inline GridRoughPath lift_brownian_stratonovich(std::uint64_t seed, int dims, double fine_mesh,
                                                const TimeGrid& coarse, double alpha = 0.45,
                                                bool ito_correction = false) {
    if (dims < 1) throw ParameterError("dims must be >= 1");
    if (!(fine_mesh > 0.0)) throw ParameterError("fine_mesh must be positive");
    if (fine_mesh > coarse.mesh() * (1.0 + 1e-12))
        throw ParameterError("fine_mesh must not exceed the coarse mesh");

    // Fine grid: each coarse interval split into equal sub-steps of size
    // <= fine_mesh, so the coarse nodes are fine nodes exactly.
    std::vector<double> fine_times{0.0};
    std::vector<std::size_t> coarse_idx{0};
    for (std::size_t k = 0; k < coarse.intervals(); ++k) {
        const double a = coarse.t(k), b = coarse.t(k + 1);
        const auto m = static_cast<std::size_t>(std::ceil((b - a) / fine_mesh - 1e-12));
        for (std::size_t j = 1; j <= m; ++j)
            fine_times.push_back(j == m ? b : a + (b - a) * static_cast<double>(j) / static_cast<double>(m));
        coarse_idx.push_back(fine_times.size() - 1);
    }
    TimeGrid fine_grid = TimeGrid::from_times(std::move(fine_times));

    Rng rng(seed);
    std::vector<Eigen::VectorXd> samples(fine_grid.nodes());
    samples[0] = Eigen::VectorXd::Zero(dims);
    for (std::size_t k = 0; k + 1 < fine_grid.nodes(); ++k) {
        const double sd = std::sqrt(fine_grid.dt(k));
        Eigen::VectorXd inc(dims);
        for (int a = 0; a < dims; ++a) inc[a] = sd * rng.gauss();
        samples[k + 1] = samples[k] + inc;
    }
    GridRoughPath fine = lift_piecewise_linear(samples, fine_grid, alpha);
    GridRoughPath out = coarsen(fine, coarse);
    if (ito_correction) {
        for (std::size_t k = 0; k < out.grid.intervals(); ++k)
            out.level2[k] -= 0.5 * out.grid.dt(k) * Eigen::MatrixXd::Identity(dims, dims);
    }
    return out;
}

struct RoughDistanceReport {
    double first_level = 0.0;   // sup |d eta - d etabar| / (t-s)^alpha over grid pairs
    double second_level = 0.0;  // sup |eta2 - etabar2| / (t-s)^{2 alpha}
};

// Discrete restriction of rho_alpha to grid pairs, reconstructing second
// levels through Chen incrementally (O(n^2 d^2)).
inline RoughDistanceReport holder_distance(const GridRoughPath& a, const GridRoughPath& b,
                                           double alpha) {
    check_same_grid(a, b);
    const int d = a.dim();
    const std::size_t n = a.grid.nodes();
    RoughDistanceReport rep;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        Eigen::MatrixXd area_a = Eigen::MatrixXd::Zero(d, d), area_b = Eigen::MatrixXd::Zero(d, d);
        Eigen::VectorXd run_a = Eigen::VectorXd::Zero(d), run_b = Eigen::VectorXd::Zero(d);
        for (std::size_t j = i + 1; j < n; ++j) {
            const Eigen::VectorXd inc_a = a.values[j] - a.values[j - 1];
            const Eigen::VectorXd inc_b = b.values[j] - b.values[j - 1];
            area_a += a.level2[j - 1] + run_a * inc_a.transpose();
            area_b += b.level2[j - 1] + run_b * inc_b.transpose();
            run_a += inc_a;
            run_b += inc_b;
            const double gap = a.grid.t(j) - a.grid.t(i);
            const double lvl1 = (run_a - run_b).norm() / std::pow(gap, alpha);
            const double lvl2 = (area_a - area_b).norm() / std::pow(gap, 2.0 * alpha);
            if (lvl1 > rep.first_level) rep.first_level = lvl1;
            if (lvl2 > rep.second_level) rep.second_level = lvl2;
        }
    }
    return rep;
}

namespace detail {
inline std::string fmt_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}
}  // namespace detail

// Columnar format: header "d n alpha T", then n node rows "t v_1..v_d", then
// n-1 interval rows of the d^2 level-2 entries, row-major.
inline void save_rough_path(const GridRoughPath& path, std::ostream& os) {
    const int d = path.dim();
    const std::size_t n = path.grid.nodes();
    os << d << ' ' << n << ' ' << detail::fmt_double(path.alpha) << ' '
       << detail::fmt_double(path.grid.horizon()) << '\n';
    for (std::size_t k = 0; k < n; ++k) {
        os << detail::fmt_double(path.grid.t(k));
        for (int a = 0; a < d; ++a) os << ' ' << detail::fmt_double(path.values[k][a]);
        os << '\n';
    }
    for (std::size_t k = 0; k + 1 < n; ++k) {
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                os << (a == 0 && b == 0 ? "" : " ") << detail::fmt_double(path.level2[k](a, b));
        os << '\n';
    }
}

inline GridRoughPath load_rough_path(std::istream& is) {
    int d = 0;
    std::size_t n = 0;
    double alpha = 0.0, horizon = 0.0;
    if (!(is >> d >> n >> alpha >> horizon)) throw ParameterError("bad rough path header");
    if (d < 1 || n < 2) throw ParameterError("bad rough path header");
    std::vector<double> times(n);
    std::vector<Eigen::VectorXd> values(n, Eigen::VectorXd(d));
    for (std::size_t k = 0; k < n; ++k) {
        if (!(is >> times[k])) throw ParameterError("truncated node rows");
        for (int a = 0; a < d; ++a)
            if (!(is >> values[k][a])) throw ParameterError("truncated node rows");
    }
    GridRoughPath path;
    path.grid = TimeGrid::from_times(std::move(times));
    path.values = std::move(values);
    path.alpha = alpha;
    path.level2.assign(n - 1, Eigen::MatrixXd(d, d));
    for (std::size_t k = 0; k + 1 < n; ++k)
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                if (!(is >> path.level2[k](a, b))) throw ParameterError("truncated level-2 rows");
    return path;
}

}  // namespace rsc
