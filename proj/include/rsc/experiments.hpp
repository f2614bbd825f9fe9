#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "rsc/errors.hpp"
#include "rsc/lq.hpp"
#include "rsc/rng.hpp"
#include "rsc/rough_path.hpp"
#include "rsc/rsde.hpp"

namespace rsc {

namespace detail {

// Deterministic parallel map: worker threads fill disjoint index ranges of a
// preallocated result vector; aggregation happens afterwards in index order,
// so the result is independent of the thread count.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    threads = std::min<unsigned>(threads, static_cast<unsigned>(n));
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += threads) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

struct MeanStderr {
    double mean = 0.0, stderr_ = 0.0;
};

inline MeanStderr mean_stderr(const std::vector<double>& xs) {
    MeanStderr r;
    if (xs.empty()) return r;
    const double n = static_cast<double>(xs.size());
    r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() < 2) return r;
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    return r;
}

inline std::vector<double> brownian_increments_1d(const TimeGrid& grid, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> dw(grid.intervals());
    for (std::size_t k = 0; k < dw.size(); ++k) dw[k] = std::sqrt(grid.dt(k)) * rng.gauss();
    return dw;
}

}  // namespace detail

struct EnsembleReport {
    std::size_t n_samples = 0;
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t failures = 0;  // blown-up samples, excluded from the mean
    std::uint64_t master_seed = 0;
    std::vector<double> per_sample;  // realized costs of the surviving samples
};

// Monte Carlo estimate of J(u) = E[int h dt + g(X_T)] for an LQ problem
// under a given control law. Per-sample seeds are mix(master_seed, i).
inline EnsembleReport cost_monte_carlo(const LqSpec& spec, const ScalarTransform& tr,
                                       const ScalarControlLaw& law, std::size_t n_samples,
                                       std::uint64_t master_seed, unsigned threads = 1) {
    if (n_samples < 2) throw ParameterError("n_samples must be at least 2");
    std::vector<double> costs(n_samples);
    std::vector<char> failed(n_samples, 0);
    detail::parallel_for(n_samples, threads, [&](std::size_t i) {
        const auto dw = detail::brownian_increments_1d(spec.grid, mix_seed(master_seed, i));
        try {
            costs[i] = simulate_lq_sample(spec, tr, law, dw).cost;
        } catch (const BlowupError&) {
            failed[i] = 1;
        }
    });
    EnsembleReport rep;
    rep.n_samples = n_samples;
    rep.master_seed = master_seed;
    for (std::size_t i = 0; i < n_samples; ++i) {
        if (failed[i])
            ++rep.failures;
        else
            rep.per_sample.push_back(costs[i]);
    }
    if (rep.per_sample.empty()) throw EnsembleFailureError("every sample blew up");
    const auto ms = detail::mean_stderr(rep.per_sample);
    rep.mean = ms.mean;
    rep.stderr_ = ms.stderr_;
    return rep;
}

// Gateaux derivative dJ(u)[v] = E int (Ntil u + hatB Ytilde + hatD Ztilde) v dt
// realized with the LQ adjoint ansatz along the trajectory under u.
inline detail::MeanStderr adjoint_gradient(const LqSpec& spec, const ScalarTransform& tr,
                                           const RiccatiSolution& ric, const ScalarControlLaw& u,
                                           const std::function<double(double)>& v,
                                           std::size_t n_samples, std::uint64_t master_seed,
                                           unsigned threads = 1) {
    if (n_samples < 2) throw ParameterError("n_samples must be at least 2");
    std::vector<double> vals(n_samples);
    detail::parallel_for(n_samples, threads, [&](std::size_t i) {
        const auto dw = detail::brownian_increments_1d(spec.grid, mix_seed(master_seed, i));
        const ClosedLoopRun run = simulate_lq_sample(spec, tr, u, dw);
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < spec.grid.nodes(); ++k) {
            const double yt = ric.P[k] * run.xtilde[k] + ric.q[k];
            const double zt = ric.P[k] * ric.hatD[k] * run.u[k];
            const double duH = spec.Ntil[k] * run.u[k] + ric.hatB[k] * yt + ric.hatD[k] * zt;
            acc += duH * v(spec.grid.t(k)) * spec.grid.dt(k);
        }
        vals[i] = acc;
    });
    return detail::mean_stderr(vals);
}

// Central finite difference (J(u+eps v) - J(u-eps v)) / (2 eps) with common
// random numbers across the two legs.
inline detail::MeanStderr finite_difference_gradient(const LqSpec& spec, const ScalarTransform& tr,
                                                     const ScalarControlLaw& u,
                                                     const std::function<double(double)>& v,
                                                     double epsilon, std::size_t n_samples,
                                                     std::uint64_t master_seed,
                                                     unsigned threads = 1) {
    if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
    if (n_samples < 2) throw ParameterError("n_samples must be at least 2");
    auto shifted = [&](double sign) {
        return ScalarControlLaw([&, sign](std::size_t k, double t, double xt) {
            return u(k, t, xt) + sign * epsilon * v(t);
        });
    };
    const ScalarControlLaw up = shifted(1.0), um = shifted(-1.0);
    std::vector<double> vals(n_samples);
    detail::parallel_for(n_samples, threads, [&](std::size_t i) {
        const auto dw = detail::brownian_increments_1d(spec.grid, mix_seed(master_seed, i));
        const double jp = simulate_lq_sample(spec, tr, up, dw).cost;
        const double jm = simulate_lq_sample(spec, tr, um, dw).cost;
        vals[i] = (jp - jm) / (2.0 * epsilon);
    });
    return detail::mean_stderr(vals);
}

struct GradientCheck {
    double adjoint = 0.0, adjoint_stderr = 0.0;
    double fd = 0.0, fd_half = 0.0, fd_stderr = 0.0;
    double rel_mismatch = 0.0;
    bool richardson_ok = false;  // |fd_half - adjoint| shrinks vs |fd - adjoint|
};

inline GradientCheck gradient_check(const LqSpec& spec, const ScalarTransform& tr,
                                    const RiccatiSolution& ric, const ScalarControlLaw& u,
                                    const std::function<double(double)>& v, double epsilon,
                                    std::size_t n_samples, std::uint64_t master_seed,
                                    unsigned threads = 1) {
    GradientCheck gc;
    const auto adj = adjoint_gradient(spec, tr, ric, u, v, n_samples, master_seed, threads);
    const auto fd = finite_difference_gradient(spec, tr, u, v, epsilon, n_samples, master_seed, threads);
    const auto fd2 =
        finite_difference_gradient(spec, tr, u, v, 0.5 * epsilon, n_samples, master_seed, threads);
    gc.adjoint = adj.mean;
    gc.adjoint_stderr = adj.stderr_;
    gc.fd = fd.mean;
    gc.fd_half = fd2.mean;
    gc.fd_stderr = fd.stderr_;
    const double scale = std::max(std::abs(gc.fd), 1e-14);
    gc.rel_mismatch = std::abs(gc.adjoint - gc.fd) / scale;
    gc.richardson_ok = std::abs(gc.fd_half - gc.fd) <= std::abs(gc.fd) * 0.25 + 4.0 * fd2.stderr_;
    return gc;
}

struct PerturbationCase {
    std::size_t direction = 0;
    double epsilon = 0.0;
    double cost_gap = 0.0;     // mean of J(u*+eps v) - J(u*), common random numbers
    double gap_stderr = 0.0;
    bool pass = false;         // gap >= -2 stderr
};

struct PerturbationReport {
    std::vector<PerturbationCase> cases;
    double base_cost = 0.0;
    bool all_pass = true;
};

// Random bounded perturbation directions: a few Fourier modes with seeded
// coefficients, sup-normalized to 1.
inline std::function<double(double)> perturbation_direction(std::uint64_t seed, double horizon) {
    Rng rng(seed);
    const double a0 = 2.0 * rng.uniform01() - 1.0;
    const double a1 = 2.0 * rng.uniform01() - 1.0;
    const double b1 = 2.0 * rng.uniform01() - 1.0;
    const double a2 = 2.0 * rng.uniform01() - 1.0;
    const double norm = std::abs(a0) + std::abs(a1) + std::abs(b1) + std::abs(a2);
    const double w = 6.283185307179586 / horizon;
    return [=](double t) {
        return (a0 + a1 * std::sin(w * t) + b1 * std::cos(w * t) + a2 * std::sin(2.0 * w * t)) /
               norm;
    };
}

// Empirical sufficiency check: no tested perturbation u* + eps v beats u* by
// more than 2 combined standard errors (per-sample differences, CRN).
inline PerturbationReport perturbation_test(const LqSpec& spec, const ScalarTransform& tr,
                                            const RiccatiSolution& ric,
                                            const std::vector<double>& epsilons,
                                            std::size_t n_directions, std::size_t n_samples,
                                            std::uint64_t master_seed, unsigned threads = 1) {
    const ScalarControlLaw base = make_optimal_control(ric);
    std::vector<double> base_costs(n_samples);
    detail::parallel_for(n_samples, threads, [&](std::size_t i) {
        const auto dw = detail::brownian_increments_1d(spec.grid, mix_seed(master_seed, i));
        base_costs[i] = simulate_lq_sample(spec, tr, base, dw).cost;
    });
    PerturbationReport rep;
    rep.base_cost = detail::mean_stderr(base_costs).mean;

    for (std::size_t dirn = 0; dirn < n_directions; ++dirn) {
        const auto v = perturbation_direction(mix_seed(master_seed, 'v', dirn), spec.grid.horizon());
        for (double eps : epsilons) {
            ScalarControlLaw law = [&, eps](std::size_t k, double t, double xt) {
                double u = base(k, t, xt) + eps * v(t);
                if (spec.control_bounds)
                    u = std::clamp(u, spec.control_bounds->first, spec.control_bounds->second);
                return u;
            };
            std::vector<double> diffs(n_samples);
            detail::parallel_for(n_samples, threads, [&](std::size_t i) {
                const auto dw = detail::brownian_increments_1d(spec.grid, mix_seed(master_seed, i));
                diffs[i] = simulate_lq_sample(spec, tr, law, dw).cost - base_costs[i];
            });
            const auto ms = detail::mean_stderr(diffs);
            PerturbationCase pc;
            pc.direction = dirn;
            pc.epsilon = eps;
            pc.cost_gap = ms.mean;
            pc.gap_stderr = ms.stderr_;
            pc.pass = ms.mean >= -2.0 * ms.stderr_;
            rep.all_pass = rep.all_pass && pc.pass;
            rep.cases.push_back(pc);
        }
    }
    return rep;
}

struct EquivalenceReport {
    std::size_t n_outer = 0, n_inner = 0;
    double nested_mean = 0.0;    // mean over drivers of V(B)
    double nested_stderr = 0.0;  // driver spread plus shared inner-noise term
    double joint_mean = 0.0;     // fused (B, W) estimator
    double joint_stderr = 0.0;
    double gap = 0.0;
    double combined_stderr = 0.0;
    double value_variance = 0.0;  // sample variance of V(B) over drivers
    std::vector<double> values;   // V(B_j) for the surviving drivers
    std::size_t driver_failures = 0;
    bool pass = false;
};

// Rough vs pathwise value: the nested estimator E_B[V(B)] (per-driver
// Riccati optimum, inner Monte Carlo over W with seeds shared across
// drivers) against a fused one-(B,W)-pair-per-driver estimator of the same
// number. Drivers whose Riccati solve fails are excluded from both legs.
inline EquivalenceReport pathwise_equivalence(const LqSpec& spec_template, double fine_mesh,
                                              std::size_t n_outer, std::size_t n_inner,
                                              std::uint64_t master_seed, unsigned threads = 1) {
    if (n_outer < 2 || n_inner < 2) throw ParameterError("need at least 2 outer and inner samples");
    EquivalenceReport rep;
    rep.n_outer = n_outer;
    rep.n_inner = n_inner;

    const std::size_t n_nodes = spec_template.grid.nodes();
    std::vector<std::vector<double>> per_driver_costs;  // [driver][inner]
    std::vector<double> joint_costs;

    for (std::size_t j = 0; j < n_outer; ++j) {
        const GridRoughPath driver = lift_brownian_stratonovich(
            mix_seed(master_seed, 'B', j), 1, fine_mesh, spec_template.grid);
        ScalarTransform tr;
        RiccatiSolution ric;
        try {
            tr = build_lq_transform(spec_template, driver);
            ric = riccati_backward(spec_template, tr);
        } catch (const Error&) {
            ++rep.driver_failures;
            continue;
        }
        const ScalarControlLaw law = make_optimal_control(ric);
        std::vector<double> costs(n_inner);
        detail::parallel_for(n_inner, threads, [&](std::size_t i) {
            // Inner seeds shared across drivers: common random numbers.
            const auto dw =
                detail::brownian_increments_1d(spec_template.grid, mix_seed(master_seed, 'W', i));
            costs[i] = simulate_lq_sample(spec_template, tr, law, dw).cost;
        });
        per_driver_costs.push_back(std::move(costs));
        const auto dwj =
            detail::brownian_increments_1d(spec_template.grid, mix_seed(master_seed, 'J', j));
        joint_costs.push_back(simulate_lq_sample(spec_template, tr, law, dwj).cost);
    }
    if (per_driver_costs.size() < 2) throw EnsembleFailureError("too few surviving drivers");

    std::vector<double> values(per_driver_costs.size());
    for (std::size_t j = 0; j < per_driver_costs.size(); ++j)
        values[j] = detail::mean_stderr(per_driver_costs[j]).mean;
    rep.values = values;
    const auto vm = detail::mean_stderr(values);
    rep.nested_mean = vm.mean;
    rep.value_variance = vm.stderr_ * vm.stderr_ * static_cast<double>(values.size());

    // The shared inner seeds mean the inner Monte Carlo error does not
    // average out over drivers; estimate it from the per-inner-sample
    // driver means and add it in quadrature (slightly conservative).
    std::vector<double> inner_means(n_inner, 0.0);
    for (const auto& row : per_driver_costs)
        for (std::size_t i = 0; i < n_inner; ++i) inner_means[i] += row[i];
    for (auto& m : inner_means) m /= static_cast<double>(per_driver_costs.size());
    const auto im = detail::mean_stderr(inner_means);
    rep.nested_stderr = std::sqrt(vm.stderr_ * vm.stderr_ + im.stderr_ * im.stderr_);

    const auto jm = detail::mean_stderr(joint_costs);
    rep.joint_mean = jm.mean;
    rep.joint_stderr = jm.stderr_;
    rep.gap = std::abs(rep.nested_mean - rep.joint_mean);
    rep.combined_stderr =
        std::sqrt(rep.nested_stderr * rep.nested_stderr + rep.joint_stderr * rep.joint_stderr);
    rep.pass = rep.gap <= 2.0 * rep.combined_stderr;
    (void)n_nodes;
    return rep;
}

struct ItoLyonsRow {
    double distance = 0.0;  // rho_alpha to the reference driver
    double gap = 0.0;       // sup-node state gap to the reference solution
};

// Solve the same system under a sequence of drivers (identical W increments)
// and tabulate driver distance vs solution gap; the last driver is the
// reference.
inline std::vector<ItoLyonsRow> ito_lyons_convergence(const AffineRoughSystem& sys,
                                                      const std::vector<GridRoughPath>& drivers,
                                                      const Eigen::VectorXd& x0,
                                                      const ControlFn& control,
                                                      std::uint64_t seed) {
    if (drivers.size() < 2) throw ParameterError("need at least two drivers");
    for (std::size_t i = 1; i < drivers.size(); ++i) check_same_grid(drivers[0], drivers[i]);
    const GridRoughPath& ref_driver = drivers.back();
    const Trajectory ref = solve_sample(sys, ref_driver, x0, control, seed);
    std::vector<ItoLyonsRow> rows;
    for (std::size_t i = 0; i + 1 < drivers.size(); ++i) {
        const Trajectory sol =
            solve_sample_with_increments(sys, drivers[i], x0, control, ref.w_increments);
        ItoLyonsRow row;
        const auto dist = holder_distance(drivers[i], ref_driver, ref_driver.alpha);
        row.distance = dist.first_level + dist.second_level;
        for (std::size_t k = 0; k < ref.x.size(); ++k)
            row.gap = std::max(row.gap, (sol.x[k] - ref.x[k]).norm());
        rows.push_back(row);
    }
    return rows;
}

}  // namespace rsc
