#include <doctest.h>

#include <cmath>

#include "rsc/experiments.hpp"

using namespace rsc;

namespace {

GridRoughPath unit_time_driver(std::size_t n_intervals) {
    TimeGrid grid = TimeGrid::uniform(1.0, n_intervals);
    std::vector<Eigen::VectorXd> samples;
    for (double t : grid.times()) samples.push_back(Eigen::VectorXd::Constant(1, t));
    return lift_piecewise_linear(samples, grid);
}

struct LqBench {
    LqSpec spec;
    ScalarTransform tr;
    RiccatiSolution ric;
};

LqBench make_bench(std::size_t n_intervals, double Mtil, double Ntil, double Gtil) {
    const GridRoughPath driver = unit_time_driver(n_intervals);
    LqBench b{LqSpec::constants(driver.grid, 0, 1, 0, 0.4, 0, 0, Mtil, Ntil, Gtil, 0.5, 0.2, 1.0),
              {}, {}};
    b.tr = build_lq_transform(b.spec, driver);
    b.ric = riccati_backward(b.spec, b.tr);
    return b;
}

}  // namespace

TEST_CASE("cost_monte_carlo") {
    SUBCASE("zero cost weights give zero mean and spread") {
        const LqBench b = make_bench(1 << 7, 0.0, 1.0, 0.0);
        const EnsembleReport rep =
            cost_monte_carlo(b.spec, b.tr, make_optimal_control(b.ric), 64, 42);
        CHECK(rep.mean == 0.0);
        CHECK(rep.stderr_ == 0.0);
        CHECK(rep.failures == 0);
    }

    SUBCASE("deterministic problem has zero stderr and matches a single run") {
        const GridRoughPath driver = unit_time_driver(1 << 7);
        LqSpec spec =
            LqSpec::constants(driver.grid, 0, 1, 0, 0, 0, 0, 0.3, 1.0, 0.2, 0.5, 0.2, 1.0);
        const ScalarTransform tr = build_lq_transform(spec, driver);
        const RiccatiSolution ric = riccati_backward(spec, tr);
        const EnsembleReport rep =
            cost_monte_carlo(spec, tr, make_optimal_control(ric), 32, 7);
        const ClosedLoopRun oracle =
            simulate_lq_sample(spec, tr, make_optimal_control(ric),
                               std::vector<double>(driver.grid.intervals(), 0.0));
        CHECK(rep.stderr_ <= 1e-12);
        CHECK(rep.mean == doctest::Approx(oracle.cost).epsilon(1e-6));
    }

    SUBCASE("result is independent of the thread count") {
        const LqBench b = make_bench(1 << 7, 0.3, 1.0, 0.2);
        const EnsembleReport r1 =
            cost_monte_carlo(b.spec, b.tr, make_optimal_control(b.ric), 200, 99, 1);
        const EnsembleReport r4 =
            cost_monte_carlo(b.spec, b.tr, make_optimal_control(b.ric), 200, 99, 4);
        CHECK(r1.mean == r4.mean);
        CHECK(r1.stderr_ == r4.stderr_);
    }

    SUBCASE("stderr shrinks like the square root of the sample count") {
        const LqBench b = make_bench(1 << 6, 0.3, 1.0, 0.2);
        const EnsembleReport small =
            cost_monte_carlo(b.spec, b.tr, make_optimal_control(b.ric), 500, 3);
        const EnsembleReport big =
            cost_monte_carlo(b.spec, b.tr, make_optimal_control(b.ric), 8000, 3);
        const double ratio = small.stderr_ / big.stderr_;
        CHECK(ratio > 2.5);
        CHECK(ratio < 6.5);
    }

    SUBCASE("sample count below two is rejected") {
        const LqBench b = make_bench(8, 0.3, 1.0, 0.2);
        CHECK_THROWS_AS(cost_monte_carlo(b.spec, b.tr, make_optimal_control(b.ric), 1, 0),
                        ParameterError);
    }
}

TEST_CASE("adjoint_gradient") {
    const LqBench b = make_bench(1 << 7, 0.3, 1.0, 0.2);

    SUBCASE("zero direction gives exactly zero") {
        const auto g = adjoint_gradient(b.spec, b.tr, b.ric, make_optimal_control(b.ric),
                                        [](double) { return 0.0; }, 16, 1);
        CHECK(g.mean == 0.0);
    }

    SUBCASE("vanishes along the optimum") {
        const auto g = adjoint_gradient(b.spec, b.tr, b.ric, make_optimal_control(b.ric),
                                        [](double) { return 1.0; }, 400, 17);
        CHECK(std::abs(g.mean) <= 2.0 * g.stderr_ + 1e-10);
    }

    SUBCASE("constant shift off the optimum in the costless-state case") {
        // Mtil = Gtil = 0 makes P = q = 0, u* = 0 and J exactly quadratic:
        // dJ(c)[1] = integral of Ntil * c, realized exactly by both methods.
        const LqBench z = make_bench(1 << 7, 0.0, 1.3, 0.0);
        const double c = 0.4;
        const ScalarControlLaw shifted = [&](std::size_t, double, double) { return c; };
        const auto v = [](double) { return 1.0; };
        const auto adj = adjoint_gradient(z.spec, z.tr, z.ric, shifted, v, 50, 2);
        const auto fd = finite_difference_gradient(z.spec, z.tr, shifted, v, 1e-3, 50, 2);
        // Left-point quadrature over [0, 1] of the constant 1.3 * 0.4 covers
        // every interval, so the sum is exact.
        const double exact = 1.3 * c;
        CHECK(adj.mean == doctest::Approx(exact).epsilon(1e-10));
        CHECK(fd.mean == doctest::Approx(exact).epsilon(1e-6));
        CHECK(adj.mean > 0.0);
    }
}

TEST_CASE("finite_difference_gradient") {
    const LqBench b = make_bench(1 << 6, 0.0, 2.0, 0.0);

    SUBCASE("epsilon must be positive") {
        CHECK_THROWS_AS(finite_difference_gradient(b.spec, b.tr, make_optimal_control(b.ric),
                                                   [](double) { return 1.0; }, 0.0, 8, 0),
                        ParameterError);
    }

    SUBCASE("hand-built quadratic: derivative is linear in the offset") {
        // J(u0 + c) for constant controls is a * (u0 + c)^2 with a = Ntil T / 2
        // (up to quadrature): FD recovers 2a(u0 + c) within 1e-6.
        const double u0 = 0.7;
        const ScalarControlLaw base = [&](std::size_t, double, double) { return u0; };
        const auto fd = finite_difference_gradient(b.spec, b.tr, base,
                                                   [](double) { return 1.0; }, 1e-2, 16, 5);
        CHECK(fd.mean == doctest::Approx(2.0 * u0).epsilon(1e-6));
    }
}

TEST_CASE("gradient_check on the benchmark family") {
    // Off-optimum control: the adjoint ansatz holds exactly only at u*, so the
    // benchmark keeps the control weight dominant.
    const LqBench b = make_bench(1 << 8, 0.1, 5.0, 0.05);
    const ScalarControlLaw off = [&](std::size_t k, double, double xt) {
        return optimal_feedback(b.ric, k, xt).value + 0.3;
    };
    const GradientCheck gc = gradient_check(b.spec, b.tr, b.ric, off,
                                            [](double) { return 1.0; }, 1e-2, 2000, 11);
    REQUIRE(std::abs(gc.fd) > 10.0 * gc.fd_stderr);
    CHECK(gc.rel_mismatch < 0.05);
    CHECK(gc.richardson_ok);
}

TEST_CASE("perturbation_test") {
    const LqBench b = make_bench(1 << 7, 0.3, 1.0, 0.2);

    SUBCASE("epsilon zero member gives exact equality") {
        const PerturbationReport rep =
            perturbation_test(b.spec, b.tr, b.ric, {0.0}, 3, 64, 21);
        for (const auto& c : rep.cases) {
            CHECK(c.cost_gap == 0.0);
            CHECK(c.gap_stderr == 0.0);
            CHECK(c.pass);
        }
    }

    SUBCASE("no random perturbation beats the optimum") {
        const PerturbationReport rep =
            perturbation_test(b.spec, b.tr, b.ric, {0.05, 0.2, 0.5}, 6, 500, 77);
        CHECK(rep.all_pass);
        for (const auto& c : rep.cases) CHECK(c.cost_gap >= -2.0 * c.gap_stderr);
    }

    SUBCASE("scaling the control toward zero does not help either") {
        const ScalarControlLaw base = make_optimal_control(b.ric);
        const ScalarControlLaw scaled = [&](std::size_t k, double t, double xt) {
            return 0.7 * base(k, t, xt);
        };
        std::vector<double> diffs;
        for (std::size_t i = 0; i < 400; ++i) {
            const auto dw = detail::brownian_increments_1d(b.spec.grid, mix_seed(5005, i));
            diffs.push_back(simulate_lq_sample(b.spec, b.tr, scaled, dw).cost -
                            simulate_lq_sample(b.spec, b.tr, base, dw).cost);
        }
        const auto ms = detail::mean_stderr(diffs);
        CHECK(ms.mean >= -2.0 * ms.stderr_);
    }
}

TEST_CASE("pathwise_equivalence") {
    TimeGrid grid = TimeGrid::uniform(1.0, 1 << 7);

    SUBCASE("driver-independent problem has vanishing value spread") {
        LqSpec spec = LqSpec::constants(grid, 0, 1, 0, 0.4, 0, 0, 0.3, 1.0, 0.2, 0.0, 0.0, 1.0);
        const EquivalenceReport rep =
            pathwise_equivalence(spec, std::pow(2.0, -9), 8, 50, 1234);
        CHECK(rep.value_variance < 1e-10);
        CHECK(rep.driver_failures == 0);
    }

    SUBCASE("nested and joint estimators agree on the benchmark") {
        LqSpec spec = LqSpec::constants(grid, 0, 1, 0, 0.4, 0, 0, 0.3, 1.0, 0.2, 0.5, 0.2, 1.0);
        const EquivalenceReport rep =
            pathwise_equivalence(spec, std::pow(2.0, -9), 40, 120, 4321);
        CHECK(rep.pass);
        CHECK(rep.gap <= 2.0 * rep.combined_stderr);
        CHECK(rep.values.size() == 40);
    }

    SUBCASE("two master seeds give consistent values on a fixed driver") {
        LqSpec spec = LqSpec::constants(grid, 0, 1, 0, 0.4, 0, 0, 0.3, 1.0, 0.2, 0.5, 0.2, 1.0);
        const GridRoughPath driver =
            lift_brownian_stratonovich(909, 1, std::pow(2.0, -9), grid);
        const ScalarTransform tr = build_lq_transform(spec, driver);
        const RiccatiSolution ric = riccati_backward(spec, tr);
        const EnsembleReport a =
            cost_monte_carlo(spec, tr, make_optimal_control(ric), 2000, 1);
        const EnsembleReport c =
            cost_monte_carlo(spec, tr, make_optimal_control(ric), 2000, 2);
        CHECK(std::abs(a.mean - c.mean) <=
              2.0 * std::sqrt(a.stderr_ * a.stderr_ + c.stderr_ * c.stderr_));
    }

    SUBCASE("too few samples rejected") {
        LqSpec spec = LqSpec::constants(grid, 0, 1, 0, 0.4, 0, 0, 0.3, 1.0, 0.2, 0.0, 0.0, 1.0);
        CHECK_THROWS_AS(pathwise_equivalence(spec, std::pow(2.0, -9), 1, 50, 0), ParameterError);
    }
}

TEST_CASE("ito_lyons_convergence") {
    SUBCASE("constant driver sequence gives zero gaps") {
        const GridRoughPath d = unit_time_driver(1 << 6);
        AffineRoughSystem sys = AffineRoughSystem::scalar(d.grid, 0.5, 0.2);
        const auto rows =
            ito_lyons_convergence(sys, {d, d, d}, Eigen::VectorXd::Ones(1), nullptr, 0);
        for (const auto& r : rows) {
            CHECK(r.distance == 0.0);
            CHECK(r.gap == 0.0);
        }
    }

    SUBCASE("piecewise-linear refinements of one Brownian path") {
        // Approximations at meshes 2^-6 .. 2^-12 of a single 2^-14 path, all
        // coarsened to one shared grid. The driver is two-dimensional and the
        // coefficient matrices do not commute, so the refinements differ in
        // their second level (the area), and distances and gaps both decrease.
        const int fine_lvl = 14;
        TimeGrid fine_grid = TimeGrid::uniform(1.0, std::size_t(1) << fine_lvl);
        const GridRoughPath fine =
            lift_brownian_stratonovich(6001, 2, std::pow(2.0, -fine_lvl), fine_grid);
        TimeGrid shared = TimeGrid::uniform(1.0, 1 << 6);
        std::vector<GridRoughPath> drivers;
        for (int lvl = 6; lvl <= 12; lvl += 2) {
            const std::size_t stride = std::size_t(1) << (fine_lvl - lvl);
            std::vector<Eigen::VectorXd> samples;
            for (std::size_t k = 0; k < fine.grid.nodes(); k += stride)
                samples.push_back(fine.values[k]);
            TimeGrid sub = TimeGrid::uniform(1.0, std::size_t(1) << lvl);
            drivers.push_back(coarsen(lift_piecewise_linear(samples, sub), shared));
        }
        drivers.push_back(coarsen(fine, shared));

        AffineRoughSystem sys;
        sys.dim_x = 2;
        sys.dim_eta = 2;
        Eigen::MatrixXd F1(2, 2), F2(2, 2);
        F1 << 0, -0.8, 0.8, 0;
        F2 << 0.5, 0, 0, -0.25;
        sys.F.assign(shared.nodes(), {F1, F2});
        sys.f.assign(shared.nodes(), Eigen::MatrixXd::Zero(2, 2));
        const auto rows =
            ito_lyons_convergence(sys, drivers, Eigen::Vector2d(1.0, 0.5), nullptr, 0);
        for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
            CHECK(rows[i + 1].distance <= rows[i].distance * 1.1);
            CHECK(rows[i + 1].gap <= rows[i].gap * 1.1);
        }
    }

    SUBCASE("linear response to a smooth driver perturbation") {
        TimeGrid grid = TimeGrid::uniform(1.0, 1 << 8);
        auto perturbed = [&](double eps) {
            std::vector<Eigen::VectorXd> samples;
            for (double t : grid.times())
                samples.push_back(
                    Eigen::VectorXd::Constant(1, t + eps * std::sin(6.283185307179586 * t)));
            return lift_piecewise_linear(samples, grid);
        };
        std::vector<GridRoughPath> drivers{perturbed(0.2), perturbed(0.1), perturbed(0.05),
                                           perturbed(0.0)};
        AffineRoughSystem sys = AffineRoughSystem::scalar(grid, 0.6, 0.2);
        const auto rows =
            ito_lyons_convergence(sys, drivers, Eigen::VectorXd::Ones(1), nullptr, 0);
        for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
            const double ratio = rows[i + 1].gap / rows[i].gap;
            CHECK(ratio == doctest::Approx(0.5).epsilon(0.2));
        }
    }

    SUBCASE("needs at least two drivers") {
        const GridRoughPath d = unit_time_driver(8);
        AffineRoughSystem sys = AffineRoughSystem::scalar(d.grid, 0.5, 0.2);
        CHECK_THROWS_AS(ito_lyons_convergence(sys, {d}, Eigen::VectorXd::Ones(1), nullptr, 0),
                        ParameterError);
    }
}
