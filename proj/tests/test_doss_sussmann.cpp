#include <doctest.h>

#include <cmath>

#include "rsc/doss_sussmann.hpp"

using namespace rsc;

namespace {

GridRoughPath scaled_time_driver(std::size_t n_intervals, double scale) {
    TimeGrid grid = TimeGrid::uniform(1.0, n_intervals);
    std::vector<Eigen::VectorXd> samples;
    for (double t : grid.times()) samples.push_back(Eigen::VectorXd::Constant(1, scale * t));
    return lift_piecewise_linear(samples, grid);
}

std::vector<std::vector<Eigen::MatrixXd>> const_F(std::size_t nodes, double v) {
    return std::vector<std::vector<Eigen::MatrixXd>>(nodes, {Eigen::MatrixXd::Constant(1, 1, v)});
}

std::vector<Eigen::MatrixXd> const_f(std::size_t nodes, double v) {
    return std::vector<Eigen::MatrixXd>(nodes, Eigen::MatrixXd::Constant(1, 1, v));
}

}  // namespace

TEST_CASE("zero F gives the identity flow and zeta as a plain rough integral") {
    const GridRoughPath driver = scaled_time_driver(64, 1.5);
    const std::size_t n = driver.grid.nodes();
    const TransformData tr =
        build_transform(const_F(n, 0.0), {}, const_f(n, 0.4), {}, driver);
    for (std::size_t k = 0; k < n; ++k) {
        CHECK(tr.A[k](0, 0) == 1.0);
        CHECK(tr.Ainv[k](0, 0) == 1.0);
        // Constant f integrates the driver increment exactly.
        CHECK(tr.zeta[k][0] ==
              doctest::Approx(0.4 * (driver.values[k][0] - driver.values[0][0])).epsilon(1e-13));
    }
    CHECK(tr.product_defect == 0.0);
}

TEST_CASE("scalar exponential flow: F = 0.5 with total increment 2") {
    const GridRoughPath driver = scaled_time_driver(1 << 10, 2.0);
    const std::size_t n = driver.grid.nodes();
    const TransformData tr = build_transform(const_F(n, 0.5), {}, const_f(n, 0.0), {}, driver);
    CHECK(tr.A.back()(0, 0) == doctest::Approx(std::exp(1.0)).epsilon(1e-6));
    CHECK(tr.Ainv.back()(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
    CHECK(tr.product_defect < 1e-8);
    CHECK(tr.zeta.back()[0] == 0.0);
}

TEST_CASE("A and its independently solved inverse stay consistent on Brownian drivers") {
    TimeGrid coarse = TimeGrid::uniform(1.0, 1 << 14);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const GridRoughPath driver =
            lift_brownian_stratonovich(mix_seed(2024, s), 1, std::pow(2.0, -14), coarse);
        const std::size_t n = driver.grid.nodes();
        const TransformData tr =
            build_transform(const_F(n, 1.0), {}, const_f(n, 0.0), {}, driver);
        CHECK(tr.product_defect < 1e-6);
    }
}

TEST_CASE("phi_map") {
    TransformData tr;
    tr.grid = TimeGrid::uniform(1.0, 1);
    tr.A = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Constant(1, 1, 2.0)};
    tr.Ainv = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Constant(1, 1, 0.5)};
    tr.zeta = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 3.0)};

    SUBCASE("node 0 is the identity both ways") {
        const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, -1.7);
        CHECK(phi_map(tr, 0, x, PhiDirection::forward)[0] == x[0]);
        CHECK(phi_map(tr, 0, x, PhiDirection::inverse)[0] == x[0]);
    }

    SUBCASE("hand arithmetic: A=2, zeta=3") {
        const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
        const Eigen::VectorXd fwd = phi_map(tr, 1, x, PhiDirection::forward);
        CHECK(fwd[0] == doctest::Approx(5.0));
        CHECK(phi_map(tr, 1, fwd, PhiDirection::inverse)[0] == doctest::Approx(1.0));
    }

    SUBCASE("affinity is exact") {
        const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.25);
        const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, -0.5);
        const double lam = 0.3;
        const Eigen::VectorXd lhs =
            phi_map(tr, 1, Eigen::VectorXd(lam * x + (1 - lam) * y), PhiDirection::forward);
        const Eigen::VectorXd rhs = lam * phi_map(tr, 1, x, PhiDirection::forward) +
                                    (1 - lam) * phi_map(tr, 1, y, PhiDirection::forward);
        CHECK(lhs[0] == doctest::Approx(rhs[0]).epsilon(1e-15));
    }

    SUBCASE("shape and index errors") {
        CHECK_THROWS_AS(phi_map(tr, 5, Eigen::VectorXd::Ones(1), PhiDirection::forward),
                        IndexError);
        CHECK_THROWS_AS(phi_map(tr, 1, Eigen::VectorXd::Ones(2), PhiDirection::forward),
                        DimensionError);
    }
}

TEST_CASE("inversion roundtrip on a solved transform") {
    const GridRoughPath driver = scaled_time_driver(256, 1.0);
    const std::size_t n = driver.grid.nodes();
    const TransformData tr = build_transform(const_F(n, 0.8), {}, const_f(n, 0.3), {}, driver);
    for (std::size_t k = 0; k < n; k += 50) {
        const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.6);
        const Eigen::VectorXd round = phi_map(
            tr, k, phi_map(tr, k, x, PhiDirection::forward), PhiDirection::inverse);
        CHECK(std::abs(round[0] - x[0]) <= tr.product_defect * (1.0 + x.norm()) + 1e-12);
    }
}

TEST_CASE("transform_coefficients") {
    SUBCASE("zero F and f leave the coefficients untouched") {
        const GridRoughPath driver = scaled_time_driver(32, 1.0);
        const std::size_t n = driver.grid.nodes();
        const TransformData tr = build_transform(const_F(n, 0.0), {}, const_f(n, 0.0), {}, driver);
        const DriftFn b = [](double t, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
            return Eigen::VectorXd(x * t + Eigen::VectorXd::Ones(x.size()));
        };
        const TransformedCoefficients tc = transform_coefficients(tr, b, nullptr);
        const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 2.0);
        for (std::size_t k = 0; k < n; k += 7) {
            const double t = driver.grid.t(k);
            CHECK(tc.b(t, x, Eigen::VectorXd())[0] ==
                  doctest::Approx(b(t, x, Eigen::VectorXd())[0]));
        }
        CHECK(!tc.sigma);
    }

    SUBCASE("constant drift scales by the inverse flow") {
        const GridRoughPath driver = scaled_time_driver(1 << 9, 1.0);
        const std::size_t n = driver.grid.nodes();
        const TransformData tr = build_transform(const_F(n, 0.5), {}, const_f(n, 0.0), {}, driver);
        const DriftFn b = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
            return Eigen::VectorXd::Constant(1, 3.0);
        };
        const TransformedCoefficients tc = transform_coefficients(tr, b, nullptr);
        for (std::size_t k = 0; k < n; k += 100) {
            const double t = driver.grid.t(k);
            const double expect = std::exp(-0.5 * (driver.values[k][0] - driver.values[0][0])) * 3.0;
            CHECK(tc.b(t, Eigen::VectorXd::Zero(1), Eigen::VectorXd())[0] ==
                  doctest::Approx(expect).epsilon(1e-5));
        }
    }

    SUBCASE("affine drift matches its expanded form") {
        const GridRoughPath driver = scaled_time_driver(1 << 8, 1.0);
        const std::size_t n = driver.grid.nodes();
        const TransformData tr = build_transform(const_F(n, 0.7), {}, const_f(n, 0.2), {}, driver);
        const double Atil = 1.3;
        const DriftFn b = [&](double, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
            return Eigen::VectorXd(Atil * x);
        };
        const TransformedCoefficients tc = transform_coefficients(tr, b, nullptr);
        for (std::size_t k = 0; k < n; k += 37) {
            const double t = driver.grid.t(k);
            const double xt = 0.8;
            const double expanded =
                tr.Ainv[k](0, 0) * Atil * (tr.A[k](0, 0) * xt + tr.zeta[k][0]);
            CHECK(tc.b(t, Eigen::VectorXd::Constant(1, xt), Eigen::VectorXd())[0] ==
                  doctest::Approx(expanded).epsilon(1e-12));
        }
    }
}

TEST_CASE("crosscheck_transform: trivial and pure-rough cases") {
    SUBCASE("F=f=0 makes both legs identical") {
        const GridRoughPath driver = scaled_time_driver(128, 1.0);
        AffineRoughSystem sys = AffineRoughSystem::scalar(driver.grid, 0.0, 0.0);
        sys.dim_w = 1;
        sys.b = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
            return Eigen::VectorXd(-0.5 * x);
        };
        sys.sigma = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
            return Eigen::MatrixXd::Constant(1, 1, 0.3);
        };
        const double gap =
            crosscheck_transform(sys, driver, Eigen::VectorXd::Ones(1), nullptr, 11);
        CHECK(gap <= 1e-12);
    }

    SUBCASE("pure-rough case: both legs agree to scheme order") {
        // The transform flows use the exponential one-step map (so the
        // inverse-consistency defect stays at rounding level) while the rough
        // leg uses the two-jet scheme, leaving an O(mesh) stepper difference.
        TimeGrid coarse = TimeGrid::uniform(1.0, 1 << 12);
        const GridRoughPath driver =
            lift_brownian_stratonovich(55, 1, std::pow(2.0, -12), coarse);
        const AffineRoughSystem sys = AffineRoughSystem::scalar(driver.grid, 1.0, 0.2);
        const double gap =
            crosscheck_transform(sys, driver, Eigen::VectorXd::Ones(1), nullptr, 0);
        CHECK(gap <= 1e-3);
    }
}

TEST_CASE("crosscheck_transform: affine Brownian system, gap small and refining") {
    auto run = [](int lvl) {
        TimeGrid coarse = TimeGrid::uniform(1.0, std::size_t(1) << lvl);
        const GridRoughPath driver =
            lift_brownian_stratonovich(321, 1, std::pow(2.0, -lvl), coarse);
        AffineRoughSystem sys = AffineRoughSystem::scalar(driver.grid, 1.0, 0.2);
        sys.dim_w = 1;
        sys.b = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
            return Eigen::VectorXd(0.4 * x + Eigen::VectorXd::Constant(x.size(), 0.1));
        };
        sys.sigma = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
            return Eigen::MatrixXd(0.25 * x);
        };
        return crosscheck_transform(sys, driver, Eigen::VectorXd::Ones(1), nullptr, 987);
    };
    const double g10 = run(10);
    const double g12 = run(12);
    CHECK(g12 < 1e-2);
    CHECK(g12 < g10);
}
