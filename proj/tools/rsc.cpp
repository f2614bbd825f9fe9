// Command-line front end: one JSON config per run, deterministic seeded
// execution, CSV/JSON artifacts plus a manifest with content hashes.

#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rsc/doss_sussmann.hpp"
#include "rsc/experiments.hpp"
#include "rsc/lq.hpp"
#include "rsc/rough_path.hpp"
#include "rsc/rsde.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rsc;

namespace {

constexpr const char* kVersion = "rsc 1.0.0";

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// FNV-1a, stable across platforms; used to fingerprint emitted artifacts.
std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    if (!obj.is_object()) throw ParameterError(where + " must be a JSON object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            throw ParameterError("unknown key '" + item.key() + "' in " + where);
}

double require_positive(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw ParameterError("missing key '" + key + "' in " + where);
    const double v = obj.at(key).get<double>();
    if (!(v > 0.0)) throw ParameterError("'" + key + "' in " + where + " must be positive");
    return v;
}

// Emitted files are buffered so that nothing is written before the whole run
// has validated and finished.
struct Artifacts {
    std::map<std::string, std::string> files;

    void add(const std::string& name, const std::string& content) { files[name] = content; }

    void flush(const fs::path& out_dir, const json& config_echo, std::uint64_t seed) {
        json manifest;
        manifest["version"] = kVersion;
        manifest["master_seed"] = seed;
        manifest["config"] = config_echo;
        json hashes = json::object();
        for (const auto& [name, content] : files) hashes[name] = hex64(fnv1a(content));
        manifest["hashes"] = hashes;
        files["manifest.json"] = manifest.dump(2) + "\n";

        fs::create_directories(out_dir);
        for (const auto& [name, content] : files) {
            std::ofstream out(out_dir / name, std::ios::binary);
            if (!out) throw Error("cannot write " + (out_dir / name).string());
            out << content;
        }
    }
};

GridRoughPath smooth_time_driver(const TimeGrid& grid) {
    std::vector<Eigen::VectorXd> samples;
    for (double t : grid.times()) samples.push_back(Eigen::VectorXd::Constant(1, t));
    return lift_piecewise_linear(samples, grid);
}

TimeGrid grid_from(const json& num, const std::string& where) {
    const double T = require_positive(num, "T", where);
    const double ni = require_positive(num, "intervals", where);
    if (ni != std::floor(ni)) throw ParameterError("'intervals' must be an integer in " + where);
    return TimeGrid::uniform(T, static_cast<std::size_t>(ni));
}

GridRoughPath make_driver(const json& drv, const TimeGrid& grid, std::uint64_t seed) {
    reject_unknown(drv, {"kind", "fine_mesh", "alpha", "dims", "ito", "seed_offset"}, "driver");
    const std::string kind = drv.value("kind", "brownian");
    if (kind == "time") return smooth_time_driver(grid);
    if (kind != "brownian") throw ParameterError("driver.kind must be 'brownian' or 'time'");
    const double fine_mesh = require_positive(drv, "fine_mesh", "driver");
    const double alpha = drv.value("alpha", 0.45);
    const int dims = drv.value("dims", 1);
    const bool ito = drv.value("ito", false);
    const std::uint64_t off = drv.value("seed_offset", 0ull);
    return lift_brownian_stratonovich(mix_seed(seed, 'D', off), dims, fine_mesh, grid, alpha, ito);
}

LqSpec lq_spec_from(const json& prob, const TimeGrid& grid) {
    reject_unknown(prob,
                   {"Atil", "Btil", "Ctil", "Dtil", "btil", "sigtil", "Mtil", "Ntil", "Gtil", "F",
                    "f", "x0", "control_lo", "control_hi"},
                   "problem");
    LqSpec spec = LqSpec::constants(
        grid, prob.value("Atil", 0.0), prob.value("Btil", 0.0), prob.value("Ctil", 0.0),
        prob.value("Dtil", 0.0), prob.value("btil", 0.0), prob.value("sigtil", 0.0),
        prob.value("Mtil", 0.0), prob.value("Ntil", 1.0), prob.value("Gtil", 0.0),
        prob.value("F", 0.0), prob.value("f", 0.0), prob.value("x0", 0.0));
    if (prob.contains("control_lo") != prob.contains("control_hi"))
        throw ParameterError("control bounds need both control_lo and control_hi");
    if (prob.contains("control_lo"))
        spec.control_bounds = std::make_pair(prob.at("control_lo").get<double>(),
                                             prob.at("control_hi").get<double>());
    spec.validate();
    return spec;
}

AffineRoughSystem scalar_system_from(const json& prob, const TimeGrid& grid) {
    reject_unknown(prob, {"F", "f", "x0", "drift_a", "sigma_c"}, "problem");
    AffineRoughSystem sys =
        AffineRoughSystem::scalar(grid, prob.value("F", 0.0), prob.value("f", 0.0));
    const double a = prob.value("drift_a", 0.0);
    const double c = prob.value("sigma_c", 0.0);
    if (a != 0.0)
        sys.b = [a](double, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
            return Eigen::VectorXd(a * x);
        };
    if (c != 0.0) {
        sys.dim_w = 1;
        sys.sigma = [c](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
            return Eigen::MatrixXd::Constant(1, 1, c);
        };
    }
    return sys;
}

// ---------------------------------------------------------------- subcommands

json run_lift(const json& cfg, std::uint64_t seed, unsigned, Artifacts& art) {
    const json& num = cfg.at("numerical");
    reject_unknown(num, {"T", "intervals"}, "numerical");
    const TimeGrid grid = grid_from(num, "numerical");
    const GridRoughPath path = make_driver(cfg.at("driver"), grid, seed);

    std::ostringstream os;
    save_rough_path(path, os);
    art.add("driver.txt", os.str());

    // Internal consistency report: Chen residual and symmetric-part defect.
    double chen = 0.0, sym = 0.0;
    for (std::size_t i = 0; i + 2 < grid.nodes(); i += std::max<std::size_t>(1, grid.nodes() / 64)) {
        const std::size_t u = i + 1, j = i + 2;
        const Eigen::MatrixXd lhs = path.chen_area(i, j);
        const Eigen::MatrixXd rhs = path.chen_area(i, u) + path.chen_area(u, j) +
                                    path.increment(i, u) * path.increment(u, j).transpose();
        chen = std::max(chen, (lhs - rhs).norm() / (1.0 + lhs.norm()));
        const Eigen::VectorXd inc = path.increment(i, j);
        sym = std::max(sym, (0.5 * (lhs + lhs.transpose()) - 0.5 * inc * inc.transpose()).norm());
    }
    const bool geometric = !cfg.at("driver").value("ito", false);
    json summary;
    summary["chen_residual"] = chen;
    summary["symmetric_defect"] = sym;
    summary["pass"] = chen < 1e-10 && (!geometric || sym < 1e-10);
    return summary;
}

json run_rsde(const json& cfg, std::uint64_t seed, unsigned, Artifacts& art) {
    const json& num = cfg.at("numerical");
    reject_unknown(num, {"T", "intervals"}, "numerical");
    const TimeGrid grid = grid_from(num, "numerical");
    const GridRoughPath driver = make_driver(cfg.at("driver"), grid, seed);
    const AffineRoughSystem sys = scalar_system_from(cfg.at("problem"), grid);
    const double x0 = cfg.at("problem").value("x0", 0.0);

    const Trajectory traj =
        solve_sample(sys, driver, Eigen::VectorXd::Constant(1, x0), nullptr, mix_seed(seed, 'w', 0));
    std::ostringstream csv;
    csv << "t,x,zprime\n";
    for (std::size_t k = 0; k < grid.nodes(); ++k)
        csv << fmt(grid.t(k)) << "," << fmt(traj.x[k][0]) << "," << fmt(traj.zprime[k](0, 0))
            << "\n";
    art.add("trajectory.csv", csv.str());

    json summary;
    summary["x_final"] = traj.x.back()[0];
    summary["pass"] = true;
    return summary;
}

json run_transform_check(const json& cfg, std::uint64_t seed, unsigned, Artifacts& art) {
    const json& num = cfg.at("numerical");
    reject_unknown(num, {"T", "intervals", "gap_tolerance"}, "numerical");
    const TimeGrid grid = grid_from(num, "numerical");
    const double tol = num.value("gap_tolerance", 1e-2);
    const json& exp = cfg.at("experiment");
    reject_unknown(exp, {"n_seeds"}, "experiment");
    const std::size_t n_seeds = static_cast<std::size_t>(require_positive(exp, "n_seeds", "experiment"));

    const TimeGrid grid_half = TimeGrid::uniform(grid.horizon(), 2 * grid.intervals());
    const AffineRoughSystem sys = scalar_system_from(cfg.at("problem"), grid);
    const AffineRoughSystem sys_half = scalar_system_from(cfg.at("problem"), grid_half);
    const double x0 = cfg.at("problem").value("x0", 0.0);
    const json& drv = cfg.at("driver");

    std::ostringstream csv;
    csv << "seed,sup_x,gap_coarse,gap_fine,ratio,product_defect\n";
    double worst_rel = 0.0, worst_defect = 0.0;
    std::vector<double> rels, gaps_c, gaps_f;
    for (std::size_t s = 0; s < n_seeds; ++s) {
        json drv_s = drv;
        drv_s["seed_offset"] = s;
        // One fine underlying path viewed on both grids keeps the comparison
        // honest: same randomness, mesh is the only change.
        const GridRoughPath fine_driver = make_driver(drv_s, grid_half, seed);
        const GridRoughPath coarse_driver = coarsen(fine_driver, grid);

        const Trajectory ref =
            solve_sample(sys_half, fine_driver, Eigen::VectorXd::Constant(1, x0), nullptr,
                         mix_seed(seed, 'w', s));
        double sup_x = 0.0;
        for (const auto& x : ref.x) sup_x = std::max(sup_x, x.norm());

        std::vector<Eigen::VectorXd> agg;
        if (sys.dim_w > 0)
            for (std::size_t k = 0; k + 1 < ref.w_increments.size(); k += 2)
                agg.push_back(ref.w_increments[k] + ref.w_increments[k + 1]);

        const TransformData tr_c =
            build_transform(sys.F, sys.Fprime, sys.f, sys.fprime, coarse_driver);
        const TransformData tr_f =
            build_transform(sys_half.F, sys_half.Fprime, sys_half.f, sys_half.fprime, fine_driver);
        worst_defect = std::max(worst_defect, std::max(tr_c.product_defect, tr_f.product_defect));

        auto gap_with = [&](const AffineRoughSystem& ss, const GridRoughPath& dd,
                            const TransformData& tr, const std::vector<Eigen::VectorXd>& dw) {
            AffineRoughSystem tmp = ss;
            (void)tmp;
            // crosscheck with prescribed increments: rebuild via seed is not
            // enough, so run the transform comparison inline.
            const Trajectory rough =
                solve_sample_with_increments(ss, dd, Eigen::VectorXd::Constant(1, x0), nullptr, dw);
            const TransformedCoefficients tc = transform_coefficients(tr, ss.b, ss.sigma);
            Eigen::VectorXd xt = Eigen::VectorXd::Constant(1, x0);
            double worst = 0.0;
            for (std::size_t k = 0; k + 1 < dd.grid.nodes(); ++k) {
                const double t = dd.grid.t(k);
                Eigen::VectorXd next = xt;
                if (tc.b) next += tc.b(t, xt, Eigen::VectorXd()) * dd.grid.dt(k);
                if (tc.sigma && ss.dim_w > 0) next += tc.sigma(t, xt, Eigen::VectorXd()) * dw[k];
                xt = next;
                worst = std::max(
                    worst, (rough.x[k + 1] - phi_map(tr, k + 1, xt, PhiDirection::forward)).norm());
            }
            return worst;
        };
        const double gap_c = gap_with(sys, coarse_driver, tr_c,
                                      sys.dim_w > 0 ? agg : std::vector<Eigen::VectorXd>{});
        const double gap_f = gap_with(sys_half, fine_driver, tr_f, ref.w_increments);
        const double ratio = gap_f > 0.0 ? gap_c / gap_f : 0.0;
        gaps_c.push_back(gap_c);
        gaps_f.push_back(gap_f);
        rels.push_back(gap_c / std::max(sup_x, 1e-300));
        worst_rel = std::max(worst_rel, rels.back());
        csv << s << "," << fmt(sup_x) << "," << fmt(gap_c) << "," << fmt(gap_f) << ","
            << fmt(ratio) << "," << fmt(std::max(tr_c.product_defect, tr_f.product_defect))
            << "\n";
    }
    art.add("crosscheck.csv", csv.str());

    // Single-path halving ratios are heavy-tailed, so the refinement check
    // compares ensemble means of the gaps rather than per-seed ratios.
    const double mean_rel = detail::mean_stderr(rels).mean;
    const double ratio_of_means =
        detail::mean_stderr(gaps_c).mean / std::max(detail::mean_stderr(gaps_f).mean, 1e-300);
    json summary;
    summary["mean_relative_gap"] = mean_rel;
    summary["worst_relative_gap"] = worst_rel;
    summary["halving_ratio"] = ratio_of_means;
    summary["worst_product_defect"] = worst_defect;
    summary["pass"] = mean_rel < tol && worst_defect < 1e-6 && ratio_of_means > 1.5 &&
                      ratio_of_means < 2.5;
    return summary;
}

json run_lq(const json& cfg, std::uint64_t seed, unsigned, Artifacts& art) {
    const json& num = cfg.at("numerical");
    reject_unknown(num, {"T", "intervals"}, "numerical");
    const TimeGrid grid = grid_from(num, "numerical");
    const GridRoughPath driver = make_driver(cfg.at("driver"), grid, seed);
    const LqSpec spec = lq_spec_from(cfg.at("problem"), grid);

    const ScalarTransform tr = build_lq_transform(spec, driver);
    const RiccatiSolution ric = riccati_backward(spec, tr);
    const ClosedLoopRun run = simulate_closed_loop(spec, tr, ric, mix_seed(seed, 'w', 0));

    std::ostringstream rcsv;
    rcsv << "t,A,Ainv,zeta,P,q\n";
    for (std::size_t k = 0; k < grid.nodes(); ++k)
        rcsv << fmt(grid.t(k)) << "," << fmt(tr.A[k]) << "," << fmt(tr.Ainv[k]) << ","
             << fmt(tr.zeta[k]) << "," << fmt(ric.P[k]) << "," << fmt(ric.q[k]) << "\n";
    art.add("riccati.csv", rcsv.str());

    std::ostringstream ccsv;
    ccsv << "t,x,xtilde,u\n";
    for (std::size_t k = 0; k < grid.nodes(); ++k)
        ccsv << fmt(grid.t(k)) << "," << fmt(run.x[k]) << "," << fmt(run.xtilde[k]) << ","
             << fmt(run.u[k]) << "\n";
    art.add("closedloop.csv", ccsv.str());

    const double resid = stationarity_residual(ric, run);
    json summary;
    summary["P0"] = ric.P.front();
    summary["q0"] = ric.q.front();
    summary["cost"] = run.cost;
    summary["product_defect"] = tr.product_defect;
    summary["stationarity_residual"] = resid;
    summary["pass"] = resid < 1e-6 && ric.denom_min > 0.0;
    return summary;
}

json run_smp_check(const json& cfg, std::uint64_t seed, unsigned threads, Artifacts& art) {
    const json& num = cfg.at("numerical");
    reject_unknown(num, {"T", "intervals"}, "numerical");
    const TimeGrid grid = grid_from(num, "numerical");
    const GridRoughPath driver = make_driver(cfg.at("driver"), grid, seed);
    const LqSpec spec = lq_spec_from(cfg.at("problem"), grid);
    const json& exp = cfg.at("experiment");
    reject_unknown(exp, {"n_samples", "n_directions", "epsilon", "control_offset"}, "experiment");
    const std::size_t n_samples =
        static_cast<std::size_t>(require_positive(exp, "n_samples", "experiment"));
    const std::size_t n_dirs =
        static_cast<std::size_t>(require_positive(exp, "n_directions", "experiment"));
    const double eps = require_positive(exp, "epsilon", "experiment");
    const double offset = exp.value("control_offset", 0.3);

    const ScalarTransform tr = build_lq_transform(spec, driver);
    const RiccatiSolution ric = riccati_backward(spec, tr);
    const double resid =
        stationarity_residual(ric, simulate_closed_loop(spec, tr, ric, mix_seed(seed, 'w', 0)));

    const ScalarControlLaw off_law = [&](std::size_t k, double, double xt) {
        return optimal_feedback(ric, k, xt).value + offset;
    };
    std::ostringstream csv;
    csv << "direction,adjoint,adjoint_stderr,fd,fd_half,fd_stderr,rel_mismatch,signal,pass\n";
    bool all_ok = true;
    for (std::size_t d = 0; d < n_dirs; ++d) {
        const auto v = perturbation_direction(mix_seed(seed, 'v', d), grid.horizon());
        const GradientCheck gc =
            gradient_check(spec, tr, ric, off_law, v, eps, n_samples, mix_seed(seed, 'g', d),
                           threads);
        const bool signal = std::abs(gc.fd) > 10.0 * gc.fd_stderr;
        const bool ok = !signal || gc.rel_mismatch < 0.05;
        all_ok = all_ok && ok;
        csv << d << "," << fmt(gc.adjoint) << "," << fmt(gc.adjoint_stderr) << "," << fmt(gc.fd)
            << "," << fmt(gc.fd_half) << "," << fmt(gc.fd_stderr) << "," << fmt(gc.rel_mismatch)
            << "," << (signal ? 1 : 0) << "," << (ok ? 1 : 0) << "\n";
    }
    art.add("gradients.csv", csv.str());

    json summary;
    summary["stationarity_residual"] = resid;
    summary["gradients_ok"] = all_ok;
    summary["pass"] = all_ok && resid < 1e-6;
    return summary;
}

json run_equivalence(const json& cfg, std::uint64_t seed, unsigned threads, Artifacts& art) {
    const json& num = cfg.at("numerical");
    reject_unknown(num, {"T", "intervals", "fine_mesh"}, "numerical");
    const TimeGrid grid = grid_from(num, "numerical");
    const double fine_mesh = require_positive(num, "fine_mesh", "numerical");
    const LqSpec spec = lq_spec_from(cfg.at("problem"), grid);
    const json& exp = cfg.at("experiment");
    reject_unknown(exp, {"n_outer", "n_inner"}, "experiment");
    const std::size_t n_outer =
        static_cast<std::size_t>(require_positive(exp, "n_outer", "experiment"));
    const std::size_t n_inner =
        static_cast<std::size_t>(require_positive(exp, "n_inner", "experiment"));

    const EquivalenceReport rep =
        pathwise_equivalence(spec, fine_mesh, n_outer, n_inner, seed, threads);

    std::ostringstream csv;
    csv << "driver,value\n";
    for (std::size_t j = 0; j < rep.values.size(); ++j)
        csv << j << "," << fmt(rep.values[j]) << "\n";
    art.add("values.csv", csv.str());

    json summary;
    summary["nested_mean"] = rep.nested_mean;
    summary["nested_stderr"] = rep.nested_stderr;
    summary["joint_mean"] = rep.joint_mean;
    summary["joint_stderr"] = rep.joint_stderr;
    summary["gap"] = rep.gap;
    summary["combined_stderr"] = rep.combined_stderr;
    summary["value_variance"] = rep.value_variance;
    summary["driver_failures"] = rep.driver_failures;
    summary["pass"] = rep.pass;
    return summary;
}

json run_convergence(const json& cfg, std::uint64_t seed, unsigned, Artifacts& art) {
    const json& num = cfg.at("numerical");
    reject_unknown(num, {"T", "intervals"}, "numerical");
    const TimeGrid grid = grid_from(num, "numerical");
    const GridRoughPath driver = make_driver(cfg.at("driver"), grid, seed);
    const AffineRoughSystem sys = scalar_system_from(cfg.at("problem"), grid);
    const double x0 = cfg.at("problem").value("x0", 0.0);
    const json& exp = cfg.at("experiment");
    reject_unknown(exp, {"strides", "min_order"}, "experiment");
    std::vector<std::size_t> strides;
    for (const auto& s : exp.at("strides")) strides.push_back(s.get<std::size_t>());
    const double min_order = exp.value("min_order", 0.4);

    const ConvergenceReport rep = self_convergence_order(
        sys, driver, Eigen::VectorXd::Constant(1, x0), nullptr, mix_seed(seed, 'w', 0), strides);

    std::ostringstream csv;
    csv << "stride,error\n";
    for (std::size_t i = 0; i < rep.strides.size(); ++i)
        csv << rep.strides[i] << "," << fmt(rep.errors[i]) << "\n";
    art.add("convergence.csv", csv.str());

    json summary;
    summary["mean_order"] = rep.mean_order;
    summary["exact"] = rep.exact;
    summary["pass"] = rep.exact || rep.mean_order >= min_order;
    return summary;
}

json run_ito_check(const json& cfg, std::uint64_t seed, unsigned, Artifacts& art) {
    const json& num = cfg.at("numerical");
    reject_unknown(num, {"T", "intervals"}, "numerical");
    const TimeGrid grid = grid_from(num, "numerical");
    const AffineRoughSystem sys = scalar_system_from(cfg.at("problem"), grid);
    const double x0 = cfg.at("problem").value("x0", 0.0);
    const json& exp = cfg.at("experiment");
    reject_unknown(exp, {"levels", "reference_level"}, "experiment");
    const int ref_lvl = static_cast<int>(require_positive(exp, "reference_level", "experiment"));

    TimeGrid fine_grid = TimeGrid::uniform(grid.horizon(), std::size_t(1) << ref_lvl);
    const GridRoughPath fine = lift_brownian_stratonovich(
        mix_seed(seed, 'D', 0), 1, grid.horizon() / std::pow(2.0, ref_lvl), fine_grid);
    std::vector<GridRoughPath> drivers;
    for (const auto& lv : exp.at("levels")) {
        const int lvl = lv.get<int>();
        if (lvl > ref_lvl) throw ParameterError("levels must not exceed reference_level");
        const std::size_t stride = std::size_t(1) << (ref_lvl - lvl);
        std::vector<Eigen::VectorXd> samples;
        for (std::size_t k = 0; k < fine.grid.nodes(); k += stride)
            samples.push_back(fine.values[k]);
        TimeGrid sub = TimeGrid::uniform(grid.horizon(), std::size_t(1) << lvl);
        drivers.push_back(coarsen(lift_piecewise_linear(samples, sub), grid));
    }
    drivers.push_back(coarsen(fine, grid));

    const auto rows = ito_lyons_convergence(sys, drivers, Eigen::VectorXd::Constant(1, x0),
                                            nullptr, mix_seed(seed, 'w', 0));
    std::ostringstream csv;
    csv << "distance,gap\n";
    bool monotone = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        csv << fmt(rows[i].distance) << "," << fmt(rows[i].gap) << "\n";
        if (i + 1 < rows.size()) monotone = monotone && rows[i + 1].gap <= rows[i].gap * 1.1;
    }
    art.add("ito_lyons.csv", csv.str());

    json summary;
    summary["monotone"] = monotone;
    summary["pass"] = monotone;
    return summary;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rough stochastic control toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_override;
    std::uint64_t seed_override = 0;
    bool have_seed_override = false;
    unsigned threads = 1;
    bool verbose = false;

    const std::vector<std::string> names = {"lift",      "rsde",        "transform-check",
                                            "lq",        "smp-check",   "equivalence",
                                            "convergence", "ito-check"};
    std::string chosen;
    for (const auto& n : names) {
        CLI::App* sub = app.add_subcommand(n);
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--seed", seed_override, "master seed override")
            ->each([&](const std::string&) { have_seed_override = true; });
        sub->add_option("--out", out_override, "output directory override");
        sub->add_option("--threads", threads, "worker thread budget");
        sub->add_flag("--verbose", verbose, "print the summary to stdout");
        sub->callback([&chosen, n] { chosen = n; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        std::ifstream in(config_path);
        if (!in) throw ParameterError("cannot open config file " + config_path);
        json cfg = json::parse(in);
        reject_unknown(cfg, {"seed", "out_dir", "numerical", "problem", "driver", "experiment"},
                       "config");
        const std::uint64_t seed =
            have_seed_override ? seed_override : cfg.value("seed", 0ull);
        const fs::path out_dir = !out_override.empty() ? fs::path(out_override)
                                                       : fs::path(cfg.value("out_dir", "out"));

        Artifacts art;
        json summary;
        if (chosen == "lift") summary = run_lift(cfg, seed, threads, art);
        else if (chosen == "rsde") summary = run_rsde(cfg, seed, threads, art);
        else if (chosen == "transform-check") summary = run_transform_check(cfg, seed, threads, art);
        else if (chosen == "lq") summary = run_lq(cfg, seed, threads, art);
        else if (chosen == "smp-check") summary = run_smp_check(cfg, seed, threads, art);
        else if (chosen == "equivalence") summary = run_equivalence(cfg, seed, threads, art);
        else if (chosen == "convergence") summary = run_convergence(cfg, seed, threads, art);
        else if (chosen == "ito-check") summary = run_ito_check(cfg, seed, threads, art);

        summary["subcommand"] = chosen;
        summary["master_seed"] = seed;
        art.add("summary.json", summary.dump(2) + "\n");
        art.flush(out_dir, cfg, seed);
        if (verbose) std::cout << summary.dump(2) << "\n";
        return summary.value("pass", false) ? 0 : 2;
    } catch (const json::exception& e) {
        std::cout << json{{"error", e.what()}, {"kind", "config"}}.dump() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cout << json{{"error", e.what()}, {"kind", "run"}}.dump() << "\n";
        return 1;
    }
}
