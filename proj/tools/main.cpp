// Command-line front end: velocity-field image registration (register),
// measurement protocols (diag), and synthetic problem generation (synth).

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>

#include "veloreg/counters.hpp"
#include "veloreg/diag.hpp"
#include "veloreg/io.hpp"
#include "veloreg/newton.hpp"
#include "veloreg/problems.hpp"
#include "veloreg/spectral.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace veloreg;

namespace {

struct RunConfig {
    std::string mrPath, mtPath;
    int grid = 64;
    std::string norm = "h2";
    double betav = 1e-2;
    std::string model = "comp";
    double betaw = 1e-1;
    std::string scheme = "sl";
    double cfl = 1.0;
    std::string pc = "2l-cheb";
    int chebIters = 10;
    double tolRel = 1e-2;
    double tolAbs = 1e-5;
    int maxit = 50;
    double sigma = 1.0;
    std::string out = ".";
    std::uint64_t seed = 42;
    std::string protocol;
    std::string problem = "smooth-a";
};

spectral::RegNorm parseNorm(const std::string& s) {
    if (s == "h1") return spectral::RegNorm::H1Semi;
    if (s == "h2") return spectral::RegNorm::H2Semi;
    if (s == "h3") return spectral::RegNorm::H3Semi;
    throw CLI::ValidationError("--norm must be one of {h1,h2,h3}");
}

inverse::Deformation parseModel(const std::string& s) {
    if (s == "comp") return inverse::Deformation::Compressible;
    if (s == "incomp") return inverse::Deformation::Incompressible;
    if (s == "nearincomp") return inverse::Deformation::NearIncompressible;
    throw CLI::ValidationError("--model must be one of {comp,incomp,nearincomp}");
}

transport::Scheme parseScheme(const std::string& s) {
    if (s == "rk2") return transport::Scheme::RK2;
    if (s == "rk2a") return transport::Scheme::RK2A;
    if (s == "sl") return transport::Scheme::SL;
    throw CLI::ValidationError("--scheme must be one of {rk2,rk2a,sl}");
}

precond::PrecondChoice parsePrecond(const RunConfig& rc) {
    precond::PrecondChoice choice;
    if (rc.pc == "reg") {
        choice.kind = precond::PrecondKind::Reg;
    } else if (rc.pc == "2l-pcg") {
        choice.kind = precond::PrecondKind::TwoLevel;
        choice.coarseSolver = precond::CoarseSolverKind::Pcg;
    } else if (rc.pc == "2l-cheb") {
        choice.kind = precond::PrecondKind::TwoLevel;
        choice.coarseSolver = precond::CoarseSolverKind::Cheb;
    } else {
        throw CLI::ValidationError("--pc must be one of {reg,2l-pcg,2l-cheb}");
    }
    choice.chebIters = rc.chebIters;
    return choice;
}

inverse::Model makeModel(const RunConfig& rc) {
    inverse::Model m;
    m.norm = parseNorm(rc.norm);
    m.betaV = rc.betav;
    m.deformation = parseModel(rc.model);
    m.betaW = rc.betaw;
    if (m.betaV <= 0.0 || m.betaW <= 0.0)
        throw CLI::ValidationError("regularization weights must be positive");
    return m;
}

json configEcho(const RunConfig& rc) {
    return json{{"mr", rc.mrPath},
                {"mt", rc.mtPath},
                {"grid", rc.grid},
                {"norm", rc.norm},
                {"betav", rc.betav},
                {"model", rc.model},
                {"betaw", rc.betaw},
                {"scheme", rc.scheme},
                {"cfl", rc.cfl},
                {"pc", rc.pc},
                {"cheb_iters", rc.chebIters},
                {"tol_rel", rc.tolRel},
                {"tol_abs", rc.tolAbs},
                {"maxit", rc.maxit},
                {"sigma", rc.sigma},
                {"out", rc.out},
                {"seed", rc.seed},
                {"protocol", rc.protocol},
                {"problem", rc.problem}};
}

struct CommonOptions {
    std::string configPath;
    CLI::App* sub = nullptr;
};

void addCommonOptions(CLI::App* app, RunConfig& rc, CommonOptions& common) {
    common.sub = app;
    app->add_option("--grid", rc.grid, "grid points per axis");
    app->add_option("--norm", rc.norm, "regularization norm {h1,h2,h3}");
    app->add_option("--betav", rc.betav, "velocity regularization weight");
    app->add_option("--model", rc.model, "deformation model {comp,incomp,nearincomp}");
    app->add_option("--betaw", rc.betaw, "divergence penalty weight (nearincomp)");
    app->add_option("--scheme", rc.scheme, "transport scheme {rk2,rk2a,sl}");
    app->add_option("--cfl", rc.cfl, "CFL number for the transport solves");
    app->add_option("--pc", rc.pc, "KKT preconditioner {reg,2l-pcg,2l-cheb}");
    app->add_option("--cheb-iters", rc.chebIters, "coarse Chebyshev iterations");
    app->add_option("--tol-rel", rc.tolRel, "relative gradient tolerance");
    app->add_option("--tol-abs", rc.tolAbs, "absolute gradient tolerance");
    app->add_option("--maxit", rc.maxit, "maximum outer iterations");
    app->add_option("--sigma", rc.sigma, "preprocessing smoothing width in grid points");
    app->add_option("--out", rc.out, "output directory");
    app->add_option("--seed", rc.seed, "seed for randomized protocols");
    app->add_option("--config", common.configPath,
                    "flat key=value configuration file (command line wins)");
}

// Flat key=value configuration; values already given on the command line keep
// their command-line value.
void applyConfigFile(const CommonOptions& common, RunConfig& rc) {
    if (common.configPath.empty()) return;
    std::ifstream is(common.configPath);
    if (!is) throw std::runtime_error(common.configPath + ": cannot open config file");

    const std::map<std::string, std::function<void(const std::string&)>> setters = {
        {"mr", [&](const std::string& v) { rc.mrPath = v; }},
        {"mt", [&](const std::string& v) { rc.mtPath = v; }},
        {"grid", [&](const std::string& v) { rc.grid = std::stoi(v); }},
        {"norm", [&](const std::string& v) { rc.norm = v; }},
        {"betav", [&](const std::string& v) { rc.betav = std::stod(v); }},
        {"model", [&](const std::string& v) { rc.model = v; }},
        {"betaw", [&](const std::string& v) { rc.betaw = std::stod(v); }},
        {"scheme", [&](const std::string& v) { rc.scheme = v; }},
        {"cfl", [&](const std::string& v) { rc.cfl = std::stod(v); }},
        {"pc", [&](const std::string& v) { rc.pc = v; }},
        {"cheb-iters", [&](const std::string& v) { rc.chebIters = std::stoi(v); }},
        {"tol-rel", [&](const std::string& v) { rc.tolRel = std::stod(v); }},
        {"tol-abs", [&](const std::string& v) { rc.tolAbs = std::stod(v); }},
        {"maxit", [&](const std::string& v) { rc.maxit = std::stoi(v); }},
        {"sigma", [&](const std::string& v) { rc.sigma = std::stod(v); }},
        {"out", [&](const std::string& v) { rc.out = v; }},
        {"seed", [&](const std::string& v) { rc.seed = std::stoull(v); }},
        {"problem", [&](const std::string& v) { rc.problem = v; }},
    };

    std::string line;
    int lineNo = 0;
    while (std::getline(is, line)) {
        ++lineNo;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto strip = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        if (strip(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(common.configPath + ": line " + std::to_string(lineNo) +
                                     ": expected key=value");
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end())
            throw std::runtime_error(common.configPath + ": unknown key '" + key + "'");
        const std::string flag = "--" + key;
        if (common.sub->count(flag) > 0) continue;  // command line wins
        it->second(value);
    }
}

void writeReport(const diag::ErrorReport& report, const fs::path& dir, const std::string& stem) {
    fs::create_directories(dir);
    std::ofstream csv(dir / (stem + ".csv"));
    csv << report.toCsv();
    std::ofstream js(dir / (stem + ".json"));
    js << report.toJson() << "\n";
    std::printf("wrote %s/{%s.csv,%s.json}\n", dir.string().c_str(), stem.c_str(), stem.c_str());
}

int runRegister(const RunConfig& rc) {
    const Grid g(rc.grid, rc.grid);
    problems::RegistrationProblem problem;
    problem.reference = problems::preprocess(io::readImage(rc.mrPath, g), rc.sigma);
    problem.templateImage = problems::preprocess(io::readImage(rc.mtPath, g), rc.sigma);
    problem.provenance = "file";
    problem.smoothingSigma = rc.sigma;

    inverse::Model model = makeModel(rc);
    inverse::NewtonConfig cfg;
    cfg.maxOuterIter = rc.maxit;
    cfg.tolRelGrad = rc.tolRel;
    cfg.tolAbsGrad = rc.tolAbs;
    cfg.gradScheme = {parseScheme(rc.scheme), rc.cfl, std::nullopt};
    precond::PrecondChoice choice = parsePrecond(rc);

    counters::reset();
    auto [v, report] = inverse::newtonSolve(problem, model, cfg, choice);

    const fs::path dir(rc.out);
    fs::create_directories(dir);

    transport::SchemeConfig slAccurate{transport::Scheme::SL, 0.2, std::nullopt};
    transport::TimeGrid tgFinal = transport::makeTimeGrid(v, slAccurate);
    ScalarField m1 =
        transport::Solver(v, tgFinal, slAccurate).solveStateFinal(problem.templateImage);
    ScalarField residual = m1 - problem.reference;
    ScalarField jac = transport::jacobianDet(v, tgFinal, slAccurate);

    io::writeField((dir / "deformed_template.vrf").string(), m1);
    io::writeField((dir / "residual.vrf").string(), residual);
    io::writeField((dir / "velocity.vrf").string(), v);
    io::writeField((dir / "jacobian.vrf").string(), jac);
    io::writeGraymap((dir / "deformed_template.pgm").string(), m1);
    {
        ScalarField shifted = residual;
        for (double& x : shifted.v) x = 0.5 * (x + 1.0);  // map [-1,1] to [0,1] for display
        io::writeGraymap((dir / "residual.pgm").string(), shifted);
    }
    {
        std::ofstream csv(dir / "convergence.csv");
        csv << io::solverReportCsv(report);
    }

    const auto totals = counters::snapshot();
    json summary;
    summary["config"] = configEcho(rc);
    summary["status"] = report.status == inverse::SolveStatus::Converged ? "converged"
                        : report.status == inverse::SolveStatus::IterationLimit
                            ? "iteration-limit"
                            : "line-search-failure";
    summary["outer_iterations"] = report.iterations.size();
    summary["grad_rel"] = report.finalGradNormRel;
    summary["residual_rel"] = report.finalResidualRel;
    summary["jacobian_min"] = report.jacMin;
    summary["jacobian_max"] = report.jacMax;
    summary["max_abs_jacobian_deviation"] =
        std::max(std::abs(report.jacMin - 1.0), std::abs(report.jacMax - 1.0));
    summary["ffts"] = totals.ffts;
    summary["interps"] = totals.interps;
    summary["time_sec"] = report.totalTimeSec;
    std::ofstream js(dir / "summary.json");
    js << summary.dump(2) << "\n";

    std::printf("status=%s iters=%zu grad_rel=%.3e residual_rel=%.3e jac=[%.4f,%.4f]\n",
                summary["status"].get<std::string>().c_str(), report.iterations.size(),
                report.finalGradNormRel, report.finalResidualRel, report.jacMin, report.jacMax);

    switch (report.status) {
        case inverse::SolveStatus::Converged: return 0;
        case inverse::SolveStatus::IterationLimit: return 2;
        case inverse::SolveStatus::LineSearchFailure: return 3;
    }
    return 1;
}

int runSynth(const RunConfig& rc) {
    const Grid g(rc.grid, rc.grid);
    problems::SmoothVariant variant;
    if (rc.problem == "smooth-a") {
        variant = problems::SmoothVariant::A;
    } else if (rc.problem == "smooth-b") {
        variant = problems::SmoothVariant::B;
    } else {
        std::fprintf(stderr, "unknown synthetic problem '%s'; available: smooth-a, smooth-b\n",
                     rc.problem.c_str());
        return 1;
    }
    auto [problem, vStar] = problems::makeSmoothProblem(variant, g);
    const fs::path dir(rc.out);
    fs::create_directories(dir);
    io::writeField((dir / "reference.vrf").string(), problem.reference);
    io::writeField((dir / "template.vrf").string(), problem.templateImage);
    io::writeField((dir / "velocity.vrf").string(), vStar);
    std::printf("wrote %s/{reference.vrf,template.vrf,velocity.vrf} (%dx%d)\n",
                dir.string().c_str(), rc.grid, rc.grid);
    return 0;
}

int runDiag(const RunConfig& rc) {
    const Grid g(rc.grid, rc.grid);
    const fs::path dir(rc.out);
    inverse::Model model = makeModel(rc);
    transport::SchemeConfig cfg{parseScheme(rc.scheme), rc.cfl, std::nullopt};

    if (rc.protocol == "self-conv") {
        diag::ErrorReport rep = diag::selfConvergence(
            rc.problem == "smooth-b" ? problems::SmoothVariant::B : problems::SmoothVariant::A,
            cfg.scheme, rc.cfl, {rc.grid, rc.grid * 2});
        writeReport(rep, dir, "self_convergence");
        return 0;
    }
    if (rc.protocol == "adjoint-error") {
        VectorField v = problems::smoothVelocity(problems::SmoothVariant::A, g);
        ScalarField m0 = problems::smoothReference(problems::SmoothVariant::A, g);
        diag::ErrorReport rep = diag::adjointError(v, m0, {3, 5, 11, 21, 102});
        writeReport(rep, dir, "adjoint_error");
        return 0;
    }
    if (rc.protocol == "grad-check") {
        auto [pair, vStar] = problems::makeSmoothProblem(problems::SmoothVariant::A, g);
        VectorField v = 0.1 * vStar;
        diag::ErrorReport rep = diag::gradientCheck(pair, model, cfg, v, rc.seed);
        writeReport(rep, dir, "gradient_check");
        return 0;
    }
    if (rc.protocol == "hessian-symmetry") {
        auto [pair, vStar] = problems::makeSmoothProblem(problems::SmoothVariant::A, g);
        VectorField v = 0.3 * vStar;
        diag::ErrorReport rep = diag::hessianSymmetryCheck(pair, model, cfg, v, 10, rc.seed);
        writeReport(rep, dir, "hessian_symmetry");
        return 0;
    }
    if (rc.protocol == "kkt-bench") {
        auto [pair, vStar] = problems::makeSmoothProblem(problems::SmoothVariant::A, g);
        (void)vStar;
        std::vector<diag::KktBenchmarkSetup> setups;
        precond::PrecondChoice reg;
        setups.push_back({"reg", reg, {transport::Scheme::RK2A, 0.2, std::nullopt}});
        precond::PrecondChoice cheb;
        cheb.kind = precond::PrecondKind::TwoLevel;
        cheb.coarseSolver = precond::CoarseSolverKind::Cheb;
        cheb.chebIters = rc.chebIters;
        setups.push_back({"2l-cheb", cheb, {transport::Scheme::SL, 5.0, std::nullopt}});
        precond::PrecondChoice pcg;
        pcg.kind = precond::PrecondKind::TwoLevel;
        pcg.coarseSolver = precond::CoarseSolverKind::Pcg;
        setups.push_back({"2l-pcg", pcg, {transport::Scheme::SL, 5.0, std::nullopt}});
        diag::ErrorReport rep = diag::kktBenchmark(pair, model, {rc.betav}, {rc.grid}, setups, 1e-6);
        writeReport(rep, dir, "kkt_benchmark");
        return 0;
    }
    if (rc.protocol == "eig-scaling") {
        auto [pair, vStar] = problems::makeSmoothProblem(problems::SmoothVariant::A, g);
        (void)vStar;
        diag::ErrorReport rep = diag::eigenvalueScaling(pair, model, {1e-1, 1e-2, 1e-3});
        writeReport(rep, dir, "eigenvalue_scaling");
        return 0;
    }
    if (rc.protocol == "counters") {
        auto [pair, vStar] = problems::makeSmoothProblem(problems::SmoothVariant::A, g);
        (void)vStar;
        diag::ErrorReport rep = diag::operationCounts(pair, 16);
        writeReport(rep, dir, "operation_counts");
        return 0;
    }
    std::fprintf(stderr,
                 "unknown protocol '%s'; available: self-conv, adjoint-error, grad-check, "
                 "hessian-symmetry, kkt-bench, eig-scaling, counters\n",
                 rc.protocol.c_str());
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"velocity-field diffeomorphic image registration"};
    app.require_subcommand(1);
    RunConfig rc;

    CommonOptions regCommon, diagCommon, synthCommon;

    CLI::App* reg = app.add_subcommand("register", "run an inversion on an image pair");
    reg->add_option("--mr", rc.mrPath, "reference image (graymap or field file)");
    reg->add_option("--mt", rc.mtPath, "template image (graymap or field file)");
    addCommonOptions(reg, rc, regCommon);

    CLI::App* diagCmd = app.add_subcommand("diag", "run a named diagnostics protocol");
    diagCmd->add_option("protocol", rc.protocol, "protocol name")->required();
    diagCmd->add_option("--problem", rc.problem, "test problem {smooth-a,smooth-b}");
    addCommonOptions(diagCmd, rc, diagCommon);

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic problem");
    synth->add_option("problem", rc.problem, "problem name {smooth-a,smooth-b}")->required();
    addCommonOptions(synth, rc, synthCommon);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (reg->parsed()) {
            applyConfigFile(regCommon, rc);
            if (rc.mrPath.empty() || rc.mtPath.empty())
                throw std::runtime_error("register needs --mr and --mt (or config keys mr/mt)");
            return runRegister(rc);
        }
        if (diagCmd->parsed()) {
            applyConfigFile(diagCommon, rc);
            return runDiag(rc);
        }
        if (synth->parsed()) {
            applyConfigFile(synthCommon, rc);
            return runSynth(rc);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
