// Command-line driver: simulate, track, evaluate, solve.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "stmc/config.hpp"
#include "stmc/io.hpp"
#include "stmc/multicut.hpp"
#include "stmc/simulator.hpp"

namespace {

struct SimulateArgs {
    std::string spec;
    std::optional<std::uint64_t> seed;
    std::string out;
};

struct TrackArgs {
    std::string detections;
    std::string calibration;
    std::optional<std::string> config;
    std::optional<std::string> profile;
    std::vector<std::string> overrides;
    std::string out;
    int threads = 1;
};

struct EvaluateArgs {
    std::vector<std::string> pred;
    std::vector<std::string> gt;
    double iou = 0.5;
    double radius = 1.0;
    std::optional<std::string> csv;
};

struct SolveArgs {
    std::string graph;
    bool exact = false;
};

int run_simulate(const SimulateArgs& a) {
    stmc::ScenarioSpec spec;
    if (!a.spec.empty()) {
        std::ifstream in(a.spec);
        if (!in) throw std::runtime_error("cannot open scenario spec '" + a.spec + "'");
        spec = nlohmann::json::parse(in).get<stmc::ScenarioSpec>();
    }
    if (a.seed) spec.seed = *a.seed;
    const auto scenario = stmc::generate(spec);
    stmc::write_scenario(scenario, a.out);
    spdlog::info("wrote {} detections for {} cameras to {}", scenario.detections.size(), scenario.cameras.size(), a.out);
    return 0;
}

int run_track(const TrackArgs& a) {
    const stmc::TrackerConfig base = a.profile ? stmc::profile(*a.profile) : stmc::TrackerConfig{};
    const auto cfg = stmc::load_config(a.config, a.overrides, base);
    const auto summary = stmc::track_files(a.detections, a.calibration, cfg, a.out, a.threads);
    spdlog::info("{} frames, {} detections, {} identities", summary.frames, summary.detections, summary.identities);
    if (summary.penalty_violations > 0)
        spdlog::warn("{} infeasible pairs were left joined by the solver and split afterwards",
                     summary.penalty_violations);
    return 0;
}

std::string row(const std::string& name, const stmc::IdMetrics& img, const stmc::IdMetrics& gnd, double mota) {
    return fmt::format("{:<16} {:>8.4f} {:>8.4f} {:>8.4f} {:>9.4f} {:>9.4f}\n", name, img.idf1, img.idp, img.idr,
                       gnd.idf1, mota);
}

int run_evaluate(const EvaluateArgs& a) {
    if (a.pred.size() != a.gt.size()) throw std::runtime_error("--pred and --gt must be given the same number of times");
    std::vector<stmc::SceneReport> reports;
    for (std::size_t i = 0; i < a.pred.size(); ++i) reports.push_back(stmc::evaluate_dirs(a.pred[i], a.gt[i], a.iou, a.radius));

    long itp = 0, ifp = 0, ifn = 0, gtp = 0, gfp = 0, gfn = 0, errors = 0, num_gt = 0;
    std::string table = fmt::format("{:<16} {:>8} {:>8} {:>8} {:>9} {:>9}\n", "scene", "IDF1", "IDP", "IDR",
                                    "IDF1-BEV", "MOTA");
    for (const auto& r : reports) {
        table += row(r.name, r.image, r.ground, r.image_mota.mota);
        itp += r.image.idtp;
        ifp += r.image.idfp;
        ifn += r.image.idfn;
        gtp += r.ground.idtp;
        gfp += r.ground.idfp;
        gfn += r.ground.idfn;
        errors += r.image_mota.fn + r.image_mota.fp + r.image_mota.idsw;
        num_gt += r.image_mota.num_gt;
    }
    if (reports.size() > 1) {
        const double mota = num_gt > 0 ? 1.0 - static_cast<double>(errors) / static_cast<double>(num_gt)
                                       : (errors == 0 ? 1.0 : -INFINITY);
        table += row("all", stmc::id_metrics_from_counts(itp, ifp, ifn), stmc::id_metrics_from_counts(gtp, gfp, gfn), mota);
    }
    std::cout << table;

    if (a.csv) {
        std::ofstream out(*a.csv, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + *a.csv + "'");
        out << "scene,idf1,idp,idr,idtp,idfp,idfn,idf1_bev,idp_bev,idr_bev,mota,idsw\n";
        for (const auto& r : reports)
            out << fmt::format("{},{:.6f},{:.6f},{:.6f},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", r.name, r.image.idf1,
                               r.image.idp, r.image.idr, r.image.idtp, r.image.idfp, r.image.idfn, r.ground.idf1,
                               r.ground.idp, r.ground.idr, r.image_mota.mota, r.image_mota.idsw);
    }
    return 0;
}

int run_solve(const SolveArgs& a) {
    std::ifstream in(a.graph);
    if (!in) throw std::runtime_error("cannot open graph file '" + a.graph + "'");
    const auto g = stmc::read_graph(in);
    const auto p = a.exact ? stmc::solve_exact(g) : stmc::solve_heuristic(g);
    std::cout << stmc::format_labels(p) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    stmc::init_logging_from_env();
    CLI::App app{"Online multi-camera vehicle tracking with spatial-temporal multicut"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic scenario directory");
    simulate->add_option("--spec", sim.spec, "Scenario spec (JSON); defaults when omitted")->check(CLI::ExistingFile);
    simulate->add_option("--seed", sim.seed, "Overrides the spec's seed");
    simulate->add_option("--out", sim.out, "Output directory")->required();

    TrackArgs trk;
    auto* track = app.add_subcommand("track", "Track a detections stream");
    track->add_option("--detections", trk.detections, "Detections (JSON Lines)")->required()->check(CLI::ExistingFile);
    track->add_option("--calibration", trk.calibration, "Calibration (JSON)")->required()->check(CLI::ExistingFile);
    track->add_option("--config", trk.config, "Config file (key = value)")->check(CLI::ExistingFile);
    track->add_option("--profile", trk.profile, "Base profile")->check(CLI::IsMember({"synthehicle", "cityflow"}));
    track->add_option("--set", trk.overrides, "key=value override (repeatable)");
    track->add_option("--out", trk.out, "Output tracks directory")->required();
    track->add_option("--threads", trk.threads, "Worker threads for edge weights")->check(CLI::PositiveNumber);

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Score tracks directories against ground truth");
    evaluate->add_option("--pred", ev.pred, "Tracks directory (repeatable)")->required();
    evaluate->add_option("--gt", ev.gt, "Ground-truth directory (repeatable, paired with --pred)")->required();
    evaluate->add_option("--iou", ev.iou, "Image-plane IoU threshold")->check(CLI::Range(0.0, 1.0));
    evaluate->add_option("--radius", ev.radius, "Ground-plane match radius in ground units")->check(CLI::PositiveNumber);
    evaluate->add_option("--csv", ev.csv, "Also write per-scene metrics as CSV");

    SolveArgs sol;
    auto* solve = app.add_subcommand("solve", "Solve a multicut instance from a graph file");
    solve->add_option("graph", sol.graph, "Graph file: 'n m' then m lines 'u v w'")->required();
    solve->add_flag("--exact", sol.exact, "Use exhaustive search (at most 12 nodes)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*simulate) return run_simulate(sim);
        if (*track) return run_track(trk);
        if (*evaluate) return run_evaluate(ev);
        if (*solve) return run_solve(sol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
