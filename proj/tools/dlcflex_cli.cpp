#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "dlcflex/dispatch.hpp"
#include "dlcflex/metrics.hpp"

namespace {

using namespace dlcflex;

struct SimulateArgs {
    std::string scenario;
    std::string formulation;
    std::string out;
    int kappa = 4;
    int horizon = 0;  // 0 keeps the scenario's window length
    double time_limit_s = 300.0;
    unsigned seed = 0;
    int init_days = 2;
    bool ev_immediate = false;
};

int run_simulate(const SimulateArgs& a) {
    FleetScenario sc = load_scenario(a.scenario);
    if (a.horizon > 0) {
        sc.grid.horizon_steps = a.horizon;
        sc.grid.validate();
    }
    dispatch::RollingConfig cfg;
    cfg.formulation = parse_formulation(a.formulation);
    cfg.kappa = a.kappa;
    cfg.time_limit_s = a.time_limit_s;
    cfg.init_days = a.init_days;
    cfg.ev_immediate = a.ev_immediate;
    dispatch::RunLog log = dispatch::run_rolling_horizon(sc, cfg, a.seed);
    log.meta.scenario_path = a.scenario;
    log.save(a.out);
    int degraded = 0;
    for (const auto& s : log.solves) degraded += s.degraded ? 1 : 0;
    std::printf("run: %s steps=%ld solves=%zu degraded=%d out=%s\n", log.meta.formulation.c_str(),
                log.steps(), log.solves.size(), degraded, a.out.c_str());
    return 0;
}

int run_verify(const std::string& run_dir, std::string scenario_path) {
    const dispatch::RunLog log = dispatch::RunLog::load(run_dir);
    if (scenario_path.empty()) scenario_path = log.meta.scenario_path;
    if (scenario_path.empty())
        throw ValidationError("run.json has no scenario path; pass --scenario");
    const FleetScenario sc = load_scenario(scenario_path);
    const auto violations = dispatch::verify_run(sc, log);
    for (const auto& v : violations)
        std::printf("violation: device=%s rule=%s step=%ld detail=%s\n", v.device_id.c_str(),
                    v.v.rule.c_str(), log.meta.first_step + v.v.step, v.v.detail.c_str());
    if (!violations.empty()) {
        std::fprintf(stderr, "dlcflex: error: %zu command violations in %s\n", violations.size(),
                     run_dir.c_str());
        return 1;
    }
    std::printf("verify: ok steps=%ld devices=%zu\n", log.steps(), log.device_ids.size());
    return 0;
}

int run_metrics(const std::string& run_dir, const std::string& baseline_dir,
                const std::string& kind_name, const std::string& out) {
    const PeakKind kind = parse_peak_kind(kind_name);
    const dispatch::RunLog scheme = dispatch::RunLog::load(run_dir);
    const dispatch::RunLog base = dispatch::RunLog::load(baseline_dir);
    const TimeGrid grid =
        TimeGrid::make(scheme.meta.dt_hours,
                       static_cast<int>(std::lround(24.0 / scheme.meta.dt_hours)), Timestamp{});
    std::string warn_s, warn_b;
    const auto scheme_daily =
        daily_peaks(scheme.p_total_kw, grid, kind, scheme.meta.first_step, &warn_s);
    const auto base_daily = daily_peaks(base.p_total_kw, grid, kind, base.meta.first_step, &warn_b);
    if (!warn_s.empty()) std::fprintf(stderr, "dlcflex: warning: %s: %s\n", run_dir.c_str(), warn_s.c_str());
    if (!warn_b.empty())
        std::fprintf(stderr, "dlcflex: warning: %s: %s\n", baseline_dir.c_str(), warn_b.c_str());
    const PeakSummary s =
        peak_reduction(scheme_daily, base_daily, kind, scheme.meta.p_ewh_nom_total_kw);
    write_summary_csv(out, {{scheme.meta.formulation, s}});
    std::printf("metrics: scheme=%s kind=%s days=%zu mean_daily_reduction_kw=%s "
                "max_reduction_kw=%s out=%s\n",
                scheme.meta.formulation.c_str(), to_string(kind).c_str(), scheme_daily.size(),
                format_double(s.mean_daily_reduction_kw).c_str(),
                format_double(s.max_reduction_kw).c_str(), out.c_str());
    return 0;
}

int run_oracle(const std::string& scenario_path, int cap, double time_limit_s) {
    const FleetScenario sc = load_scenario(scenario_path);
    dispatch::InflexibleEstimator est(sc);
    int rc = 0;
    for (Formulation f : {Formulation::Ideal, Formulation::L1, Formulation::L2,
                          Formulation::L2PF}) {
        dispatch::RollingConfig cfg;
        cfg.formulation = f;
        cfg.kappa = 1;
        cfg.time_limit_s = time_limit_s;
        if (!validate_settings(sc, f).empty()) continue;
        const dispatch::FleetState st = dispatch::init_fleet_state(sc);
        const dispatch::WindowModel wm =
            dispatch::assemble_window(sc, cfg, st, &est, 0, sc.grid.horizon_steps);
        const flexopt::BruteForceResult br = flexopt::brute_force(wm.in, f, cap);
        flexopt::BuiltModel bm = flexopt::build_model(wm.in);
        flexopt::set_objective(bm, wm.in, flexopt::objective_for(f), wm.p_ref_kw);
        flexopt::SolveSettings ss;
        ss.time_limit_s = time_limit_s;
        const flexopt::SolveOutcome so = flexopt::solve_model(bm, wm.in, ss);
        const double diff = std::abs(so.report.objective - br.objective);
        const bool ok = br.feasible && so.report.status == milp::SolveStatus::Optimal &&
                        diff <= 1e-6 * (1.0 + std::abs(br.objective));
        std::printf("oracle: formulation=%s brute=%s solver=%s diff=%.3e %s\n",
                    to_string(f).c_str(), format_double(br.objective).c_str(),
                    format_double(so.report.objective).c_str(), diff, ok ? "match" : "MISMATCH");
        if (!ok) rc = 1;
    }
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"direct load control simulation and evaluation"};
    app.require_subcommand(1);

    SimulateArgs sim;
    CLI::App* simulate = app.add_subcommand("simulate", "run a rolling-horizon simulation");
    simulate->add_option("--scenario", sim.scenario, "scenario JSON file")->required();
    simulate->add_option("--formulation", sim.formulation,
                         "none|ripple|l1|l2|l2pf|ideal|l1pilot")
        ->required();
    simulate->add_option("--kappa", sim.kappa, "steps applied per iteration");
    simulate->add_option("--horizon", sim.horizon, "window length override in steps");
    simulate->add_option("--time-limit", sim.time_limit_s, "per-iteration solve budget, seconds");
    simulate->add_option("--seed", sim.seed, "run seed");
    simulate->add_option("--init-days", sim.init_days, "free-run initialization days");
    simulate->add_flag("--ev-immediate", sim.ev_immediate,
                       "charge vehicles on arrival instead of scheduling them");
    simulate->add_option("--out", sim.out, "output run directory")->required();

    std::string verify_run_dir, verify_scenario;
    CLI::App* verify = app.add_subcommand("verify", "re-check all applied commands of a run");
    verify->add_option("--run", verify_run_dir, "run directory")->required();
    verify->add_option("--scenario", verify_scenario, "scenario JSON override");

    std::string met_run, met_base, met_kind = "consumption", met_out = "summary.csv";
    CLI::App* metrics = app.add_subcommand("metrics", "daily peak reductions against a baseline");
    metrics->add_option("--run", met_run, "scheme run directory")->required();
    metrics->add_option("--baseline", met_base, "baseline run directory")->required();
    metrics->add_option("--kind", met_kind, "consumption|injection");
    metrics->add_option("--out", met_out, "summary CSV path");

    std::string orc_scenario;
    int orc_cap = 24;
    double orc_limit = 60.0;
    CLI::App* oracle = app.add_subcommand("oracle", "cross-check solver against brute force");
    oracle->add_option("--scenario", orc_scenario, "scenario JSON file")->required();
    oracle->add_option("--cap", orc_cap, "max binary decisions for enumeration");
    oracle->add_option("--time-limit", orc_limit, "solver budget, seconds");

    CLI11_PARSE(app, argc, argv);
    try {
        if (simulate->parsed()) return run_simulate(sim);
        if (verify->parsed()) return run_verify(verify_run_dir, verify_scenario);
        if (metrics->parsed()) return run_metrics(met_run, met_base, met_kind, met_out);
        if (oracle->parsed()) return run_oracle(orc_scenario, orc_cap, orc_limit);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "dlcflex: error: %s\n", e.what());
        return 1;
    }
    return 0;
}
