// Command line front end: one verb per pipeline stage plus run and report.
// Exit codes: 0 ok, 1 a claim failed, 2 execution error.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <cstdlib>
#include <fmt/core.h>
#include <iostream>

#include "swt/errors.hpp"
#include "swt/report.hpp"

using namespace swt;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::vector<std::string> set;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config, "config file (defaults if omitted)");
    app->add_option("-o,--out", c.out, "output directory");
    app->add_option("--set", c.set, "override, section.key=value")->take_all();
}

ExperimentConfig build(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig::defaults() : load_config(c.config);
    for (auto& s : c.set) apply_override(cfg, s);
    if (!c.out.empty()) cfg.out = c.out;
    return cfg;
}

// SWT_THREADS caps worker threads; the numerics currently run on one thread
void apply_thread_cap() {
    const char* v = std::getenv("SWT_THREADS");
    if (!v) return;
    char* end = nullptr;
    long n = std::strtol(v, &end, 10);
    if (*v == '\0' || *end != '\0' || n < 1) throw Error(Errc::BadConfig, "SWT_THREADS must be a positive integer");
    Eigen::setNbThreads(static_cast<int>(n));
}

int finish(const fs::path& manifest) {
    Report r = report(manifest);
    std::cout << r.table();
    for (auto& c : r.claims)
        if (c.note.rfind("error: ", 0) == 0) return 2;
    return r.all_pass() ? 0 : 1;
}

int run_tasks(ExperimentConfig cfg, std::vector<std::string> tasks) {
    cfg.tasks = std::move(tasks);
    RunManifest m = run(cfg);
    fmt::print("{} task(s) written to {}\n", m.tasks.size(), cfg.out.string());
    return finish(cfg.out / "manifest.jsonl");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Model solutions and linearization checks near a Z2-harmonic spinor"};
    app.require_subcommand(1);

    Common c;
    std::vector<std::string> tasks;
    bool tasks_given = false;

    auto* profile = app.add_subcommand("profile", "solve the radial profile");
    add_common(profile, c);
    auto* fiducial = app.add_subcommand("fiducial", "de-singularized configurations and their error");
    add_common(fiducial, c);
    auto* disk = app.add_subcommand("disk", "disk Fredholm counts, uniform estimates and the normal kernel");
    add_common(disk, c);

    auto* tube = app.add_subcommand("tube", "tube operator");
    tube->require_subcommand(1);
    std::string eps_list, ell_list;
    double nu = 0, L0 = 0, eps = 0;
    auto* scan = tube->add_subcommand("scan", "index audit, invertibility scan and identities");
    add_common(scan, c);
    scan->add_option("--eps-list", eps_list, "decreasing eps values, e.g. \"2^-6 2^-8\"");
    scan->add_option("--nu", nu, "weight");
    scan->add_option("--L0", L0, "mode split constant");
    auto* modes = tube->add_subcommand("modes", "Euclidean modes, matched growth and the approximate kernel ladder");
    add_common(modes, c);
    modes->add_option("--eps", eps, "eps of the ladder");
    auto* newton = tube->add_subcommand("newton", "Newton correction");
    add_common(newton, c);
    newton->add_option("--eps-list", eps_list, "decreasing eps values");

    auto* runc = app.add_subcommand("run", "run the configured tasks");
    add_common(runc, c);
    runc->add_option("--tasks", tasks, "task subset")->each([&](const std::string&) { tasks_given = true; });

    std::string manifest;
    auto* rep = app.add_subcommand("report", "claim table of the latest run in a manifest");
    rep->add_option("manifest", manifest, "manifest.jsonl or its directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        apply_thread_cap();
        if (*rep) {
            fs::path m = manifest;
            if (fs::is_directory(m)) m /= "manifest.jsonl";
            return finish(m);
        }
        ExperimentConfig cfg = build(c);
        if (*profile) return run_tasks(cfg, {"profile"});
        if (*fiducial) return run_tasks(cfg, {"fiducial"});
        if (*disk) return run_tasks(cfg, {"fredholm", "kernel"});
        if (*scan) {
            if (!eps_list.empty()) apply_override(cfg, "tube.eps=" + eps_list);
            if (scan->count("--nu")) cfg.nu = nu;
            if (scan->count("--L0")) cfg.L0 = L0;
            return run_tasks(cfg, {"scan"});
        }
        if (*modes) {
            if (modes->count("--eps")) cfg.ladder_eps = eps;
            return run_tasks(cfg, {"modes"});
        }
        if (*newton) {
            if (!eps_list.empty()) apply_override(cfg, "newton.eps=" + eps_list);
            return run_tasks(cfg, {"newton"});
        }
        if (*runc) return run_tasks(cfg, tasks_given ? tasks : cfg.tasks);
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 2;
}
