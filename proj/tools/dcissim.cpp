// Command line front end: simulate, identify, covariance, experiment, bench.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dcissim/dcissim.hpp"

namespace fs = std::filesystem;
using namespace dcissim;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> trials;
    std::optional<std::string> mode;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "first seed (overrides the config)");
    app->add_option("--out", c.out, "output directory (overrides the config)");
    app->add_option("--trials", c.trials, "number of trials (overrides the config)")->check(CLI::PositiveNumber);
    app->add_option("--mode", c.mode, "frequency mode")->check(CLI::IsMember({"full", "reduced"}));
}

ExperimentConfig load(const Common& c) {
    ExperimentConfig cfg = load_config(c.config);
    if (c.seed || c.trials) {
        const std::uint64_t first = c.seed ? *c.seed : cfg.seeds.front();
        const int count = c.trials ? *c.trials : static_cast<int>(cfg.seeds.size());
        cfg.seeds.clear();
        for (int i = 0; i < count; ++i) cfg.seeds.push_back(first + static_cast<std::uint64_t>(i));
    }
    if (c.out) cfg.output_dir = *c.out;
    if (c.mode) cfg.reduced = *c.mode == "reduced";
    cfg.validate();
    for (const auto& w : cfg.warnings()) std::cerr << "warning: " << w << '\n';
    return cfg;
}

TrialData single_trial_data(const ExperimentConfig& cfg, const std::optional<std::string>& input) {
    TrialData d = make_trial_data(cfg, cfg.seeds.front(), cfg.samples);
    if (input) {
        d.samples = io::read_samples_csv(*input);
        if (d.samples.m() != d.plant.m() || d.samples.p() != d.plant.p())
            throw DimensionError("input samples do not match the configured plant dimensions");
    }
    return d;
}

int cmd_simulate(const Common& c) {
    const auto cfg = load(c);
    const TrialData d = make_trial_data(cfg, cfg.seeds.front(), cfg.samples);
    fs::create_directories(cfg.output_dir);
    const fs::path dir(cfg.output_dir);
    io::write_samples_csv((dir / "samples.csv").string(), d.samples);
    io::write_signal_csv((dir / "excitation.csv").string(), d.period);
    io::write_json((dir / "plant.json").string(), io::to_json(d.plant));
    io::write_json((dir / "noise.json").string(), io::to_json(d.noise));
    std::cout << "wrote " << d.samples.size() << " samples to " << (dir / "samples.csv").string() << '\n';
    return 0;
}

int cmd_identify(const Common& c, const std::optional<std::string>& input, bool with_covariance) {
    auto cfg = load(c);
    if (with_covariance && !cfg.covariance) cfg.covariance = CovarianceMode::psd;
    if (!with_covariance) cfg.covariance.reset();
    const TrialData d = single_trial_data(cfg, input);
    const PipelineResult r = run_pipeline(cfg, d);
    fs::create_directories(cfg.output_dir);
    const fs::path dir(cfg.output_dir);
    io::write_json((dir / "isp.json").string(), io::to_json(r.isp));
    io::write_json((dir / "identified.json").string(), io::to_json(r.identified));
    for (const auto& w : r.identified.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "order " << r.identified.order << (r.identified.stable ? "" : " (unstable)") << '\n';
    if (!input) {
        const auto h = relative_h_errors(d.plant, r.identified.model);
        std::cout << "delta2 " << h.delta2 << "  delta_inf " << h.delta_inf << '\n';
    }
    if (with_covariance) {
        io::write_json((dir / "correlations.json").string(), io::to_json(*r.correlations));
        io::write_json((dir / "covariance.json").string(), io::to_json(r.covariances->triple));
        io::write_json((dir / "solver.json").string(), io::to_json(*r.report));
        const auto& t = r.covariances->triple;
        std::cout << "sigma_ww\n" << t.sigma_ww << "\nsigma_vv\n" << t.sigma_vv << "\nsigma_tt\n" << t.sigma_tt << '\n';
    }
    return 0;
}

int cmd_experiment(const Common& c) {
    const auto cfg = load(c);
    if (cfg.progressive) {
        const ProgressiveTable table = run_mimo_covariance_experiment(cfg);
        write_progressive(table, cfg.output_dir);
        for (const auto& [name, med] : table.medians)
            std::cout << name << ": first " << med.front() << "  last " << med.back() << '\n';
        for (const auto& e : table.errors) std::cerr << "error: " << e << '\n';
        return table.errors.empty() ? 0 : 2;
    }
    const ExperimentResult res = run_experiment(cfg, cfg.output_dir);
    for (const auto& [name, s] : res.aggregate)
        std::cout << name << ": mean " << s.mean << "  std " << s.std << "  (n=" << s.count << ")\n";
    for (const auto& t : res.trials)
        if (!t.ok) std::cerr << "trial " << t.trial << " (seed " << t.seed << ") failed: " << t.error << '\n';
    return res.failures() == 0 ? 0 : 2;
}

int cmd_bench(const std::string& path, const std::optional<std::string>& out) {
    const auto j = io::read_json(path);
    detail::check_keys(j, {"sizes", "repeats", "seed", "output_dir"}, "bench");
    std::vector<BenchSize> sizes;
    for (const auto& s : j.at("sizes")) {
        const auto v = s.get<std::vector<long long>>();
        if (v.size() != 3) throw DimensionError("bench: each size is [T, N, q]");
        sizes.push_back({static_cast<int>(v[0]), static_cast<Eigen::Index>(v[1]), static_cast<std::size_t>(v[2])});
    }
    const auto res = bench_complexity(sizes, j.value("seed", std::uint64_t{7}), j.value("repeats", 3));
    const std::string dir = out ? *out : j.value("output_dir", std::string("out/bench"));
    write_bench(res, dir);
    std::cout << "T,N,q,alg1_s,alg3_s,dense_ls_s\n";
    for (const auto& r : res.rows)
        std::cout << r.size.period << ',' << r.size.samples << ',' << r.size.q << ',' << r.alg1 << ',' << r.alg3 << ','
                  << r.dense_ls << '\n';
    std::cout << "alg1 exponent in N " << res.alg1_exponent_n << ", alg3 exponent in N " << res.alg3_exponent_n
              << ", alg1 exponent in q " << res.alg1_exponent_q << ", dense LS exponent in q " << res.dense_exponent_q
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete-time identification and noise covariance estimation from periodic excitation"};
    app.require_subcommand(1);

    Common sim, idf, cov, exp;
    std::optional<std::string> idf_input, cov_input, bench_out;
    std::string bench_config;

    auto* s = app.add_subcommand("simulate", "simulate one dataset and write samples, plant and noise");
    add_common(s, sim);
    auto* i = app.add_subcommand("identify", "estimate (A, B, C, D) from simulated or recorded samples");
    add_common(i, idf);
    i->add_option("--input", idf_input, "samples CSV to identify instead of simulating")->check(CLI::ExistingFile);
    auto* c = app.add_subcommand("covariance", "identify and recover the noise covariances");
    add_common(c, cov);
    c->add_option("--input", cov_input, "samples CSV to use instead of simulating")->check(CLI::ExistingFile);
    auto* e = app.add_subcommand("experiment", "run a Monte-Carlo or progressive experiment");
    add_common(e, exp);
    auto* b = app.add_subcommand("bench", "time the projection algorithms against dense least squares");
    b->add_option("--config", bench_config, "benchmark sizes (JSON)")->required()->check(CLI::ExistingFile);
    b->add_option("--out", bench_out, "output directory");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*s) return cmd_simulate(sim);
        if (*i) return cmd_identify(idf, idf_input, false);
        if (*c) return cmd_identify(cov, cov_input, true);
        if (*e) return cmd_experiment(exp);
        if (*b) return cmd_bench(bench_config, bench_out);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
