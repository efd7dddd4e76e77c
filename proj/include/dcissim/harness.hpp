#pragma once

// Experiment orchestration: configuration, per-trial pipeline (plant,
// excitation, noise calibration, simulation, projection, identification,
// covariance recovery, metrics), Monte-Carlo batches on a worker pool,
// progressive-length covariance runs and the complexity benchmark.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dcissim/covariance.hpp"
#include "dcissim/excitation.hpp"
#include "dcissim/io.hpp"
#include "dcissim/isp.hpp"
#include "dcissim/lti.hpp"
#include "dcissim/metrics.hpp"
#include "dcissim/sim_id.hpp"

namespace dcissim {

// ---------------------------------------------------------------------------
// Configuration

struct PlantConfig {
    enum class Kind { random, fixed };
    Kind kind = Kind::random;
    int n = 4, m = 1, p = 1;
    double max_radius = 0.95;
    std::optional<StateSpaceModel> model;    // fixed plants
    std::optional<CovarianceTriple> noise;   // explicit covariances override the SNR rule
};

struct ExcitationConfig {
    enum class Kind { multisine, chirp, random, file };
    Kind kind = Kind::chirp;
    int period = 1000;
    double w_start = 0.0;
    double w_end = 0.4 * kPi;
    double amplitude = 1.0;
    std::optional<std::uint64_t> seed;  // default: derived from the trial seed
    std::vector<int> indices;           // explicit multisine
    Matrix a, b;
    std::string path;                   // one period, samples CSV layout (u columns)
};

struct ProgressiveConfig {
    int start_periods = 10;
    int step_periods = 10;
};

struct ExperimentConfig {
    PlantConfig plant;
    ExcitationConfig excitation;
    std::optional<double> snr_db = 30.0;  // empty: noise-free
    Eigen::Index samples = 50000;
    bool reduced = false;
    std::size_t q = 0;
    bool nominal_band = false;  // reduced candidates limited to the chirp band
    std::optional<OrderSelectionPolicy> order;  // empty: fixed to the true order
    int n_bar = 0;                              // 0: twice the plant order
    std::optional<CovarianceMode> covariance;   // empty: off
    int lag_count = 0;                          // 0: choose_lag_count
    int lag_r = 10;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";
    std::optional<ProgressiveConfig> progressive;
    bool discard_first_period = true;
    unsigned threads = 0;  // 0: hardware concurrency

    [[nodiscard]] int plant_order() const { return plant.model ? static_cast<int>(plant.model->n()) : plant.n; }
    [[nodiscard]] int plant_inputs() const { return plant.model ? static_cast<int>(plant.model->m()) : plant.m; }
    [[nodiscard]] int plant_outputs() const { return plant.model ? static_cast<int>(plant.model->p()) : plant.p; }
    [[nodiscard]] int effective_n_bar() const { return n_bar > 0 ? n_bar : 2 * plant_order(); }

    void validate() const {
        if (excitation.period < 2) throw DimensionError("config: excitation.period must be >= 2");
        if (samples < excitation.period || samples % excitation.period != 0)
            throw DimensionError("config: samples must be a positive multiple of the period");
        if (snr_db && !std::isfinite(*snr_db)) throw DimensionError("config: snr_db must be finite");
        if (seeds.empty()) throw DimensionError("config: at least one seed is required");
        if (plant.kind == PlantConfig::Kind::fixed && !plant.model)
            throw DimensionError("config: fixed plant needs a model");
        if (plant_order() < 1 || plant_inputs() < 1 || plant_outputs() < 1)
            throw DimensionError("config: plant dimensions must be >= 1");
        if (reduced && q == 0) throw DimensionError("config: reduced mode needs q >= 1");
        if (lag_r < 0) throw DimensionError("config: lag_r must be >= 0");
        if (progressive) {
            if (progressive->start_periods < 1 || progressive->step_periods < 1)
                throw DimensionError("config: progressive periods must be >= 1");
            if (static_cast<Eigen::Index>(progressive->start_periods) * excitation.period > samples)
                throw DimensionError("config: progressive start exceeds samples");
        }
    }

    // Identifiability warnings that do not stop a run.
    [[nodiscard]] std::vector<std::string> warnings() const {
        std::vector<std::string> out;
        const std::size_t need = static_cast<std::size_t>(plant_inputs()) *
                                 static_cast<std::size_t>(plant_order() + effective_n_bar());
        if (reduced && q < need)
            out.push_back("reduced q = " + std::to_string(q) + " is below m(n + n_bar) = " + std::to_string(need));
        return out;
    }
};

namespace detail {

inline void check_keys(const io::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw DimensionError("config: '" + where + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!ok.count(key)) throw DimensionError("config: unknown key '" + key + "' in " + where);
    }
}

inline std::string resolve_path(const std::string& path, const std::filesystem::path& base) {
    if (path.empty()) return path;
    const std::filesystem::path p(path);
    return p.is_absolute() ? path : (base / p).string();
}

}  // namespace detail

// Parses a JSON experiment description; relative file paths resolve against
// `base_dir`. Unknown keys are rejected at every level.
inline ExperimentConfig parse_config(const io::json& j, const std::filesystem::path& base_dir = ".") {
    using detail::check_keys;
    check_keys(j,
               {"plant", "excitation", "snr_db", "samples", "frequency_mode", "q", "reduced_band", "order", "n_bar",
                "covariance", "lag_count", "lag_r", "seeds", "seed", "trials", "output_dir", "progressive",
                "discard_first_period", "threads"},
               "top level");
    ExperimentConfig c;

    const auto& pj = j.at("plant");
    check_keys(pj, {"kind", "n", "m", "p", "max_radius", "model", "A", "B", "C", "D", "noise"}, "plant");
    const auto kind = pj.value("kind", std::string("random"));
    if (kind == "random") {
        c.plant.kind = PlantConfig::Kind::random;
        c.plant.n = pj.value("n", 4);
        c.plant.m = pj.value("m", 1);
        c.plant.p = pj.value("p", 1);
        c.plant.max_radius = pj.value("max_radius", 0.95);
    } else if (kind == "fixed") {
        c.plant.kind = PlantConfig::Kind::fixed;
        if (pj.contains("model")) {
            c.plant.model = io::model_from_json(io::read_json(detail::resolve_path(pj.at("model"), base_dir)));
        } else {
            io::json mj = {{"A", pj.at("A")}, {"B", pj.at("B")}, {"C", pj.at("C")}, {"D", pj.at("D")}};
            c.plant.model = io::model_from_json(mj);
        }
    } else {
        throw DimensionError("config: plant.kind must be random or fixed");
    }
    if (pj.contains("noise")) c.plant.noise = io::triple_from_json(pj.at("noise"));

    const auto& ej = j.at("excitation");
    check_keys(ej, {"kind", "period", "band", "amplitude", "seed", "indices", "a", "b", "path"}, "excitation");
    const auto ek = ej.value("kind", std::string("chirp"));
    if (ek == "multisine") c.excitation.kind = ExcitationConfig::Kind::multisine;
    else if (ek == "chirp") c.excitation.kind = ExcitationConfig::Kind::chirp;
    else if (ek == "random") c.excitation.kind = ExcitationConfig::Kind::random;
    else if (ek == "file") c.excitation.kind = ExcitationConfig::Kind::file;
    else throw DimensionError("config: excitation.kind must be multisine, chirp, random or file");
    c.excitation.period = ej.at("period").get<int>();
    if (ej.contains("band")) {
        const auto band = ej.at("band").get<std::vector<double>>();
        if (band.size() != 2 || !(band[0] >= 0.0 && band[1] >= band[0] && band[1] <= kPi))
            throw DimensionError("config: excitation.band must be [w_start, w_end] within [0, pi]");
        c.excitation.w_start = band[0];
        c.excitation.w_end = band[1];
    }
    c.excitation.amplitude = ej.value("amplitude", 1.0);
    if (ej.contains("seed")) c.excitation.seed = ej.at("seed").get<std::uint64_t>();
    if (ej.contains("indices")) {
        c.excitation.indices = ej.at("indices").get<std::vector<int>>();
        c.excitation.a = io::matrix_from_json(ej.at("a"), "excitation.a");
        c.excitation.b = io::matrix_from_json(ej.at("b"), "excitation.b");
    }
    if (ej.contains("path")) c.excitation.path = detail::resolve_path(ej.at("path"), base_dir);
    if (c.excitation.kind == ExcitationConfig::Kind::file && c.excitation.path.empty())
        throw DimensionError("config: file excitation needs a path");

    if (j.contains("snr_db")) {
        if (j.at("snr_db").is_null()) c.snr_db.reset();
        else c.snr_db = j.at("snr_db").get<double>();
    }
    c.samples = j.value("samples", static_cast<Eigen::Index>(50 * c.excitation.period));
    const auto mode = j.value("frequency_mode", std::string("full"));
    if (mode != "full" && mode != "reduced") throw DimensionError("config: frequency_mode must be full or reduced");
    c.reduced = mode == "reduced";
    c.q = j.value("q", std::size_t{0});
    const auto band = j.value("reduced_band", std::string("threshold"));
    if (band != "threshold" && band != "nominal")
        throw DimensionError("config: reduced_band must be threshold or nominal");
    c.nominal_band = band == "nominal";
    if (j.contains("order")) {
        const auto& oj = j.at("order");
        check_keys(oj, {"mode", "n", "ratio"}, "order");
        const auto om = oj.value("mode", std::string("fixed"));
        if (om == "fixed") {
            if (oj.contains("n")) c.order = OrderSelectionPolicy::fixed(oj.at("n").get<int>());
        } else if (om == "tolerance") {
            c.order = OrderSelectionPolicy::tolerance(oj.value("ratio", 1e-6));
        } else {
            throw DimensionError("config: order.mode must be fixed or tolerance");
        }
    }
    c.n_bar = j.value("n_bar", 0);
    const auto cov = j.value("covariance", std::string("off"));
    if (cov == "ls") c.covariance = CovarianceMode::ls;
    else if (cov == "psd") c.covariance = CovarianceMode::psd;
    else if (cov != "off") throw DimensionError("config: covariance must be off, ls or psd");
    c.lag_count = j.value("lag_count", 0);
    c.lag_r = j.value("lag_r", 10);
    if (j.contains("seeds")) {
        c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
        const auto first = j.value("seed", std::uint64_t{1});
        const auto trials = j.value("trials", 1);
        if (trials < 1) throw DimensionError("config: trials must be >= 1");
        c.seeds.clear();
        for (int i = 0; i < trials; ++i) c.seeds.push_back(first + static_cast<std::uint64_t>(i));
    }
    c.output_dir = j.value("output_dir", std::string("out"));
    if (j.contains("progressive")) {
        const auto& gj = j.at("progressive");
        check_keys(gj, {"start_periods", "step_periods"}, "progressive");
        c.progressive = ProgressiveConfig{gj.value("start_periods", 10), gj.value("step_periods", 10)};
    }
    c.discard_first_period = j.value("discard_first_period", true);
    c.threads = j.value("threads", 0u);
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    const auto base = std::filesystem::path(path).parent_path();
    return parse_config(io::read_json(path), base.empty() ? std::filesystem::path(".") : base);
}

// ---------------------------------------------------------------------------
// Trial building blocks

// SplitMix64 finaliser: independent streams per (seed, purpose).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline StateSpaceModel make_plant(const PlantConfig& cfg, std::uint64_t seed) {
    if (cfg.kind == PlantConfig::Kind::fixed) return *cfg.model;
    return random_sut(cfg.n, cfg.m, cfg.p, cfg.max_radius, derive_seed(seed, 1));
}

// One period of the excitation (T x m).
inline Matrix make_excitation_period(const ExcitationConfig& cfg, int m, std::uint64_t seed) {
    const std::uint64_t s = cfg.seed ? *cfg.seed : derive_seed(seed, 2);
    switch (cfg.kind) {
        case ExcitationConfig::Kind::chirp:
            return chirp_period(cfg.period, m, cfg.w_start, cfg.w_end, cfg.amplitude);
        case ExcitationConfig::Kind::random:
            return random_period(cfg.period, m, s, cfg.amplitude);
        case ExcitationConfig::Kind::file: {
            const SampleSet sig = io::read_samples_csv(cfg.path);
            detail::require(sig.size() == cfg.period && sig.m() == m,
                            "excitation file must hold one period with m input columns");
            return sig.u;
        }
        case ExcitationConfig::Kind::multisine: {
            if (!cfg.indices.empty()) {
                const FrequencySelection sel{cfg.period, cfg.indices};
                return generate_signal(build_excitation(sel, cfg.a, cfg.b), cfg.period);
            }
            // equal-amplitude lines over the band with random phases per channel
            std::vector<int> idx;
            const double w = 2.0 * kPi / cfg.period;
            for (int r = 1; 2 * r < cfg.period; ++r)
                if (r * w >= cfg.w_start - 1e-12 && r * w <= cfg.w_end + 1e-12) idx.push_back(r);
            if (idx.empty()) throw ExcitationError("multisine band contains no harmonic of 2 pi / T");
            std::mt19937_64 rng(s);
            std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
            Matrix a(m, static_cast<Eigen::Index>(idx.size())), b(m, static_cast<Eigen::Index>(idx.size()));
            const double amp = cfg.amplitude * std::sqrt(2.0 / static_cast<double>(idx.size()));
            for (Eigen::Index i = 0; i < a.cols(); ++i) {
                for (int j = 0; j < m; ++j) {
                    const double ph = phase(rng);
                    a(j, i) = amp * std::cos(ph);
                    b(j, i) = amp * std::sin(ph);
                }
            }
            return generate_signal(build_excitation({cfg.period, idx}, a, b), cfg.period);
        }
    }
    throw DimensionError("unknown excitation kind");
}

// Noise covariances giving the target per-channel SNR. Output channel i gets
// a total noise power P_y,i 10^{-snr/10}, half of the tightest channel's
// budget going to a scalar process noise beta I and the rest to Sigma_vv;
// input channel j gets Sigma_tt,jj = P_u,j 10^{-snr/10}.
inline CovarianceTriple calibrate_noise(const StateSpaceModel& plant, const Matrix& period, double snr_db) {
    const PeriodicResponse resp = periodic_steady_state(plant, period);
    const double ratio = std::pow(10.0, -snr_db / 10.0);
    const Vector py = resp.y.colwise().squaredNorm().transpose() / static_cast<double>(period.rows());
    const Vector pu = period.colwise().squaredNorm().transpose() / static_cast<double>(period.rows());
    const Matrix gain = plant.c * solve_discrete_lyapunov(plant.a, Matrix::Identity(plant.n(), plant.n())) *
                        plant.c.transpose();
    double beta = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < plant.p(); ++i) beta = std::min(beta, 0.5 * ratio * py(i) / gain(i, i));
    CovarianceTriple out;
    out.sigma_ww = beta * Matrix::Identity(plant.n(), plant.n());
    out.sigma_vv = Matrix::Zero(plant.p(), plant.p());
    for (Eigen::Index i = 0; i < plant.p(); ++i) out.sigma_vv(i, i) = ratio * py(i) - beta * gain(i, i);
    out.sigma_tt = Matrix((ratio * pu).asDiagonal());
    return out;
}

// Per-channel output SNR (dB) implied by a noise triple.
inline Vector output_snr_db(const StateSpaceModel& plant, const Matrix& period, const CovarianceTriple& noise) {
    const PeriodicResponse resp = periodic_steady_state(plant, period);
    const Vector py = resp.y.colwise().squaredNorm().transpose() / static_cast<double>(period.rows());
    const Matrix np = plant.c * solve_discrete_lyapunov(plant.a, noise.sigma_ww) * plant.c.transpose() + noise.sigma_vv;
    Vector out(plant.p());
    for (Eigen::Index i = 0; i < plant.p(); ++i) out(i) = 10.0 * std::log10(py(i) / np(i, i));
    return out;
}

struct TrialData {
    StateSpaceModel plant;
    CovarianceTriple noise;
    Matrix period;           // one excitation period, T x m
    ExcitationSystem excitation;
    SampleSet samples;       // after the first-period discard, re-indexed from 0
};

// Simulates `samples` usable samples (plus one discarded period).
inline TrialData make_trial_data(const ExperimentConfig& cfg, std::uint64_t seed, Eigen::Index samples) {
    TrialData d;
    d.plant = make_plant(cfg.plant, seed);
    d.period = make_excitation_period(cfg.excitation, static_cast<int>(d.plant.m()), seed);
    d.excitation = fit_periodic(d.period, cfg.excitation.period);
    if (cfg.plant.noise) d.noise = *cfg.plant.noise;
    else if (cfg.snr_db) d.noise = calibrate_noise(d.plant, d.period, *cfg.snr_db);
    else d.noise = CovarianceTriple::zero(d.plant.n(), d.plant.m(), d.plant.p());

    const Eigen::Index t = cfg.excitation.period;
    const Eigen::Index lead = cfg.discard_first_period ? t : 0;
    Matrix u(samples + lead, d.plant.m());
    for (Eigen::Index k = 0; k < u.rows(); ++k) u.row(k) = d.period.row(k % t);
    const SampleSet all = simulate(d.plant, d.noise, u, Vector::Zero(d.plant.n()), derive_seed(seed, 3));
    d.samples = all.slice(lead, samples);
    return d;
}

struct PipelineResult {
    IspResult isp;
    IdentifiedSystem identified;
    std::optional<PeReport> pe;
    std::optional<CorrelationSet> correlations;
    std::optional<CovarianceSolveReport> report;
    std::optional<RecoveredCovariances> covariances;
};

inline PipelineResult run_pipeline(const ExperimentConfig& cfg, const TrialData& d) {
    PipelineResult out;
    const int t = cfg.excitation.period;
    const int n = static_cast<int>(d.plant.n());
    const int n_bar = cfg.effective_n_bar();
    std::optional<PeriodSpectrum> spectrum;
    if (cfg.reduced) {
        const bool chirp = cfg.excitation.kind == ExcitationConfig::Kind::chirp;
        const auto sel = chirp && cfg.nominal_band ? select_band(d.excitation, cfg.q, 1e-3, cfg.excitation.w_start, cfg.excitation.w_end)
                               : select_band(d.excitation, cfg.q);
        out.isp = isp_offline_matmul(d.samples, restrict_to(d.excitation, sel));
    } else {
        spectrum = averaged_period_spectrum(d.samples, t);
        out.isp = isp_from_spectrum(*spectrum);
    }
    out.pe = pe_check(out.isp, n, n_bar);
    const auto policy = cfg.order ? *cfg.order : OrderSelectionPolicy::fixed(n);
    out.identified = identify(out.isp, n_bar, policy);
    if (!out.pe->satisfied)
        out.identified.warnings.push_back("persistent excitation rank " + std::to_string(out.pe->rank) +
                                          " below " + std::to_string(out.pe->required));

    if (cfg.covariance) {
        if (!spectrum) spectrum = averaged_period_spectrum(d.samples, t);
        const auto& est = out.identified.model;
        const int lags = cfg.lag_count > 0 ? cfg.lag_count
                                           : choose_lag_count(d.samples.size(), static_cast<int>(est.n()),
                                                              static_cast<int>(est.p()));
        out.correlations = correlations_fft(d.samples, *spectrum, std::max(lags, cfg.lag_r + 1));
        out.report = solve_xi_zz(*out.correlations, est.a, est.c, *cfg.covariance);
        out.covariances = recover_covariances(out.report->xi_zz, *out.correlations, est.a, est.c);
    }
    return out;
}

inline TrialMetrics evaluate(const ExperimentConfig& cfg, const TrialData& d, const PipelineResult& r) {
    TrialMetrics m;
    const auto h = relative_h_errors(d.plant, r.identified.model);
    m.delta2 = h.delta2;
    m.delta_inf = h.delta_inf;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.eta_w = m.eta_v = m.eta_t = m.eta_r = nan;
    if (r.covariances) {
        const auto& est = r.identified.model;
        const auto& cov = r.covariances->triple;
        if (est.n() == d.plant.n()) {
            const auto w = sigma_w_error(d.noise.sigma_ww, d.plant.a, cov.sigma_ww, est.a);
            m.eta_w = w.available ? w.value : nan;
        }
        m.eta_v = relative_frobenius(cov.sigma_vv, d.noise.sigma_vv);
        m.eta_t = relative_frobenius(cov.sigma_tt, d.noise.sigma_tt);
        const auto truth = analytic_correlations(d.plant, d.noise, cfg.lag_r + 1);
        const auto fit = model_correlations(est.a, est.c, r.report->xi_zz, cov.sigma_vv, cfg.lag_r + 1);
        m.eta_r = correlation_error(truth, fit, cfg.lag_r).value;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Monte-Carlo batch

struct TrialOutcome {
    int trial = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    TrialMetrics metrics;
    io::json estimates;  // raw estimates for persistence
};

struct AggregateStat {
    double mean = 0.0;
    double std = 0.0;
    int count = 0;
};

struct ExperimentResult {
    std::vector<TrialOutcome> trials;  // sorted by seed, then trial index
    std::map<std::string, AggregateStat> aggregate;
    std::vector<std::string> warnings;

    [[nodiscard]] int failures() const {
        return static_cast<int>(std::count_if(trials.begin(), trials.end(), [](const auto& t) { return !t.ok; }));
    }
};

inline AggregateStat summarize(const std::vector<double>& values) {
    AggregateStat s;
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        s.mean += v;
        ++s.count;
    }
    if (s.count == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), 0};
    s.mean /= s.count;
    for (double v : values)
        if (std::isfinite(v)) s.std += (v - s.mean) * (v - s.mean);
    s.std = s.count > 1 ? std::sqrt(s.std / (s.count - 1)) : 0.0;
    return s;
}

// Runs `count` jobs on a pool of worker threads; job i is handled by exactly
// one worker and results land in slot i.
template <typename Job>
void parallel_for(std::size_t count, unsigned threads, Job&& job) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) job(i);
        });
    }
    for (auto& th : pool) th.join();
}

inline TrialOutcome run_trial(const ExperimentConfig& cfg, int trial, std::uint64_t seed) {
    TrialOutcome out;
    out.trial = trial;
    out.seed = seed;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.metrics = {nan, nan, nan, nan, nan, nan, nan};
    try {
        const TrialData d = make_trial_data(cfg, seed, cfg.samples);
        const auto start = std::chrono::steady_clock::now();
        const PipelineResult r = run_pipeline(cfg, d);
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.metrics = evaluate(cfg, d, r);
        out.metrics.wall_time = elapsed;
        out.estimates = {{"trial", trial},
                         {"seed", seed},
                         {"truth", io::to_json(d.plant)},
                         {"noise", io::to_json(d.noise)},
                         {"identified", io::to_json(r.identified)},
                         {"warnings", r.identified.warnings}};
        if (r.covariances) {
            out.estimates["covariance"] = io::to_json(r.covariances->triple);
            out.estimates["solver"] = io::to_json(*r.report);
        }
        out.ok = std::isfinite(out.metrics.delta2) && std::isfinite(out.metrics.delta_inf);
        if (!out.ok) out.error = "identified model is unstable";
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

inline ExperimentResult run_trials(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentResult res;
    res.warnings = cfg.warnings();
    res.trials.resize(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), cfg.threads, [&](std::size_t i) {
        res.trials[i] = run_trial(cfg, static_cast<int>(i), cfg.seeds[i]);
    });
    std::stable_sort(res.trials.begin(), res.trials.end(), [](const auto& x, const auto& y) {
        return x.seed < y.seed || (x.seed == y.seed && x.trial < y.trial);
    });
    auto collect = [&](auto field) {
        std::vector<double> v;
        for (const auto& t : res.trials)
            if (t.ok) v.push_back(field(t.metrics));
        return summarize(v);
    };
    res.aggregate["delta2"] = collect([](const TrialMetrics& m) { return m.delta2; });
    res.aggregate["delta_inf"] = collect([](const TrialMetrics& m) { return m.delta_inf; });
    if (cfg.covariance) {
        res.aggregate["eta_w"] = collect([](const TrialMetrics& m) { return m.eta_w; });
        res.aggregate["eta_v"] = collect([](const TrialMetrics& m) { return m.eta_v; });
        res.aggregate["eta_t"] = collect([](const TrialMetrics& m) { return m.eta_t; });
        res.aggregate["eta_r"] = collect([](const TrialMetrics& m) { return m.eta_r; });
    }
    res.aggregate["time_s"] = collect([](const TrialMetrics& m) { return m.wall_time; });
    return res;
}

inline void write_metrics_csv(std::ostream& out, const ExperimentResult& res) {
    out << io::metrics_header() << '\n';
    for (const auto& t : res.trials) out << io::metrics_row(t.trial, t.seed, t.metrics) << '\n';
}

// Writes trials.csv, aggregate.json and estimates/trial_<i>.json.
inline void write_experiment(const ExperimentConfig& cfg, const ExperimentResult& res, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "estimates");
    {
        std::ofstream out(fs::path(dir) / "trials.csv");
        if (!out) throw Error("cannot write " + (fs::path(dir) / "trials.csv").string());
        write_metrics_csv(out, res);
    }
    io::json agg = io::json::object();
    for (const auto& [name, s] : res.aggregate) agg[name] = {{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
    io::json failures = io::json::array();
    for (const auto& t : res.trials) {
        if (!t.ok) failures.push_back({{"trial", t.trial}, {"seed", t.seed}, {"error", t.error}});
        if (!t.estimates.is_null())
            io::write_json((fs::path(dir) / "estimates" / ("trial_" + std::to_string(t.trial) + ".json")).string(),
                           t.estimates);
    }
    io::write_json((fs::path(dir) / "aggregate.json").string(),
                   {{"trials", res.trials.size()},
                    {"failures", failures},
                    {"metrics", agg},
                    {"warnings", res.warnings},
                    {"frequency_mode", cfg.reduced ? "reduced" : "full"}});
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::optional<std::string>& out_dir = {}) {
    ExperimentResult res = run_trials(cfg);
    if (out_dir) write_experiment(cfg, res, *out_dir);
    return res;
}

// ---------------------------------------------------------------------------
// Progressive-length covariance experiment

struct ProgressiveRow {
    std::uint64_t seed = 0;
    int step = 0;
    Eigen::Index samples = 0;
    std::string metric;
    double value = 0.0;
};

struct ProgressiveTable {
    std::vector<ProgressiveRow> rows;
    std::vector<Eigen::Index> steps;                       // sample counts per step
    std::map<std::string, std::vector<double>> medians;    // metric -> median per step
    std::vector<std::string> errors;
    std::vector<bool> psd_ok;                              // per (seed, step): recovered triples PSD

    [[nodiscard]] bool has_metric(const std::string& name) const { return medians.count(name) > 0; }
};

inline double median(std::vector<double> v) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline ProgressiveTable run_mimo_covariance_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const ProgressiveConfig prog = cfg.progressive ? *cfg.progressive : ProgressiveConfig{};
    const Eigen::Index t = cfg.excitation.period;
    ProgressiveTable table;
    for (Eigen::Index periods = prog.start_periods; periods * t <= cfg.samples; periods += prog.step_periods)
        table.steps.push_back(periods * t);

    std::vector<std::string> names{"delta2", "delta_inf"};
    if (cfg.covariance) names.insert(names.end(), {"eta_w", "eta_v", "eta_t", "eta_r"});

    struct SeedRows {
        std::vector<ProgressiveRow> rows;
        std::vector<bool> psd;
        std::vector<std::string> errors;
    };
    std::vector<SeedRows> per_seed(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), cfg.threads, [&](std::size_t i) {
        const std::uint64_t seed = cfg.seeds[i];
        auto& out = per_seed[i];
        TrialData full;
        try {
            full = make_trial_data(cfg, seed, cfg.samples);
        } catch (const std::exception& e) {
            out.errors.push_back("seed " + std::to_string(seed) + ": " + e.what());
            return;
        }
        for (std::size_t s = 0; s < table.steps.size(); ++s) {
            TrialData d = full;
            d.samples = full.samples.slice(0, table.steps[s]);
            try {
                const PipelineResult r = run_pipeline(cfg, d);
                const TrialMetrics m = evaluate(cfg, d, r);
                const double vals[] = {m.delta2, m.delta_inf, m.eta_w, m.eta_v, m.eta_t, m.eta_r};
                for (std::size_t k = 0; k < names.size(); ++k)
                    out.rows.push_back({seed, static_cast<int>(s), table.steps[s], names[k], vals[k]});
                if (r.covariances) {
                    const auto& tr = r.covariances->triple;
                    const double tol = 1e-8 * std::max(1.0, tr.sigma_vv.norm());
                    out.psd.push_back(detail::min_eigenvalue(tr.sigma_ww) >= -tol &&
                                      detail::min_eigenvalue(tr.sigma_vv) >= -tol &&
                                      detail::min_eigenvalue(tr.sigma_tt) >= -tol);
                }
            } catch (const std::exception& e) {
                out.errors.push_back("seed " + std::to_string(seed) + " step " + std::to_string(s) + ": " + e.what());
            }
        }
    });
    for (auto& s : per_seed) {
        table.rows.insert(table.rows.end(), s.rows.begin(), s.rows.end());
        table.psd_ok.insert(table.psd_ok.end(), s.psd.begin(), s.psd.end());
        table.errors.insert(table.errors.end(), s.errors.begin(), s.errors.end());
    }
    for (const auto& name : names) {
        std::vector<double> med;
        for (std::size_t s = 0; s < table.steps.size(); ++s) {
            std::vector<double> v;
            for (const auto& r : table.rows)
                if (r.metric == name && r.step == static_cast<int>(s)) v.push_back(r.value);
            med.push_back(median(v));
        }
        table.medians[name] = std::move(med);
    }
    return table;
}

inline void write_progressive(const ProgressiveTable& table, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / "progressive.csv");
    if (!out) throw Error("cannot write progressive.csv");
    out << "seed,step,samples,metric,value\n";
    for (const auto& r : table.rows)
        out << r.seed << ',' << r.step << ',' << r.samples << ',' << r.metric << ',' << io::format_double(r.value)
            << '\n';
    io::json med = io::json::object();
    for (const auto& [name, v] : table.medians) med[name] = v;
    io::write_json((fs::path(dir) / "progressive_summary.json").string(),
                   {{"samples", table.steps}, {"median", med}, {"errors", table.errors}});
}

// ---------------------------------------------------------------------------
// Complexity benchmark

struct BenchSize {
    int period = 0;
    Eigen::Index samples = 0;
    std::size_t q = 0;
};

struct BenchRow {
    BenchSize size;
    double alg1 = 0.0;      // period-partitioned products
    double alg3 = 0.0;      // per-period FFT (full selection)
    double dense_ls = std::numeric_limits<double>::quiet_NaN();  // N x s least squares, when it fits in memory
};

struct BenchResult {
    std::vector<BenchRow> rows;
    double alg1_exponent_n = std::numeric_limits<double>::quiet_NaN();
    double alg3_exponent_n = std::numeric_limits<double>::quiet_NaN();
    double alg1_exponent_q = std::numeric_limits<double>::quiet_NaN();
    double dense_exponent_q = std::numeric_limits<double>::quiet_NaN();
};

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(y[i])) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    }
    if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(lx.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    return sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

// Minimum wall time over repeats; each repeat loops until at least
// `min_seconds` elapsed so that short kernels are not dominated by timer noise.
template <typename F>
double time_kernel(F&& f, int repeats = 3, double min_seconds = 0.02) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < repeats; ++r) {
        int loops = 0;
        const auto start = std::chrono::steady_clock::now();
        double elapsed = 0.0;
        do {
            f();
            ++loops;
            elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        } while (elapsed < min_seconds);
        best = std::min(best, elapsed / loops);
    }
    return best;
}

// Evenly spread selection of q indices from 0..floor((T-1)/2).
inline FrequencySelection spread_selection(int period, std::size_t q) {
    const auto full = FrequencySelection::full(period);
    if (q >= full.count()) return full;
    std::vector<int> idx;
    for (std::size_t i = 0; i < q; ++i)
        idx.push_back(full.indices[(i * full.count()) / q]);
    return {period, idx};
}

inline BenchResult bench_complexity(const std::vector<BenchSize>& sizes, std::uint64_t seed = 7,
                                    int repeats = 3, double dense_limit = 4e7) {
    BenchResult res;
    for (const auto& size : sizes) {
        if (size.samples % size.period != 0) throw DimensionError("bench_complexity: N must be a multiple of T");
        SampleSet s;
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(size.samples) ^ size.q));
        std::normal_distribution<double> normal;
        s.u.resize(size.samples, 1);
        s.y.resize(size.samples, 1);
        for (Eigen::Index k = 0; k < size.samples; ++k) {
            s.u(k, 0) = normal(rng);
            s.y(k, 0) = normal(rng);
        }
        const auto sel = spread_selection(size.period, size.q);
        const ExcitationSystem sys{sel, Matrix::Zero(1, sel.state_dim()), std::vector<double>(sel.count(), 0.0)};
        BenchRow row;
        row.size = size;
        // the table is an input of the projection, as F_T in the algorithm statement
        const Matrix table = regressor_table(sel, sys.phases);
        row.alg1 = time_kernel([&] { volatile auto r = isp_offline_matmul(s, sys, table).samples_used; (void)r; },
                               repeats);
        row.alg3 = time_kernel([&] { volatile auto r = isp_offline_fft(s, size.period).samples_used; (void)r; },
                               repeats);
        if (static_cast<double>(size.samples) * static_cast<double>(sel.state_dim()) <= dense_limit) {
            row.dense_ls = time_kernel(
                [&] {
                    Matrix phi(size.samples, sel.state_dim());
                    for (Eigen::Index k = 0; k < size.samples; ++k)
                        phi.row(k) = regressor(sel, sys.phases, k).transpose();
                    Matrix z(size.samples, 2);
                    z << s.y, s.u;
                    volatile double r = phi.colPivHouseholderQr().solve(z)(0, 0);
                    (void)r;
                },
                1, 0.0);
        }
        res.rows.push_back(row);
    }
    // exponent in N: rows sharing the most common (T, q); exponent in q: rows sharing (T, N)
    auto fit = [&](auto key, auto xval, auto yval) {
        std::map<std::pair<long long, long long>, std::vector<const BenchRow*>> groups;
        for (const auto& r : res.rows) groups[key(r)].push_back(&r);
        const std::vector<const BenchRow*>* best = nullptr;
        for (const auto& [k, g] : groups)
            if (!best || g.size() > best->size()) best = &g;
        std::vector<double> x, y;
        if (best)
            for (const auto* r : *best) {
                x.push_back(xval(*r));
                y.push_back(yval(*r));
            }
        return loglog_slope(x, y);
    };
    auto by_tq = [](const BenchRow& r) { return std::make_pair<long long, long long>(r.size.period, static_cast<long long>(r.size.q)); };
    auto by_tn = [](const BenchRow& r) { return std::make_pair<long long, long long>(r.size.period, static_cast<long long>(r.size.samples)); };
    auto n_of = [](const BenchRow& r) { return static_cast<double>(r.size.samples); };
    auto q_of = [](const BenchRow& r) { return static_cast<double>(r.size.q); };
    res.alg1_exponent_n = fit(by_tq, n_of, [](const BenchRow& r) { return r.alg1; });
    res.alg3_exponent_n = fit(by_tq, n_of, [](const BenchRow& r) { return r.alg3; });
    res.alg1_exponent_q = fit(by_tn, q_of, [](const BenchRow& r) { return r.alg1; });
    res.dense_exponent_q = fit(by_tn, q_of, [](const BenchRow& r) { return r.dense_ls; });
    return res;
}

inline void write_bench(const BenchResult& res, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / "bench.csv");
    if (!out) throw Error("cannot write bench.csv");
    out << "T,N,q,alg1_s,alg3_s,dense_ls_s\n";
    for (const auto& r : res.rows)
        out << r.size.period << ',' << r.size.samples << ',' << r.size.q << ',' << io::format_double(r.alg1) << ','
            << io::format_double(r.alg3) << ',' << io::format_double(r.dense_ls) << '\n';
    io::write_json((fs::path(dir) / "bench_fit.json").string(),
                   {{"alg1_exponent_n", res.alg1_exponent_n},
                    {"alg3_exponent_n", res.alg3_exponent_n},
                    {"alg1_exponent_q", res.alg1_exponent_q},
                    {"dense_ls_exponent_q", res.dense_exponent_q}});
}

}  // namespace dcissim
