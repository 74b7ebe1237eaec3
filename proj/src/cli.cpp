#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "sdlsim/gp.hpp"
#include "sdlsim/metrics.hpp"
#include "sdlsim/rng.hpp"
#include "sdlsim/study.hpp"
#include "sdlsim/surfaces.hpp"

namespace sdlsim {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Bounds parse_bounds_arg(const std::string& arg) {
    Bounds bounds;
    std::stringstream ss(arg);
    std::string pair;
    while (std::getline(ss, pair, ',')) {
        const auto colon = pair.find(':');
        if (colon == std::string::npos)
            throw std::runtime_error("config error: --bounds expects lo:hi,lo:hi,...");
        const double lo = std::stod(pair.substr(0, colon));
        const double hi = std::stod(pair.substr(colon + 1));
        if (!(lo < hi)) throw std::runtime_error("config error: bound lower must be < upper");
        bounds.emplace_back(lo, hi);
    }
    if (bounds.empty()) throw std::runtime_error("config error: empty --bounds");
    return bounds;
}

// Per-trial cumulative regrets recomputed from a raw per-cell CSV
// (trial,step,x...,y,submit_index,reveal_index).
std::vector<double> regrets_from_raw_csv(const std::string& path, double global_max) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("data error: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("data error: empty csv " + path);

    std::map<int, std::map<int, double>> y_by_trial_step;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<std::string> fields;
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() < 5)
            throw std::runtime_error("data error: malformed row at line " +
                                     std::to_string(lineno));
        const int trial = std::stoi(fields[0]);
        const int step = std::stoi(fields[1]);
        const double y = std::stod(fields[fields.size() - 3]);
        y_by_trial_step[trial][step] = y;
    }

    std::vector<double> regrets;
    for (const auto& [trial, steps] : y_by_trial_step) {
        double best = -std::numeric_limits<double>::infinity();
        double regret = 0.0;
        int expected = 0;
        for (const auto& [step, y] : steps) {
            if (step != expected++)
                throw std::runtime_error("data error: trial " + std::to_string(trial) +
                                         " has non-contiguous steps");
            best = std::max(best, y);
            regret += global_max - best;
        }
        regrets.push_back(regret);
    }
    return regrets;
}

int run_command(const std::string& config_path, int jobs, const std::string& out_override,
                bool seed_set, std::uint64_t seed_override) {
    StudyConfig cfg = parse_config(config_path);
    if (seed_set) cfg.base_seed = seed_override;
    std::string out = cfg.output_dir;
    if (const char* env = std::getenv("SDLSIM_OUTPUT_DIR")) out = env;
    if (!out_override.empty()) out = out_override;

    // Fail before any trial if the output location is unusable.
    std::filesystem::create_directories(out);
    {
        const auto probe = std::filesystem::path(out) / ".write_probe";
        std::ofstream p(probe);
        if (!p) throw std::runtime_error("io error: output_dir not writable: " + out);
        p.close();
        std::filesystem::remove(probe);
    }

    StudySummary summary = run_study(cfg, jobs);
    emit_results(summary, cfg, out);

    int incomplete = 0;
    for (const auto& c : summary.cells)
        if (!c.complete()) ++incomplete;
    std::cout << "study complete: " << summary.cells.size() << " cells ("
              << incomplete << " incomplete), results in " << out << "\n";
    return incomplete == 0 ? 0 : 4;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Delayed-feedback Bayesian optimization study runner"};
    app.require_subcommand(1);

    std::string config_path, out_override, dump_path, bounds_arg, csv_path, raw_csv;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double noise_variance = 2e5;
    int folds = 5;
    double global_max = 0.0;

    auto* run = app.add_subcommand("run", "Run a study from a config file");
    run->add_option("config", config_path, "Study config (JSON)")->required();
    run->add_option("--jobs", jobs, "Max concurrent trials");
    run->add_option("--out", out_override, "Override output directory");
    run->add_option("--seed", seed, "Override base seed")->each([&](const std::string&) {
        seed_set = true;
    });

    auto* validate = app.add_subcommand("validate", "Validate a config without running");
    validate->add_option("config", config_path, "Study config (JSON)")->required();

    auto* fitsur = app.add_subcommand(
        "fit-surrogate", "Fit the ground-truth GP to a dataset and report diagnostics");
    fitsur->add_option("csv", csv_path, "Dataset CSV, or 'synthetic' for the built-in stand-in")
        ->required();
    fitsur->add_option("--noise", noise_variance, "Observation noise variance");
    fitsur->add_option("--folds", folds, "Cross-validation folds");
    fitsur->add_option("--seed", seed, "Fit seed");
    fitsur->add_option("--dump", dump_path, "Write a model dump file");
    fitsur->add_option("--bounds", bounds_arg, "Input bounds lo:hi,... (default: coating preset)");

    auto* regret = app.add_subcommand("regret", "Recompute regret from a raw per-cell CSV");
    regret->add_option("csv", raw_csv, "Raw observations CSV")->required();
    regret->add_option("--global-max", global_max, "Global maximum of the objective")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*run) return run_command(config_path, jobs, out_override, seed_set, seed);

        if (*validate) {
            StudyConfig cfg = parse_config(config_path);
            std::size_t cells = 0;
            for (const auto& s : cfg.surfaces)
                cells += s.dims.size() * cfg.delays.size() * cfg.strategies.size();
            std::cout << "config ok: " << cells << " cells x " << cfg.n_trials << " trials, budget "
                      << cfg.budget << "\n";
            return 0;
        }

        if (*fitsur) {
            ExperimentDataset data;
            if (csv_path == "synthetic") {
                data = synthetic_sdl_standin(seed);
            } else {
                const Bounds bounds =
                    bounds_arg.empty() ? sdl_bounds() : parse_bounds_arg(bounds_arg);
                std::vector<std::string> rejected;
                data = load_dataset_csv(csv_path, bounds, &rejected);
                for (const auto& r : rejected) std::cerr << "rejected " << r << "\n";
                if (data.size() == 0) throw std::runtime_error("data error: no usable rows");
            }
            ProblemSurface surface = fit_surrogate_surface(data, noise_variance, seed);
            const GpModel& model = *surface.surrogate;
            const double r2 = [&]() {
                Eigen::MatrixXd xn(data.size(), data.dim());
                for (int i = 0; i < data.size(); ++i)
                    xn.row(i) = normalize_point(data.bounds, data.x.row(i));
                return cross_validate_r2(xn, data.y, NoiseMode::Fixed, noise_variance, folds,
                                         seed);
            }();
            std::cout << "n " << data.size() << ", dim " << data.dim() << "\n";
            std::cout << "cross_validation_r2 " << fmt_double(r2) << " (" << folds << "-fold)\n";
            std::cout << "global_max_estimate " << fmt_double(surface.global_max) << "\n";
            std::cout << "signal_variance " << fmt_double(model.hyperparams().signal_variance)
                      << "\nnoise_variance " << fmt_double(model.hyperparams().noise_variance)
                      << "\nlengthscales";
            for (int i = 0; i < model.hyperparams().lengthscales.size(); ++i)
                std::cout << " " << fmt_double(model.hyperparams().lengthscales[i]);
            std::cout << "\nlog_marginal_likelihood "
                      << fmt_double(model.log_marginal_likelihood()) << "\n";
            if (!dump_path.empty()) {
                std::ofstream dump(dump_path);
                if (!dump) throw std::runtime_error("io error: cannot open " + dump_path);
                model.dump(dump);
            }
            return 0;
        }

        if (*regret) {
            const std::vector<double> regrets = regrets_from_raw_csv(raw_csv, global_max);
            double mean = 0.0;
            for (double r : regrets) mean += r;
            mean /= static_cast<double>(regrets.size());
            double sd = 0.0;
            if (regrets.size() > 1) {
                for (double r : regrets) sd += (r - mean) * (r - mean);
                sd = std::sqrt(sd / (regrets.size() - 1));
            }
            std::cout << "n_trials " << regrets.size() << "\nregret_mean " << fmt_double(mean)
                      << "\nregret_std " << fmt_double(sd) << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        const std::string msg = e.what();
        if (msg.rfind("config error", 0) == 0) return 2;
        if (msg.rfind("data error", 0) == 0) return 3;
        if (msg.rfind("io error", 0) == 0) return 5;
        return 4;
    }
    return 0;
}

}  // namespace sdlsim
