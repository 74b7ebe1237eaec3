#include "sdlsim/study.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sdlsim/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sdlsim {

namespace {

constexpr const char* kArtifactVersion = "0.1.0";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int line_of_byte(const std::string& text, std::size_t byte) {
    int line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

[[noreturn]] void config_error(const std::string& origin, const std::string& msg) {
    throw std::runtime_error("config error (" + origin + "): " + msg);
}

void check_known_keys(const json& obj, const std::vector<std::string>& known,
                      const std::string& origin, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            config_error(origin, "unknown key '" + it.key() + "' in " + where);
    }
}

SurfaceKind surface_kind_from_name(const std::string& name, const std::string& origin) {
    if (name == "ackley") return SurfaceKind::Ackley;
    if (name == "levy") return SurfaceKind::Levy;
    if (name == "sdl" || name == "surrogate") return SurfaceKind::Surrogate;
    config_error(origin, "unknown surface kind '" + name + "'");
}

std::string surface_kind_name(SurfaceKind k) {
    switch (k) {
        case SurfaceKind::Ackley: return "ackley";
        case SurfaceKind::Levy: return "levy";
        case SurfaceKind::Surrogate: return "sdl";
    }
    return "unknown";
}

StrategySpec parse_strategy(const json& j, const std::string& origin) {
    check_known_keys(j,
                     {"kind", "mc_samples", "beta_schedule", "candidate_pool_size", "restarts",
                      "pending_policy"},
                     origin, "strategy");
    if (!j.contains("kind")) config_error(origin, "strategy missing 'kind'");
    StrategySpec s;
    s.kind = strategy_kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("mc_samples")) s.mc_samples = j.at("mc_samples").get<int>();
    if (j.contains("beta_schedule"))
        s.beta_schedule = j.at("beta_schedule").get<std::vector<double>>();
    if (j.contains("candidate_pool_size"))
        s.candidate_pool_size = j.at("candidate_pool_size").get<int>();
    if (j.contains("restarts")) s.restarts = j.at("restarts").get<int>();
    if (j.contains("pending_policy")) {
        const std::string p = j.at("pending_policy").get<std::string>();
        if (p == "fantasize") s.pending_policy = PendingPolicy::Fantasize;
        else if (p == "none") s.pending_policy = PendingPolicy::None;
        else config_error(origin, "pending_policy must be 'fantasize' or 'none'");
    }
    try {
        s.validate();
    } catch (const std::exception& e) {
        config_error(origin, e.what());
    }
    return s;
}

void write_file_or_throw(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("io error: cannot open " + path.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("io error: write failed for " + path.string());
}

}  // namespace

void StudyConfig::validate() const {
    if (surfaces.empty()) throw std::runtime_error("config error: no surfaces");
    if (strategies.empty()) throw std::runtime_error("config error: empty strategy list");
    if (delays.empty()) throw std::runtime_error("config error: no delays");
    for (int d : delays)
        if (d < 0) throw std::runtime_error("config error: delay must be >= 0");
    if (n_trials < 1) throw std::runtime_error("config error: n_trials must be >= 1");
    if (n_init < 1) throw std::runtime_error("config error: n_init must be >= 1");
    if (budget < n_init + 1)
        throw std::runtime_error("config error: budget must be >= n_init + 1");
    for (const auto& s : surfaces) {
        if (s.dims.empty()) throw std::runtime_error("config error: surface with no dims");
        for (int d : s.dims) {
            if (d < 1) throw std::runtime_error("config error: dim must be >= 1");
            if (s.kind == SurfaceKind::Surrogate && d != 7)
                throw std::runtime_error("config error: the sdl surface is fixed at 7 dims");
        }
    }
    if (require_real_data) {
        bool has_sdl = false;
        for (const auto& s : surfaces) has_sdl |= (s.kind == SurfaceKind::Surrogate);
        if (has_sdl && !sdl_dataset)
            throw std::runtime_error(
                "config error: require_real_data set but sdl_dataset missing");
    }
    for (const auto& s : strategies) s.validate();
}

std::string StudyConfig::canonical_string() const {
    std::ostringstream os;
    os << "v1;surfaces=";
    for (const auto& s : surfaces) {
        os << surface_kind_name(s.kind) << ":";
        for (int d : s.dims) os << d << ",";
        os << ";";
    }
    os << "delays=";
    for (int d : delays) os << d << ",";
    os << ";strategies=";
    for (const auto& s : strategies) {
        os << s.name() << ":" << s.mc_samples << ":" << s.candidate_pool_size << ":"
           << s.restarts << ":" << (s.pending_policy == PendingPolicy::Fantasize ? "f" : "n")
           << ":betas(";
        for (double b : s.beta_schedule) os << fmt_double(b) << ",";
        os << ");";
    }
    os << "n_trials=" << n_trials << ";n_init=" << n_init << ";budget=" << budget
       << ";base_seed=" << base_seed
       << ";sdl_dataset=" << (sdl_dataset ? *sdl_dataset : "<synthetic>")
       << ";require_real_data=" << require_real_data
       << ";sdl_noise_variance=" << fmt_double(sdl_noise_variance)
       << ";regret_mode=" << (regret_mode == RegretMode::PerTrial ? "per_trial" : "mean_curve");
    return os.str();
}

StudyConfig parse_config_text(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        config_error(origin, "parse failure near line " +
                                 std::to_string(line_of_byte(text, e.byte)) + ": " + e.what());
    }
    check_known_keys(j,
                     {"surfaces", "delays", "strategies", "n_trials", "n_init", "budget",
                      "base_seed", "output_dir", "sdl_dataset", "require_real_data",
                      "sdl_noise_variance", "regret_mode"},
                     origin, "top level");

    StudyConfig cfg;
    if (!j.contains("surfaces")) config_error(origin, "missing 'surfaces'");
    for (const auto& s : j.at("surfaces")) {
        check_known_keys(s, {"kind", "dims"}, origin, "surface");
        SurfaceRequest req;
        req.kind = surface_kind_from_name(s.at("kind").get<std::string>(), origin);
        if (s.contains("dims")) req.dims = s.at("dims").get<std::vector<int>>();
        else if (req.kind == SurfaceKind::Surrogate) req.dims = {7};
        else config_error(origin, "surface missing 'dims'");
        cfg.surfaces.push_back(std::move(req));
    }
    if (!j.contains("delays")) config_error(origin, "missing 'delays'");
    cfg.delays = j.at("delays").get<std::vector<int>>();
    if (!j.contains("strategies")) config_error(origin, "missing 'strategies'");
    if (!j.at("strategies").is_array() || j.at("strategies").empty())
        config_error(origin, "empty strategy list");
    for (const auto& s : j.at("strategies")) cfg.strategies.push_back(parse_strategy(s, origin));

    if (j.contains("n_trials")) cfg.n_trials = j.at("n_trials").get<int>();
    if (j.contains("n_init")) cfg.n_init = j.at("n_init").get<int>();
    if (j.contains("budget")) cfg.budget = j.at("budget").get<int>();
    if (j.contains("base_seed")) cfg.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("sdl_dataset")) cfg.sdl_dataset = j.at("sdl_dataset").get<std::string>();
    if (j.contains("require_real_data"))
        cfg.require_real_data = j.at("require_real_data").get<bool>();
    if (j.contains("sdl_noise_variance"))
        cfg.sdl_noise_variance = j.at("sdl_noise_variance").get<double>();
    if (j.contains("regret_mode")) {
        const std::string m = j.at("regret_mode").get<std::string>();
        if (m == "per_trial") cfg.regret_mode = RegretMode::PerTrial;
        else if (m == "mean_curve") cfg.regret_mode = RegretMode::MeanCurve;
        else config_error(origin, "regret_mode must be 'per_trial' or 'mean_curve'");
    }
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        config_error(origin, e.what());
    }
    return cfg;
}

StudyConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config error: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::uint64_t trial_seed(std::uint64_t base_seed, const std::string& cell_id, int trial_index) {
    return base_seed ^ fnv1a(cell_id) ^ static_cast<std::uint64_t>(trial_index);
}

StudySummary run_study(const StudyConfig& config, int jobs) {
    config.validate();
    if (jobs < 1) jobs = 1;

    // Surfaces are immutable and shared across all cells and worker threads.
    std::map<std::string, ProblemSurface> surfaces;
    for (const auto& req : config.surfaces) {
        for (int dim : req.dims) {
            const std::string key = surface_kind_name(req.kind) + "_d" + std::to_string(dim);
            if (surfaces.count(key)) continue;
            switch (req.kind) {
                case SurfaceKind::Ackley: surfaces.emplace(key, make_ackley(dim)); break;
                case SurfaceKind::Levy: surfaces.emplace(key, make_levy(dim)); break;
                case SurfaceKind::Surrogate: {
                    ExperimentDataset data;
                    if (config.sdl_dataset) {
                        std::vector<std::string> rejected;
                        data = load_dataset_csv(*config.sdl_dataset, sdl_bounds(), &rejected);
                        for (const auto& r : rejected)
                            std::cerr << "sdl_dataset: rejected " << r << "\n";
                        if (data.size() == 0)
                            throw std::runtime_error("config error: sdl_dataset has no usable rows");
                    } else {
                        data = synthetic_sdl_standin(config.base_seed ^ 0x5d1d47ull);
                    }
                    surfaces.emplace(key, fit_surrogate_surface(data, config.sdl_noise_variance,
                                                                config.base_seed));
                    break;
                }
            }
        }
    }

    StudySummary summary;
    summary.config_hash = fnv1a(config.canonical_string());
    for (const auto& req : config.surfaces) {
        for (int dim : req.dims) {
            for (int delay : config.delays) {
                for (const auto& strat : config.strategies) {
                    StudyCell cell;
                    cell.surface_name = surface_kind_name(req.kind);
                    cell.dim = dim;
                    cell.delay = delay;
                    cell.strategy_name = strat.name();
                    cell.id = cell.surface_name + "_d" + std::to_string(dim) + "_delay" +
                              std::to_string(delay) + "_" + cell.strategy_name;
                    cell.global_max =
                        surfaces.at(cell.surface_name + "_d" + std::to_string(dim)).global_max;
                    CellResult res;
                    res.cell = cell;
                    summary.cells.push_back(std::move(res));
                }
            }
        }
    }

    struct Task {
        int cell_index;
        int trial_index;
        const ProblemSurface* surface;
        const StrategySpec* strategy;
    };
    std::vector<Task> tasks;
    {
        int ci = 0;
        for (const auto& req : config.surfaces) {
            for (int dim : req.dims) {
                const ProblemSurface& surf =
                    surfaces.at(surface_kind_name(req.kind) + "_d" + std::to_string(dim));
                for (std::size_t di = 0; di < config.delays.size(); ++di) {
                    for (const auto& strat : config.strategies) {
                        for (int t = 0; t < config.n_trials; ++t)
                            tasks.push_back({ci, t, &surf, &strat});
                        ++ci;
                    }
                }
            }
        }
    }

    // Preallocated result slots keep output independent of execution order.
    std::vector<std::vector<TrialRecord>> records(summary.cells.size(),
                                                  std::vector<TrialRecord>(config.n_trials));
    std::vector<std::vector<std::string>> failures(summary.cells.size(),
                                                   std::vector<std::string>(config.n_trials));

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& task = tasks[i];
            const CellResult& cell = summary.cells[task.cell_index];
            TrialConfig tc;
            tc.surface = task.surface;
            tc.strategy = *task.strategy;
            tc.delay = cell.cell.delay;
            tc.n_init = config.n_init;
            tc.budget = config.budget;
            tc.seed = trial_seed(config.base_seed, cell.cell.id, task.trial_index);
            try {
                records[task.cell_index][task.trial_index] = run_trial(tc);
            } catch (const std::exception& e) {
                failures[task.cell_index][task.trial_index] =
                    cell.cell.id + " trial " + std::to_string(task.trial_index) + ": " + e.what();
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int i = 0; i < jobs; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    for (std::size_t c = 0; c < summary.cells.size(); ++c) {
        CellResult& res = summary.cells[c];
        for (int t = 0; t < config.n_trials; ++t) {
            if (!failures[c][t].empty()) res.failures.push_back(failures[c][t]);
            else res.records.push_back(std::move(records[c][t]));
        }
        if (!res.records.empty())
            res.summary = aggregate(res.records, res.cell.global_max, config.regret_mode);
    }
    return summary;
}

void emit_results(const StudySummary& summary, const StudyConfig& config,
                  const std::string& output_dir) {
    const fs::path out(output_dir);
    try {
        fs::create_directories(out / "raw");
        fs::create_directories(out / "running_best");

        for (const auto& cell : summary.cells) {
            // Raw per-observation CSV.
            std::ostringstream raw;
            const int d = cell.records.empty()
                              ? 0
                              : static_cast<int>(cell.records.front().observations[0].x.size());
            raw << "trial,step";
            for (int i = 0; i < d; ++i) raw << ",x" << i;
            raw << ",y,submit_index,reveal_index\n";
            for (std::size_t t = 0; t < cell.records.size(); ++t) {
                const auto& rec = cell.records[t];
                for (std::size_t s = 0; s < rec.observations.size(); ++s) {
                    const auto& o = rec.observations[s];
                    raw << t << "," << s;
                    for (int i = 0; i < d; ++i) raw << "," << fmt_double(o.x[i]);
                    raw << "," << fmt_double(o.noisy_y) << "," << o.submit_index << ","
                        << o.reveal_index << "\n";
                }
            }
            write_file_or_throw(out / "raw" / (cell.cell.id + ".csv"), raw.str());

            // Running-best aggregate CSV.
            std::ostringstream rb;
            rb << "step,mean,std\n";
            for (std::size_t s = 0; s < cell.summary.best_mean.size(); ++s)
                rb << s << "," << fmt_double(cell.summary.best_mean[s]) << ","
                   << fmt_double(cell.summary.best_std[s]) << "\n";
            write_file_or_throw(out / "running_best" / (cell.cell.id + ".csv"), rb.str());
        }

        std::ostringstream rs;
        rs << "surface,dim,delay,strategy,regret_mean,regret_std,n_trials\n";
        for (const auto& cell : summary.cells) {
            rs << cell.cell.surface_name << "," << cell.cell.dim << "," << cell.cell.delay << ","
               << cell.cell.strategy_name << "," << fmt_double(cell.summary.regret_mean) << ","
               << fmt_double(cell.summary.regret_std) << "," << cell.summary.n_trials << "\n";
        }
        write_file_or_throw(out / "regret_summary.csv", rs.str());

        json manifest;
        manifest["artifact_version"] = kArtifactVersion;
        manifest["config_hash"] = summary.config_hash;
        manifest["base_seed"] = config.base_seed;
        manifest["n_trials"] = config.n_trials;
        json cells = json::array();
        for (const auto& cell : summary.cells) {
            json c;
            c["id"] = cell.cell.id;
            c["global_max"] = cell.cell.global_max;
            c["complete"] = cell.complete();
            c["n_completed_trials"] = static_cast<int>(cell.records.size());
            c["failures"] = cell.failures;
            c["trial_seeds"] = json::array();
            for (int t = 0; t < config.n_trials; ++t)
                c["trial_seeds"].push_back(trial_seed(config.base_seed, cell.cell.id, t));
            cells.push_back(std::move(c));
        }
        manifest["cells"] = std::move(cells);
        write_file_or_throw(out / "manifest.json", manifest.dump(2) + "\n");
    } catch (...) {
        std::error_code ec;
        fs::create_directories(out, ec);
        std::ofstream marker(out / "INCOMPLETE");
        marker << "partial output: emit_results aborted\n";
        throw;
    }
}

}  // namespace sdlsim
