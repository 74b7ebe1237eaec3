#include "sdlsim/surfaces.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sdlsim/rng.hpp"
#include "sdlsim/sobol.hpp"

namespace sdlsim {

namespace {

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& x, const char* what) {
    if (!x.allFinite()) throw std::domain_error(std::string(what) + ": non-finite input");
}

Bounds uniform_bounds(int dim, double lo, double hi) {
    return Bounds(static_cast<std::size_t>(dim), {lo, hi});
}

// Local pattern search (compass) maximizing f over [0,1]^d.
template <typename F>
Eigen::VectorXd compass_refine(F&& f, Eigen::VectorXd x, double step = 0.0625,
                               double min_step = 1e-4) {
    const int d = static_cast<int>(x.size());
    double fx = f(x);
    while (step >= min_step) {
        bool improved = false;
        for (int i = 0; i < d; ++i) {
            for (double sign : {1.0, -1.0}) {
                Eigen::VectorXd cand = x;
                cand[i] = std::clamp(cand[i] + sign * step, 0.0, 1.0);
                double fc = f(cand);
                if (fc > fx) {
                    x = cand;
                    fx = fc;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    return x;
}

}  // namespace

std::string ProblemSurface::kind_name() const {
    switch (kind) {
        case SurfaceKind::Ackley: return "ackley";
        case SurfaceKind::Levy: return "levy";
        case SurfaceKind::Surrogate: return "sdl";
    }
    return "unknown";
}

double ackley_raw(const Eigen::Ref<const Eigen::VectorXd>& x, double a, double b, double c) {
    require_finite(x, "ackley_raw");
    const double d = static_cast<double>(x.size());
    const double rms = std::sqrt(x.squaredNorm() / d);
    double cos_sum = 0.0;
    for (int i = 0; i < x.size(); ++i) cos_sum += std::cos(c * x[i]);
    return -a * std::exp(-b * rms) - std::exp(cos_sum / d) + a + std::exp(1.0);
}

double levy_raw(const Eigen::Ref<const Eigen::VectorXd>& x) {
    require_finite(x, "levy_raw");
    const int d = static_cast<int>(x.size());
    auto w = [&](int i) { return 1.0 + (x[i] - 1.0) / 4.0; };
    const double s1 = std::sin(M_PI * w(0));
    double total = s1 * s1;
    for (int i = 0; i < d - 1; ++i) {
        const double wi = w(i);
        const double s = std::sin(M_PI * wi + 1.0);
        total += (wi - 1.0) * (wi - 1.0) * (1.0 + 10.0 * s * s);
    }
    const double wd = w(d - 1);
    const double sd = std::sin(2.0 * M_PI * wd);
    total += (wd - 1.0) * (wd - 1.0) * (1.0 + sd * sd);
    return total;
}

ProblemSurface make_ackley(int dim) {
    ProblemSurface s;
    s.kind = SurfaceKind::Ackley;
    s.dim = dim;
    s.bounds = uniform_bounds(dim, -32.768, 32.768);
    s.noise_std = 0.5;
    s.global_max = 0.0;
    return s;
}

ProblemSurface make_levy(int dim) {
    ProblemSurface s;
    s.kind = SurfaceKind::Levy;
    s.dim = dim;
    s.bounds = uniform_bounds(dim, -10.0, 10.0);
    s.noise_std = 0.5;
    s.global_max = 0.0;
    return s;
}

bool in_bounds(const Bounds& bounds, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (static_cast<std::size_t>(x.size()) != bounds.size()) return false;
    for (int i = 0; i < x.size(); ++i) {
        if (!(x[i] >= bounds[i].first && x[i] <= bounds[i].second)) return false;
    }
    return true;
}

Eigen::VectorXd normalize_point(const Bounds& bounds, const Eigen::Ref<const Eigen::VectorXd>& x) {
    Eigen::VectorXd u(x.size());
    for (int i = 0; i < x.size(); ++i)
        u[i] = (x[i] - bounds[i].first) / (bounds[i].second - bounds[i].first);
    return u;
}

Eigen::VectorXd denormalize_point(const Bounds& bounds,
                                  const Eigen::Ref<const Eigen::VectorXd>& u) {
    Eigen::VectorXd x(u.size());
    for (int i = 0; i < u.size(); ++i)
        x[i] = bounds[i].first + u[i] * (bounds[i].second - bounds[i].first);
    return x;
}

double objective(const ProblemSurface& surface, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (!in_bounds(surface.bounds, x))
        throw std::out_of_range("objective: x outside surface bounds");
    switch (surface.kind) {
        case SurfaceKind::Ackley: return -ackley_raw(x);
        case SurfaceKind::Levy: return -levy_raw(x);
        case SurfaceKind::Surrogate: {
            if (!surface.surrogate) throw std::logic_error("objective: surrogate model missing");
            return surface.surrogate->posterior(normalize_point(surface.bounds, x)).mean;
        }
    }
    throw std::logic_error("objective: unknown surface kind");
}

double evaluate_noisy(const ProblemSurface& surface, const Eigen::Ref<const Eigen::VectorXd>& x,
                      std::mt19937_64& rng) {
    const double y = objective(surface, x);
    if (surface.noise_std == 0.0) return y;
    std::normal_distribution<double> noise(0.0, surface.noise_std);
    return y + noise(rng);
}

Bounds sdl_bounds() {
    return {{0.0, 0.3}, {10.0, 20.0}, {2.0, 8.0}, {65.0, 100.0},
            {1.0, 10.0}, {10.0, 25.0}, {220.0, 300.0}};
}

ProblemSurface fit_surrogate_surface(const ExperimentDataset& data, double noise_variance,
                                     std::uint64_t seed) {
    if (data.size() == 0) throw std::invalid_argument("fit_surrogate_surface: empty dataset");
    if (!(noise_variance > 0.0))
        throw std::invalid_argument("fit_surrogate_surface: noise_variance must be > 0");

    const int n = data.size();
    Eigen::MatrixXd xn(n, data.dim());
    for (int i = 0; i < n; ++i) xn.row(i) = normalize_point(data.bounds, data.x.row(i));

    auto model = std::make_shared<GpModel>(
        GpModel::fit(xn, data.y, NoiseMode::Fixed, noise_variance, seed));

    ProblemSurface s;
    s.kind = SurfaceKind::Surrogate;
    s.dim = data.dim();
    s.bounds = data.bounds;
    s.noise_std = std::sqrt(noise_variance);
    s.surrogate = model;

    // Multi-start maximization of the posterior mean over the unit cube.
    auto mean_at = [&](const Eigen::VectorXd& u) { return model->posterior(u).mean; };
    std::mt19937_64 rng = make_rng(seed ^ 0x5d1f00d5ull);
    Eigen::MatrixXd starts = sobol_pool(512, s.dim, rng);
    double best = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < starts.rows(); ++r) {
        Eigen::VectorXd u = compass_refine(mean_at, starts.row(r).transpose());
        best = std::max(best, mean_at(u));
    }
    s.global_max = best;
    return s;
}

ExperimentDataset synthetic_sdl_standin(std::uint64_t seed) {
    const Bounds bounds = sdl_bounds();
    const int n = 177, d = 7;
    std::mt19937_64 rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1e5);

    // Smooth conductivity-like response on the unit cube: two Gaussian bumps
    // plus a gentle trend, scaled to the ~1e6 range the 2e5 noise implies.
    Eigen::VectorXd c1(d), c2(d), trend(d);
    c1 << 0.7, 0.3, 0.55, 0.4, 0.8, 0.25, 0.6;
    c2 << 0.2, 0.75, 0.3, 0.7, 0.35, 0.6, 0.2;
    trend << 0.3, -0.2, 0.15, 0.1, -0.25, 0.2, 0.35;

    ExperimentDataset data;
    data.bounds = bounds;
    data.x.resize(n, d);
    data.y.resize(n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd u(d);
        for (int j = 0; j < d; ++j) u[j] = unif(rng);
        const double f = 2.5e6 * std::exp(-(u - c1).squaredNorm() / 0.18) +
                         1.4e6 * std::exp(-(u - c2).squaredNorm() / 0.30) +
                         4e5 * trend.dot(u) + 6e5;
        data.x.row(i) = denormalize_point(bounds, u);
        data.y[i] = f + noise(rng);
    }
    return data;
}

ExperimentDataset load_dataset_csv(const std::string& path, const Bounds& bounds,
                                   std::vector<std::string>* rejected_lines) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset_csv: cannot open " + path);

    const int d = static_cast<int>(bounds.size());
    std::vector<Eigen::VectorXd> xs;
    std::vector<double> ys;
    std::string line;
    int lineno = 0;
    auto reject = [&](const std::string& why) {
        if (rejected_lines)
            rejected_lines->push_back("line " + std::to_string(lineno) + ": " + why);
    };

    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1) continue;  // header
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<double> vals;
        bool bad = false;
        while (std::getline(ss, field, ',')) {
            try {
                std::size_t pos = 0;
                double v = std::stod(field, &pos);
                while (pos < field.size() && std::isspace(static_cast<unsigned char>(field[pos])))
                    ++pos;
                if (pos != field.size()) throw std::invalid_argument(field);
                vals.push_back(v);
            } catch (const std::exception&) {
                reject("non-numeric field '" + field + "'");
                bad = true;
                break;
            }
        }
        if (bad) continue;
        if (static_cast<int>(vals.size()) != d + 1) {
            reject("expected " + std::to_string(d + 1) + " fields, got " +
                   std::to_string(vals.size()));
            continue;
        }
        Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(vals.data(), d);
        if (!in_bounds(bounds, x)) {
            reject("input outside declared bounds");
            continue;
        }
        xs.push_back(std::move(x));
        ys.push_back(vals[d]);
    }

    ExperimentDataset data;
    data.bounds = bounds;
    data.x.resize(static_cast<int>(xs.size()), d);
    data.y.resize(static_cast<int>(ys.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        data.x.row(static_cast<int>(i)) = xs[i];
        data.y[static_cast<int>(i)] = ys[i];
    }
    return data;
}

}  // namespace sdlsim
