#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

namespace sdlsim {

// Gray-code Sobol sequence over [0,1)^dim with 32-bit resolution.
// Direction numbers cover the first 8 dimensions (Joe-Kuo initial values);
// higher dimensions fall back to a seeded uniform stream, which only costs
// discrepancy quality, not correctness.
class SobolSequence {
public:
    explicit SobolSequence(int dim);

    static constexpr int kMaxTableDim = 8;

    // Next point in [0,1)^dim.
    Eigen::VectorXd next();

    // XOR digital shift applied to every subsequent point (scrambling).
    void set_shift(const std::vector<std::uint32_t>& shift);

    int dim() const { return dim_; }

private:
    int dim_;
    std::uint64_t index_ = 0;
    std::vector<std::uint32_t> state_;
    std::vector<std::uint32_t> shift_;
    std::vector<std::vector<std::uint32_t>> directions_;  // [dim][32]
};

// n scrambled Sobol points in [0,1)^dim; the digital shift is drawn from rng.
Eigen::MatrixXd sobol_pool(int n, int dim, std::mt19937_64& rng);

}  // namespace sdlsim
