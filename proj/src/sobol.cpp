#include "sdlsim/sobol.hpp"

#include <bit>
#include <stdexcept>

namespace sdlsim {

namespace {

struct PolySpec {
    int s;                  // degree
    std::uint32_t a;        // coefficient bits
    std::uint32_t m[8];     // initial direction integers
};

// Joe-Kuo initial values for dimensions 2..8; dimension 1 is the van der
// Corput sequence (all m = 1).
constexpr PolySpec kPolys[] = {
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
};

constexpr int kBits = 32;

std::vector<std::uint32_t> direction_numbers(int dim_index) {
    std::vector<std::uint32_t> v(kBits);
    if (dim_index == 0) {
        for (int k = 0; k < kBits; ++k) v[k] = 1u << (kBits - 1 - k);
        return v;
    }
    const PolySpec& p = kPolys[dim_index - 1];
    for (int k = 0; k < p.s; ++k) v[k] = p.m[k] << (kBits - 1 - k);
    for (int k = p.s; k < kBits; ++k) {
        std::uint32_t vk = v[k - p.s] ^ (v[k - p.s] >> p.s);
        for (int j = 1; j < p.s; ++j) {
            if ((p.a >> (p.s - 1 - j)) & 1u) vk ^= v[k - j];
        }
        v[k] = vk;
    }
    return v;
}

}  // namespace

SobolSequence::SobolSequence(int dim) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("SobolSequence: dim must be >= 1");
    int tabled = std::min(dim, kMaxTableDim);
    directions_.reserve(tabled);
    for (int i = 0; i < tabled; ++i) directions_.push_back(direction_numbers(i));
    state_.assign(dim_, 0);
    shift_.assign(dim_, 0);
}

void SobolSequence::set_shift(const std::vector<std::uint32_t>& shift) {
    if (static_cast<int>(shift.size()) != dim_)
        throw std::invalid_argument("SobolSequence: shift size mismatch");
    shift_ = shift;
}

Eigen::VectorXd SobolSequence::next() {
    constexpr double kScale = 1.0 / 4294967296.0;  // 2^-32
    Eigen::VectorXd out(dim_);
    if (index_ > 0) {
        int c = std::countr_zero(index_);  // Gray-code bit to flip
        for (int i = 0; i < static_cast<int>(directions_.size()); ++i)
            state_[i] ^= directions_[i][c];
    }
    for (int i = 0; i < dim_; ++i) out[i] = (state_[i] ^ shift_[i]) * kScale;
    ++index_;
    return out;
}

Eigen::MatrixXd sobol_pool(int n, int dim, std::mt19937_64& rng) {
    SobolSequence seq(dim);
    std::vector<std::uint32_t> shift(dim);
    for (auto& s : shift) s = static_cast<std::uint32_t>(rng());
    seq.set_shift(shift);

    Eigen::MatrixXd pool(n, dim);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int r = 0; r < n; ++r) {
        Eigen::VectorXd p = seq.next();
        // Dimensions beyond the direction-number table get uniform draws.
        for (int c = SobolSequence::kMaxTableDim; c < dim; ++c) p[c] = unif(rng);
        pool.row(r) = p;
    }
    return pool;
}

}  // namespace sdlsim
