#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "clamp/common.hpp"
#include "clamp/packing.hpp"

namespace clamp::randorg {

struct RandOrgConfig {
    std::size_t n_particles = 64;
    std::size_t dim = 3;
    double radius = 0.1;           // common particle radius, chordal convention
    double kick_amplitude = 0.1;   // max displacement per kick
    bool reciprocal = true;
    std::size_t max_steps = 50000;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_particles < 2) throw ValidationError("randorg: need N >= 2");
        if (dim < 2) throw ValidationError("randorg: need D >= 2");
        if (radius < 0.0) throw ValidationError("randorg: radius must be nonnegative");
        if (kick_amplitude <= 0.0) throw ValidationError("randorg: kick_amplitude must be positive");
    }
};

// Fixed-radius particles on the unit hypersphere.
struct ParticleState {
    Matrix positions;  // N x D unit rows
    double radius = 0.0;
    std::size_t step_index = 0;
    std::vector<std::uint8_t> active_mask;
    Rng rng;
};

namespace detail {

// Reprojects only the rows that moved, keeping untouched particles
// bit-identical across steps.
inline void reproject(ParticleState& state, const std::vector<std::uint8_t>& moved) {
    for (std::size_t i = 0; i < state.positions.rows; ++i) {
        if (!moved[i]) continue;
        auto row = state.positions.row(i);
        const double n = norm2(row);
        if (n > 0.0)
            for (auto& x : row) x /= n;
    }
}

inline void recompute_active(ParticleState& state) {
    const std::size_t n = state.positions.rows;
    state.active_mask.assign(n, 0);
    const double cutoff = 2.0 * state.radius;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < state.positions.cols; ++d) {
                const double u = state.positions(i, d) - state.positions(j, d);
                d2 += u * u;
            }
            if (std::sqrt(d2) < cutoff) {
                state.active_mask[i] = 1;
                state.active_mask[j] = 1;
            }
        }
}

}  // namespace detail

inline ParticleState init_state(const RandOrgConfig& cfg) {
    cfg.validate();
    ParticleState st;
    st.positions = Matrix(cfg.n_particles, cfg.dim);
    st.radius = cfg.radius;
    st.rng.seed(cfg.seed);
    for (std::size_t i = 0; i < cfg.n_particles; ++i) {
        auto v = random_unit_vector(cfg.dim, st.rng);
        for (std::size_t d = 0; d < cfg.dim; ++d) st.positions(i, d) = v[d];
    }
    detail::recompute_active(st);
    return st;
}

inline double active_fraction(const ParticleState& st) {
    double c = 0.0;
    for (auto f : st.active_mask) c += f;
    return c / static_cast<double>(st.active_mask.size());
}

inline bool is_absorbing(const ParticleState& st) {
    for (auto f : st.active_mask)
        if (f) return false;
    return true;
}

// One random-organization step. Each unordered overlapping pair is
// processed once, in index order. In reciprocal mode the two particles of
// a pair move by equal and opposite displacements along a randomly
// perturbed separation axis; otherwise each overlapping particle gets one
// independent random kick. Isolated particles never move.
inline ParticleState randorg_step(const ParticleState& state, const RandOrgConfig& cfg) {
    cfg.validate();
    ParticleState next = state;
    const std::size_t n = state.positions.rows;
    const std::size_t dim = state.positions.cols;
    const double cutoff = 2.0 * state.radius;

    Matrix displacement(n, dim);
    std::uniform_real_distribution<double> mag(0.0, cfg.kick_amplitude);

    if (cfg.reciprocal) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double d2 = 0.0;
                for (std::size_t d = 0; d < dim; ++d) {
                    const double u = state.positions(i, d) - state.positions(j, d);
                    d2 += u * u;
                }
                if (std::sqrt(d2) >= cutoff) continue;
                // separation axis plus noise, so coincident pairs still split
                auto noise = random_unit_vector(dim, next.rng);
                std::vector<double> axis(dim);
                for (std::size_t d = 0; d < dim; ++d)
                    axis[d] = state.positions(i, d) - state.positions(j, d) + 0.5 * cutoff * noise[d];
                const double an = norm2(axis);
                if (an == 0.0) continue;
                const double a = mag(next.rng);
                for (std::size_t d = 0; d < dim; ++d) {
                    const double kick = a * axis[d] / an;
                    displacement(i, d) += kick;
                    displacement(j, d) -= kick;
                }
            }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            if (!state.active_mask[i]) continue;
            auto dir = random_unit_vector(dim, next.rng);
            const double a = mag(next.rng);
            for (std::size_t d = 0; d < dim; ++d) displacement(i, d) += a * dir[d];
        }
    }

    std::vector<std::uint8_t> moved(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < dim; ++d)
            if (displacement(i, d) != 0.0) {
                moved[i] = 1;
                next.positions(i, d) += displacement(i, d);
            }
    detail::reproject(next, moved);
    detail::recompute_active(next);
    next.step_index = state.step_index + 1;
    return next;
}

// Deterministic descent on the summed pair repulsion with r_i = r_j = radius.
inline ParticleState gradient_step(const ParticleState& state, const RandOrgConfig& cfg,
                                   double step_size) {
    cfg.validate();
    if (step_size <= 0.0) throw ValidationError("gradient_step: step_size must be positive");
    ParticleState next = state;
    const std::size_t n = state.positions.rows;
    const std::size_t dim = state.positions.cols;
    const double s = 2.0 * state.radius;

    Matrix grad(n, dim);
    if (s > 0.0) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double d2 = 0.0;
                for (std::size_t d = 0; d < dim; ++d) {
                    const double u = state.positions(i, d) - state.positions(j, d);
                    d2 += u * u;
                }
                const double dist = std::sqrt(d2);
                if (dist >= s || dist == 0.0) continue;
                const double de_ddist = -2.0 * (1.0 - dist / s) / s;
                for (std::size_t d = 0; d < dim; ++d) {
                    const double dir = (state.positions(i, d) - state.positions(j, d)) / dist;
                    grad(i, d) += de_ddist * dir;
                    grad(j, d) -= de_ddist * dir;
                }
            }
    }
    std::vector<std::uint8_t> moved(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < dim; ++d)
            if (grad(i, d) != 0.0) {
                moved[i] = 1;
                next.positions(i, d) -= step_size * grad(i, d);
            }
    detail::reproject(next, moved);
    detail::recompute_active(next);
    next.step_index = state.step_index + 1;
    return next;
}

inline double total_energy(const ParticleState& state) {
    double e = 0.0;
    const std::size_t n = state.positions.rows;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < state.positions.cols; ++d) {
                const double u = state.positions(i, d) - state.positions(j, d);
                d2 += u * u;
            }
            e += packing::pair_energy(std::sqrt(d2), state.radius, state.radius);
        }
    return e;
}

struct SweepCell {
    double radius = 0.0;
    std::uint64_t seed = 0;
    std::size_t steps_to_absorb = 0;  // meaningful only when absorbed
    bool absorbed = false;
    double final_active_fraction = 0.0;
};

// Run the dynamics for each (radius, seed) cell until absorption or the
// step budget runs out. Each cell owns its own generator, seeded from the
// cell coordinates, so results do not depend on execution order.
inline std::vector<SweepCell> run_density_sweep(const RandOrgConfig& cfg_template,
                                                std::span<const double> radii,
                                                std::span<const std::uint64_t> seeds) {
    if (radii.empty() || seeds.empty())
        throw ValidationError("run_density_sweep: radii and seeds must be nonempty");
    std::vector<SweepCell> cells;
    for (std::size_t ri = 0; ri < radii.size(); ++ri) {
        for (std::uint64_t seed : seeds) {
            RandOrgConfig cfg = cfg_template;
            cfg.radius = radii[ri];
            cfg.seed = mix_seed(seed, ri);
            ParticleState st = init_state(cfg);
            SweepCell cell;
            cell.radius = cfg.radius;
            cell.seed = seed;
            std::size_t step = 0;
            while (!is_absorbing(st) && step < cfg.max_steps) {
                st = randorg_step(st, cfg);
                ++step;
            }
            cell.absorbed = is_absorbing(st);
            cell.steps_to_absorb = step;
            cell.final_active_fraction = active_fraction(st);
            cells.push_back(cell);
        }
    }
    return cells;
}

}  // namespace clamp::randorg
