#pragma once

// Density-matrix propagation of a lindblad_model. The generator preserves
// trace and hermiticity exactly, so numerical drift in either is pure
// roundoff; positivity can dip by the integration tolerance and is checked
// against a looser bound.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "ioncav/errors.hpp"
#include "ioncav/hilbert.hpp"
#include "ioncav/integrator.hpp"
#include "ioncav/model.hpp"

namespace ioncav {

namespace detail {

// Master-equation right-hand side on flattened density matrices, with
// preallocated workspaces. One instance per integration; not thread-safe.
class lindblad_rhs {
public:
    explicit lindblad_rhs(const lindblad_model& m) : model_(&m), dim_(m.space.dim()) {
        hnh_ = spmat(m.h0 - cxd(0.0, 0.5) * m.sum_ldl());
        hnh_.makeCompressed();
        hnh_adj_ = hnh_.adjoint();
        hnh_adj_.makeCompressed();
        for (const auto& ch : m.channels) {
            l_.push_back(ch.op);
            l_adj_.emplace_back(ch.op.adjoint());
        }
        w1_.resize(dim_, dim_);
        w2_.resize(dim_, dim_);
    }

    // Pulse applicability is fixed per integration segment so the
    // discontinuity at the pulse edge never lands inside a step.
    void set_segment(double seg_start) {
        pulse_active_ = model_->pulse && seg_start < model_->pulse->duration;
    }

    void operator()(double t, const vec& y, vec& dy) {
        Eigen::Map<const mat> rho(y.data(), dim_, dim_);
        dy.resize(y.size());
        Eigen::Map<mat> out(dy.data(), dim_, dim_);
        w1_.noalias() = hnh_ * rho;
        w2_.noalias() = rho * hnh_adj_;
        out = cxd(0.0, -1.0) * (w1_ - w2_);
        for (std::size_t k = 0; k < l_.size(); ++k) {
            w1_.noalias() = l_[k] * rho;
            w2_.noalias() = w1_ * l_adj_[k];
            out += w2_;
        }
        if (model_->mod_amplitude != 0.0) {
            const double c = model_->mod_amplitude * std::cos(model_->mod_omega * t);
            w1_.noalias() = model_->h_mod * rho;
            w2_.noalias() = rho * model_->h_mod;
            out += cxd(0.0, -c) * (w1_ - w2_);
        }
        if (pulse_active_) {
            const auto& p = *model_->pulse;
            w1_.noalias() = p.op * rho;
            w2_.noalias() = rho * p.op;
            out += cxd(0.0, -0.5 * p.rabi_rate) * (w1_ - w2_);
        }
    }

private:
    const lindblad_model* model_;
    int dim_;
    spmat hnh_, hnh_adj_;
    std::vector<spmat> l_, l_adj_;
    mat w1_, w2_;
    bool pulse_active_ = false;
};

// [t0, t1] split at the model's interior discontinuities, as a sorted list
// of segment boundaries starting at t0 and ending at t1.
inline std::vector<double> segment_bounds(const lindblad_model& m, double t0, double t1) {
    std::vector<double> s{t0};
    for (double b : m.breakpoints())
        if (b > t0 && b < t1) s.push_back(b);
    s.push_back(t1);
    std::sort(s.begin(), s.end());
    return s;
}

} // namespace detail

struct master_options {
    integrator_options integ{};
    bool validate_states = true; // check each sampled state is a density matrix
    double validate_tol = 1e-6;
};

// Evolve rho0 from t_grid.front() and return the state at every grid time
// (the first entry is rho0 itself). The grid must be strictly increasing.
inline std::vector<mat> evolve_master(const lindblad_model& m, const mat& rho0,
                                      const std::vector<double>& t_grid,
                                      master_options opt = {}) {
    std::vector<std::string> v;
    if (t_grid.empty()) v.push_back("evolve_master: time grid is empty");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1])) {
            v.push_back("evolve_master: time grid must be strictly increasing");
            break;
        }
    if (rho0.rows() != m.space.dim() || rho0.cols() != m.space.dim())
        v.push_back("evolve_master: state dimension does not match the model");
    if (!v.empty()) throw validation_error(std::move(v));
    validate_density(rho0, 1e-8);

    std::vector<mat> out;
    out.reserve(t_grid.size());
    out.push_back(rho0);
    if (t_grid.size() == 1) return out;

    const double user_max_step = opt.integ.max_step;
    detail::lindblad_rhs rhs(m);
    dopri5 stepper([&rhs](double t, const vec& y, vec& dy) { rhs(t, y, dy); }, opt.integ);

    const int d = m.space.dim();
    vec y(d * d);
    Eigen::Map<mat>(y.data(), d, d) = rho0;
    vec sample(d * d);
    std::size_t gi = 1;
    const auto segs = detail::segment_bounds(m, t_grid.front(), t_grid.back());
    for (std::size_t si = 0; si + 1 < segs.size(); ++si) {
        rhs.set_segment(segs[si]);
        stepper.set_max_step(std::min(user_max_step, m.suggested_max_step(segs[si])));
        stepper.start(segs[si], y);
        while (stepper.t() < segs[si + 1]) {
            stepper.advance(segs[si + 1]);
            while (gi < t_grid.size() && t_grid[gi] <= stepper.t()) {
                stepper.eval(t_grid[gi], sample);
                mat rho = Eigen::Map<const mat>(sample.data(), d, d);
                if (opt.validate_states) validate_density(rho, opt.validate_tol);
                out.push_back(std::move(rho));
                ++gi;
            }
        }
        y = stepper.y();
    }
    return out;
}

struct stationary_options {
    integrator_options integ{};
    double tol = 1e-6;      // residual norm, relative to the damping scale
    double max_time = 1e-3; // seconds of model time before giving up
    std::optional<mat> rho0;
};

// Long-time state found by marching the master equation until the
// right-hand side vanishes. Requires a time-independent model.
inline mat stationary_state(const lindblad_model& m, stationary_options opt = {}) {
    if (m.time_dependent())
        throw validation_error("stationary_state: model must be time independent");
    const int d = m.space.dim();
    mat rho = opt.rho0 ? *opt.rho0 : mat(mat::Identity(d, d) / double(d));
    if (rho.rows() != d || rho.cols() != d)
        throw validation_error("stationary_state: state dimension does not match the model");
    validate_density(rho, 1e-8);

    const double rate = m.max_jump_rate();
    double scale = rate;
    if (scale <= 0.0)
        for (int k = 0; k < m.h0.outerSize(); ++k)
            for (spmat::InnerIterator it(m.h0, k); it; ++it)
                scale = std::max(scale, std::abs(it.value()));
    if (scale <= 0.0) return rho; // no dynamics at all: everything is stationary

    detail::lindblad_rhs rhs(m);
    rhs.set_segment(0.0);
    dopri5 stepper([&rhs](double t, const vec& y, vec& dy) { rhs(t, y, dy); }, opt.integ);
    vec y(d * d);
    Eigen::Map<mat>(y.data(), d, d) = rho;
    vec dy(d * d);

    const double window = rate > 0.0 ? 10.0 / rate : opt.max_time / 64.0;
    double t = 0.0;
    while (t < opt.max_time) {
        const double t1 = std::min(t + window, opt.max_time);
        stepper.start(t, y);
        while (stepper.t() < t1) stepper.advance(t1);
        y = stepper.y();
        t = t1;
        rhs(t, y, dy);
        if (dy.norm() < opt.tol * scale * std::max(y.norm(), 1e-300)) {
            mat out = Eigen::Map<const mat>(y.data(), d, d);
            validate_density(out, 1e-6);
            return out;
        }
    }
    throw convergence_error("stationary_state: no fixed point within the time budget");
}

} // namespace ioncav
