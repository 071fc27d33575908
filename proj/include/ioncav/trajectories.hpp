#pragma once

// Monte Carlo wavefunction unraveling of a lindblad_model. Each trajectory
// index owns a deterministic random stream derived from the batch seed, so a
// batch is reproducible bit for bit regardless of how many worker threads
// execute it. Jump times are located by bisection on the survival norm
// inside the dense output of the accepted step.

#include <algorithm>
#include <cstdint>
#include <thread>
#include <utility>
#include <vector>

#include "ioncav/errors.hpp"
#include "ioncav/hilbert.hpp"
#include "ioncav/integrator.hpp"
#include "ioncav/model.hpp"
#include "ioncav/rng.hpp"

namespace ioncav {

struct jump_event {
    double t = 0.0;
    int channel = -1; // index into lindblad_model::channels
};

struct trajectory_result {
    std::uint64_t seed = 0;
    std::vector<jump_event> jumps;
    int final_atom = -1;      // atomic level sampled from the end-of-run state
    std::vector<int> samples; // atomic level sampled at each requested sample time
};

struct trajectory_options {
    double t_end = 0.0;
    double start_time = 0.0;
    integrator_options integ{};
    double jump_time_tol = 0.0; // 0 resolves jumps to 1e-3 of the fastest decay
    int threads = 1;
    // Times at which the atomic level is sampled from the conditional state.
    // Must be non-decreasing and inside [start_time, t_end].
    std::vector<double> sample_times;
};

namespace detail {

// Non-Hermitian propagation d psi/dt = -i (H(t) - i/2 sum L^dag L) psi with
// preallocated workspace. One instance per worker thread.
class heff_rhs {
public:
    explicit heff_rhs(const lindblad_model& m) : model_(&m) {
        hnh_ = spmat(m.h0 - cxd(0.0, 0.5) * m.sum_ldl());
        hnh_.makeCompressed();
        w_.resize(m.space.dim());
    }

    void set_segment(double seg_start) {
        pulse_active_ = model_->pulse && seg_start < model_->pulse->duration;
    }

    void operator()(double t, const vec& y, vec& dy) {
        dy.resize(y.size());
        dy.noalias() = hnh_ * y;
        if (model_->mod_amplitude != 0.0) {
            const double c = model_->mod_amplitude * std::cos(model_->mod_omega * t);
            w_.noalias() = model_->h_mod * y;
            dy += c * w_;
        }
        if (pulse_active_) {
            w_.noalias() = model_->pulse->op * y;
            dy += (0.5 * model_->pulse->rabi_rate) * w_;
        }
        dy *= cxd(0.0, -1.0);
    }

private:
    const lindblad_model* model_;
    spmat hnh_;
    vec w_;
    bool pulse_active_ = false;
};

// A state is frozen when no Hamiltonian term and no collapse channel can
// act on it anymore; the trajectory then skips straight to the end time.
inline bool frozen_state(const lindblad_model& m, const spmat& sldl, double t, const vec& psi,
                         double eps) {
    if (m.pulse && t < m.pulse->duration) return false;
    if ((sldl * psi).norm() > eps) return false;
    if ((m.h0 * psi).norm() > eps) return false;
    if (m.mod_amplitude != 0.0 && m.mod_amplitude * (m.h_mod * psi).norm() > eps) return false;
    return true;
}

inline int sample_atomic_level(const hilbert_space& space, const vec& psi, rng& r) {
    const int per_atom = space.n_fock() * space.n_fock();
    double u = r.uniform() * psi.squaredNorm(); // robust to unnormalized input
    double acc = 0.0;
    for (int a = 0; a < space.n_atom(); ++a) {
        acc += psi.segment(Eigen::Index(a) * per_atom, per_atom).squaredNorm();
        if (u < acc) return a;
    }
    return space.n_atom() - 1;
}

struct trajectory_context {
    const lindblad_model& model;
    const std::vector<std::pair<double, vec>>& mixture;
    double weight_total;
    spmat sldl;
    double rate_scale;     // fastest total decay rate in the model
    double frozen_eps;     // absolute threshold for the frozen-state test
    double jump_tol;       // time resolution of jump location
    double user_max_step;  // caller step cap, combined per segment with the model's
    trajectory_options opt;
};

inline trajectory_result simulate_one(const trajectory_context& ctx, std::uint64_t seed,
                                      heff_rhs& rhs, dopri5& stepper) {
    const auto& m = ctx.model;
    trajectory_result res;
    res.seed = seed;
    rng r(seed);

    const vec* pick = &ctx.mixture.back().second;
    {
        const double u = r.uniform() * ctx.weight_total;
        double acc = 0.0;
        for (const auto& comp : ctx.mixture) {
            acc += comp.first;
            if (u < acc) {
                pick = &comp.second;
                break;
            }
        }
    }
    vec psi = pick->normalized();

    double t = ctx.opt.start_time;
    double target = r.uniform_pos(); // survival probability at the next jump
    vec mid(psi.size());

    const auto& stimes = ctx.opt.sample_times;
    std::size_t snext = 0;
    vec sbuf(psi.size());
    auto sample_dense = [&](double up_to) {
        // conditional state interpolated inside the current accepted step
        while (snext < stimes.size() && stimes[snext] <= up_to) {
            stepper.eval(stimes[snext], sbuf);
            res.samples.push_back(sample_atomic_level(m.space, sbuf, r));
            ++snext;
        }
    };
    auto sample_still = [&](double up_to, const vec& state) {
        while (snext < stimes.size() && stimes[snext] <= up_to) {
            res.samples.push_back(sample_atomic_level(m.space, state, r));
            ++snext;
        }
    };
    sample_still(t, psi);

    while (t < ctx.opt.t_end) {
        if (frozen_state(m, ctx.sldl, t, psi, ctx.frozen_eps)) break;
        double limit = ctx.opt.t_end;
        for (double b : m.breakpoints())
            if (b > t && b < limit) limit = b;
        rhs.set_segment(t);
        stepper.set_max_step(std::min(ctx.user_max_step, m.suggested_max_step(t)));
        stepper.start(t, psi);
        bool jumped = false;
        while (stepper.t() < limit) {
            stepper.advance(limit);
            if (stepper.y().squaredNorm() <= target) {
                // the survival norm crossed the draw inside this step
                double a = stepper.t_prev(), b = stepper.t();
                while (b - a > ctx.jump_tol) {
                    const double c = 0.5 * (a + b);
                    stepper.eval(c, mid);
                    (mid.squaredNorm() > target ? a : b) = c;
                }
                stepper.eval(b, mid);
                t = b;
                sample_dense(b); // sample times up to the jump see the pre-jump state

                double w_total = 0.0;
                thread_local std::vector<double> w;
                w.assign(m.channels.size(), 0.0);
                for (std::size_t k = 0; k < m.channels.size(); ++k) {
                    w[k] = (m.channels[k].op * mid).squaredNorm();
                    w_total += w[k];
                }
                std::size_t chosen = m.channels.size() - 1;
                const double u = r.uniform() * w_total;
                double acc = 0.0;
                for (std::size_t k = 0; k < m.channels.size(); ++k) {
                    acc += w[k];
                    if (u < acc) {
                        chosen = k;
                        break;
                    }
                }
                psi = (m.channels[chosen].op * mid).normalized();
                res.jumps.push_back({t, int(chosen)});
                if (m.channels[chosen].tag.kind == channel_kind::spont_to_sink) {
                    // the sink holds the atom, so its state is already final;
                    // any cavity photons still present are not followed
                    res.final_atom = m.space.scheme().sink_index();
                    for (; snext < stimes.size(); ++snext) res.samples.push_back(res.final_atom);
                    return res;
                }
                target = r.uniform_pos();
                jumped = true;
                break;
            }
            sample_dense(stepper.t());
        }
        if (!jumped) {
            t = stepper.t();
            psi = stepper.y();
        }
    }

    psi.normalize();
    sample_still(ctx.opt.t_end, psi); // the remaining state is frozen or past t_end
    res.final_atom = sample_atomic_level(m.space, psi, r);
    return res;
}

} // namespace detail

inline std::vector<trajectory_result> run_trajectories(
    const lindblad_model& m, const std::vector<std::pair<double, vec>>& mixture, std::size_t n,
    std::uint64_t base_seed, trajectory_options opt = {}) {
    std::vector<std::string> v;
    if (!(opt.t_end > opt.start_time)) v.push_back("trajectories: t_end must exceed start_time");
    if (mixture.empty()) v.push_back("trajectories: initial mixture is empty");
    double w_total = 0.0;
    for (const auto& comp : mixture) {
        if (!(comp.first >= 0.0)) v.push_back("trajectories: mixture weights must be >= 0");
        if (comp.second.size() != m.space.dim())
            v.push_back("trajectories: initial state dimension does not match the model");
        else if (!(comp.second.norm() > 0.0))
            v.push_back("trajectories: initial state must not be the zero vector");
        w_total += comp.first;
    }
    if (mixture.size() > 0 && !(w_total > 0.0))
        v.push_back("trajectories: mixture weights must not all vanish");
    if (opt.threads < 1) v.push_back("trajectories: thread count must be >= 1");
    for (std::size_t i = 0; i < opt.sample_times.size(); ++i) {
        const double s = opt.sample_times[i];
        if (!(s >= opt.start_time && s <= opt.t_end)) {
            v.push_back("trajectories: sample times must lie within [start_time, t_end]");
            break;
        }
        if (i > 0 && s < opt.sample_times[i - 1]) {
            v.push_back("trajectories: sample times must be non-decreasing");
            break;
        }
    }
    if (!v.empty()) throw validation_error(std::move(v));

    detail::trajectory_context ctx{m, mixture, w_total, m.sum_ldl(), 0.0, 0.0, 0.0, 0.0, opt};
    ctx.user_max_step = opt.integ.max_step;
    ctx.rate_scale = m.max_jump_rate();
    ctx.frozen_eps = 1e-12 * std::max(ctx.rate_scale, 1.0);
    ctx.jump_tol = opt.jump_time_tol > 0.0
                       ? opt.jump_time_tol
                       : (ctx.rate_scale > 0.0 ? 1e-3 / ctx.rate_scale
                                               : opt.t_end - opt.start_time);

    std::vector<trajectory_result> out(n);
    auto worker = [&](std::size_t i0, std::size_t i1) {
        detail::heff_rhs rhs(m);
        dopri5 stepper([&rhs](double t, const vec& y, vec& dy) { rhs(t, y, dy); },
                       ctx.opt.integ);
        for (std::size_t i = i0; i < i1; ++i)
            out[i] = detail::simulate_one(ctx, derive_seed(base_seed, 0, i), rhs, stepper);
    };

    const int n_threads = std::min<std::size_t>(std::max(1, opt.threads), std::max<std::size_t>(n, 1));
    if (n_threads <= 1) {
        worker(0, n);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int j = 0; j < n_threads; ++j) {
            const std::size_t i0 = n * std::size_t(j) / std::size_t(n_threads);
            const std::size_t i1 = n * std::size_t(j + 1) / std::size_t(n_threads);
            pool.emplace_back(worker, i0, i1);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

inline std::vector<trajectory_result> run_trajectories(const lindblad_model& m, const vec& psi0,
                                                       std::size_t n, std::uint64_t base_seed,
                                                       trajectory_options opt = {}) {
    const std::vector<std::pair<double, vec>> mixture = {{1.0, psi0}};
    return run_trajectories(m, mixture, n, base_seed, opt);
}

} // namespace ioncav
