#pragma once

// Explicit Dormand-Prince 5(4) pair with fourth-order dense output and
// first-same-as-last reuse. Hand-rolled because jump location needs an
// interpolant valid across the whole accepted step and the run contract
// requires bit-stable results across platforms and thread counts.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "ioncav/errors.hpp"
#include "ioncav/hilbert.hpp"

namespace ioncav {

struct integrator_options {
    double rtol = 1e-8;
    double atol = 1e-10;
    double max_step = std::numeric_limits<double>::infinity();
    double initial_step = 0.0;        // 0 selects a starting step automatically
    long long max_steps = 50'000'000; // attempted steps over the stepper lifetime
};

class dopri5 {
public:
    using rhs_fn = std::function<void(double t, const vec& y, vec& dy)>;

    explicit dopri5(rhs_fn rhs, integrator_options opt = {}) : rhs_(std::move(rhs)), opt_(opt) {
        std::vector<std::string> v;
        if (!(opt_.rtol > 0.0)) v.push_back("integrator_options.rtol must be > 0");
        if (!(opt_.atol > 0.0)) v.push_back("integrator_options.atol must be > 0");
        if (!(opt_.max_step > 0.0)) v.push_back("integrator_options.max_step must be > 0");
        if (opt_.max_steps <= 0) v.push_back("integrator_options.max_steps must be > 0");
        if (!v.empty()) throw validation_error(std::move(v));
    }

    void start(double t0, const vec& y0) {
        t_ = t_prev_ = t0;
        y_ = y0;
        y_prev_ = y0;
        const auto n = y0.size();
        for (vec* w : {&k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &stage_, &y_new_, &rc2_, &rc3_, &rc4_, &rc5_})
            w->resize(n);
        k1_.resize(n);
        rhs_(t_, y_, k1_);
        if (!k1_.allFinite()) throw integration_error("derivative not finite at the start state", t_);
        h_ = opt_.initial_step > 0.0 ? std::min(opt_.initial_step, opt_.max_step) : 0.0;
        h_last_ = 0.0;
    }

    double t() const { return t_; }
    double t_prev() const { return t_prev_; }
    const vec& y() const { return y_; }
    const vec& y_prev() const { return y_prev_; }

    // Per-segment step cap; takes effect from the next attempted step.
    void set_max_step(double h) {
        if (!(h > 0.0)) throw validation_error("set_max_step: max_step must be > 0");
        opt_.max_step = h;
    }

    // One accepted step forward, clamped so the new time never passes t_limit.
    double advance(double t_limit) {
        if (!(t_limit > t_)) return t_;
        // a remaining interval below the step floor is roundoff debris from
        // accumulated boundary times: snap to the limit instead of stepping
        if (t_limit - t_ <= 1e-14 * std::max({std::abs(t_), std::abs(t_limit), 1e-290})) {
            t_ = t_limit;
            return t_;
        }
        if (h_ == 0.0) h_ = select_initial_step(t_limit);
        bool had_rejection = false;
        for (;;) {
            if (++steps_taken_ > opt_.max_steps)
                throw integration_error("step budget exhausted", t_);
            double h = std::min(h_, opt_.max_step);
            const bool clamped = t_ + h >= t_limit;
            if (clamped) h = t_limit - t_;
            const double h_floor = 1e-14 * std::max({std::abs(t_), std::abs(t_limit), 1e-290});
            if (!(h > h_floor)) throw integration_error("step size underflow", t_);

            const double err = attempt(h);
            if (std::isfinite(err) && err <= 1.0) {
                prepare_dense(h);
                t_prev_ = t_;
                y_prev_.swap(y_);
                y_.swap(y_new_);
                t_ = clamped ? t_limit : t_ + h;
                k1_.swap(k7_); // first stage of the next step equals the last stage
                h_last_ = h;
                double fac = 0.9 * std::pow(err > 1e-30 ? err : 1e-30, -0.2);
                fac = std::min(had_rejection ? 1.0 : 5.0, std::max(0.2, fac));
                h_ = (clamped ? h_ : h) * (clamped ? 1.0 : fac);
                return t_;
            }
            had_rejection = true;
            const double fac = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.1;
            h_ = h * fac;
        }
    }

    // Interpolate the solution at s within the last accepted step.
    void eval(double s, vec& out) const {
        if (h_last_ <= 0.0) throw integration_error("no accepted step to interpolate", t_);
        double theta = (s - t_prev_) / h_last_;
        if (theta < -1e-9 || theta > 1.0 + 1e-9)
            throw integration_error("interpolation time outside the last step", t_);
        theta = std::clamp(theta, 0.0, 1.0);
        const double m = 1.0 - theta;
        out = y_prev_ + theta * (rc2_ + m * (rc3_ + theta * (rc4_ + m * rc5_)));
    }

private:
    // Butcher tableau of the Dormand-Prince 5(4) pair.
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                            a75 = -2187.0 / 6784, a76 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                            d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                            d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

    // Run the seven stages from (t_, y_); fills k2..k7 and y_new_, returns the
    // scaled error norm of the embedded pair.
    double attempt(double h) {
        stage_ = y_ + h * (a21 * k1_);
        rhs_(t_ + c2 * h, stage_, k2_);
        stage_ = y_ + h * (a31 * k1_ + a32 * k2_);
        rhs_(t_ + c3 * h, stage_, k3_);
        stage_ = y_ + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
        rhs_(t_ + c4 * h, stage_, k4_);
        stage_ = y_ + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
        rhs_(t_ + c5 * h, stage_, k5_);
        stage_ = y_ + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
        rhs_(t_ + h, stage_, k6_);
        y_new_ = y_ + h * (a71 * k1_ + a73 * k3_ + a74 * k4_ + a75 * k5_ + a76 * k6_);
        rhs_(t_ + h, y_new_, k7_);

        double acc = 0.0;
        const auto n = y_.size();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double ei = std::abs(h * (e1 * k1_(i) + e3 * k3_(i) + e4 * k4_(i) +
                                            e5 * k5_(i) + e6 * k6_(i) + e7 * k7_(i)));
            const double sc = opt_.atol + opt_.rtol * std::max(std::abs(y_(i)), std::abs(y_new_(i)));
            acc += (ei / sc) * (ei / sc);
        }
        return std::sqrt(acc / double(n));
    }

    void prepare_dense(double h) {
        rc2_ = y_new_ - y_;
        rc3_ = h * k1_ - rc2_;
        rc4_ = rc2_ - h * k7_ - rc3_;
        rc5_ = h * (d1 * k1_ + d3 * k3_ + d4 * k4_ + d5 * k5_ + d6 * k6_ + d7 * k7_);
    }

    // Starting step size from the local derivative scale (k1_ is already set).
    double select_initial_step(double t_limit) {
        const auto n = y_.size();
        double dy0 = 0.0, df0 = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double sc = opt_.atol + opt_.rtol * std::abs(y_(i));
            dy0 += std::pow(std::abs(y_(i)) / sc, 2.0);
            df0 += std::pow(std::abs(k1_(i)) / sc, 2.0);
        }
        dy0 = std::sqrt(dy0 / double(n));
        df0 = std::sqrt(df0 / double(n));
        double h0 = (dy0 < 1e-5 || df0 < 1e-5) ? 1e-6 * (t_limit - t_) : 0.01 * dy0 / df0;
        h0 = std::min({h0, opt_.max_step, t_limit - t_});
        stage_ = y_ + h0 * k1_;
        rhs_(t_ + h0, stage_, k2_);
        double d2 = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double sc = opt_.atol + opt_.rtol * std::abs(y_(i));
            d2 += std::pow(std::abs(k2_(i) - k1_(i)) / sc, 2.0);
        }
        d2 = std::sqrt(d2 / double(n)) / h0;
        const double dm = std::max(df0, d2);
        const double h1 = dm > 1e-15 ? std::pow(0.01 / dm, 0.2) : std::max(1e-6, h0 * 1e-3);
        return std::min({100.0 * h0, h1, opt_.max_step, t_limit - t_});
    }

    rhs_fn rhs_;
    integrator_options opt_;
    double t_ = 0.0, t_prev_ = 0.0;
    double h_ = 0.0, h_last_ = 0.0;
    long long steps_taken_ = 0;
    vec y_, y_prev_, y_new_, stage_;
    vec k1_, k2_, k3_, k4_, k5_, k6_, k7_;
    vec rc2_, rc3_, rc4_, rc5_;
};

} // namespace ioncav
