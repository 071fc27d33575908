#pragma once

// Model fits used by the analysis pipeline: exponential decay of arrival
// histograms and the one-parameter saturation law of shelving data.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ioncav/errors.hpp"

namespace ioncav {

struct exp_fit {
    double amplitude = 0.0;
    double tau = 0.0;
};

// Weighted least squares on log counts. The first pass weights by the
// observed counts; two reweighting passes then take the weights from the
// fitted model instead, which removes the upward tau bias that correlated
// count-and-log noise produces at moderate statistics. Zero bins are skipped.
inline exp_fit fit_exponential(const std::vector<double>& t, const std::vector<double>& y) {
    if (t.size() != y.size())
        throw validation_error("fit_exponential: time and count arrays differ in size");

    exp_fit fit;
    for (int pass = 0; pass < 3; ++pass) {
        double sw = 0.0, swx = 0.0, swy = 0.0, swxx = 0.0, swxy = 0.0;
        std::size_t used = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (!(y[i] > 0.0)) continue;
            const double x = t[i], ly = std::log(y[i]);
            const double w = pass == 0 ? y[i] : fit.amplitude * std::exp(-x / fit.tau);
            sw += w;
            swx += w * x;
            swy += w * ly;
            swxx += w * x * x;
            swxy += w * x * ly;
            ++used;
        }
        if (used < 3) throw fit_error("fit_exponential: needs at least 3 bins with counts");
        const double denom = sw * swxx - swx * swx;
        if (!(denom > 0.0)) throw fit_error("fit_exponential: degenerate time axis");
        const double slope = (sw * swxy - swx * swy) / denom;
        const double intercept = (swy - slope * swx) / sw;
        if (!(slope < 0.0)) throw fit_error("fit_exponential: counts do not decay");
        fit = {std::exp(intercept), -1.0 / slope};
    }
    return fit;
}

struct saturation_fit {
    double n0 = 0.0;           // photon scale of P = 1 - exp(-n/n0)
    double rms_residual = 0.0; // weighted rms misfit in probability units
    bool poor_fit = false;
};

// One-parameter least squares of P(n) = 1 - exp(-n/n0), minimized over
// log(n0) by golden-section search (the objective is smooth and unimodal
// for saturating data).
inline saturation_fit fit_saturation(const std::vector<double>& n, const std::vector<double>& p,
                                     std::vector<double> w = {}, double poor_threshold = 0.02) {
    std::vector<std::string> v;
    if (n.size() != p.size()) v.push_back("fit_saturation: arrays differ in size");
    if (!w.empty() && w.size() != n.size())
        v.push_back("fit_saturation: weight array differs in size");
    for (double x : n)
        if (!(x > 0.0)) {
            v.push_back("fit_saturation: photon numbers must be > 0");
            break;
        }
    for (double q : p)
        if (!(q >= 0.0 && q < 1.0)) {
            v.push_back("fit_saturation: probabilities must lie in [0, 1)");
            break;
        }
    for (double q : w)
        if (!(q >= 0.0)) {
            v.push_back("fit_saturation: weights must be >= 0");
            break;
        }
    if (!v.empty()) throw validation_error(std::move(v));
    if (n.size() < 2) throw fit_error("fit_saturation: needs at least 2 samples");
    if (w.empty()) w.assign(n.size(), 1.0);
    if (*std::max_element(p.begin(), p.end()) <= 0.0)
        throw fit_error("fit_saturation: no shelving signal to fit");

    const auto sse = [&](double ln_n0) {
        const double n0 = std::exp(ln_n0);
        double s = 0.0;
        for (std::size_t i = 0; i < n.size(); ++i) {
            const double r = p[i] - (1.0 - std::exp(-n[i] / n0));
            s += w[i] * r * r;
        }
        return s;
    };

    const double lo0 = std::log(*std::min_element(n.begin(), n.end())) - std::log(1e3);
    const double hi0 = std::log(*std::max_element(n.begin(), n.end())) + std::log(1e3);
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo0, b = hi0;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = sse(x1), f2 = sse(x2);
    while (b - a > 1e-10) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = sse(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = sse(x2);
        }
    }
    const double best = 0.5 * (a + b);
    if (best < lo0 + 1e-6 || best > hi0 - 1e-6)
        throw fit_error("fit_saturation: no photon scale inside the search range");

    saturation_fit out;
    out.n0 = std::exp(best);
    double wsum = 0.0;
    for (double q : w) wsum += q;
    out.rms_residual = std::sqrt(sse(best) / (wsum > 0.0 ? wsum : 1.0));
    out.poor_fit = out.rms_residual > poor_threshold;
    return out;
}

} // namespace ioncav
