#pragma once

// Atomic level structure: the metastable D manifold (four Zeeman sublevels),
// the short-lived excited doublet it couples to, and one lumped sink level
// for the strong decay out of the lambda system. The dipole amplitudes of the
// excited doublet follow standard J' = 1/2 -> J = 3/2 angular-momentum
// algebra: per excited sublevel the (sigma, pi, sigma') weights are
// 1/2 : 1/3 : 1/6, normalized to 1.

#include <cmath>
#include <string>
#include <vector>

#include "ioncav/errors.hpp"

namespace ioncav {

enum class pol { sigma_plus, sigma_minus, pi_pol };

inline const char* to_string(pol p) {
    switch (p) {
        case pol::sigma_plus: return "sigma+";
        case pol::sigma_minus: return "sigma-";
        default: return "pi";
    }
}

enum class state_kind { d_level, e_level, sink };

struct atomic_state {
    state_kind kind;
    double m; // magnetic quantum number; 0 for the lumped sink
    std::string name;
};

struct level_scheme {
    std::vector<atomic_state> states;
    std::vector<double> zeeman_shift; // rad/s, aligned with states

    // D sublevels ordered by m, then the excited doublet, then the sink.
    static level_scheme yb174() {
        level_scheme s;
        s.states = {{state_kind::d_level, -1.5, "d[-3/2]"}, {state_kind::d_level, -0.5, "d[-1/2]"},
                    {state_kind::d_level, 0.5, "d[+1/2]"},  {state_kind::d_level, 1.5, "d[+3/2]"},
                    {state_kind::e_level, -0.5, "e[-1/2]"}, {state_kind::e_level, 0.5, "e[+1/2]"},
                    {state_kind::sink, 0.0, "s"}};
        s.zeeman_shift.assign(s.states.size(), 0.0);
        return s;
    }

    int size() const { return static_cast<int>(states.size()); }

    int index_of(state_kind kind, double m) const {
        for (int i = 0; i < size(); ++i)
            if (states[i].kind == kind && states[i].m == m) return i;
        return -1;
    }

    std::vector<int> indices_of(state_kind kind) const {
        std::vector<int> out;
        for (int i = 0; i < size(); ++i)
            if (states[i].kind == kind) out.push_back(i);
        return out;
    }

    std::vector<int> d_indices() const { return indices_of(state_kind::d_level); }
    std::vector<int> e_indices() const { return indices_of(state_kind::e_level); }

    int sink_index() const {
        const auto s = indices_of(state_kind::sink);
        return s.empty() ? -1 : s.front();
    }

    void validate() const {
        std::vector<std::string> v;
        if (states.empty()) v.push_back("level_scheme.states must not be empty");
        if (zeeman_shift.size() != states.size())
            v.push_back("level_scheme.zeeman_shift must match states in length");
        if (indices_of(state_kind::sink).size() > 1)
            v.push_back("level_scheme: at most one sink level");
        if (!v.empty()) throw validation_error(std::move(v));
    }
};

// One dipole-allowed decay e -> d with the photon polarization it emits.
struct transition {
    int e_index;
    int d_index;
    pol p;
    double amplitude; // per-e-sublevel normalization: sum of squares = 1
};

struct transition_table {
    std::vector<transition> entries;

    // Condon-Shortley signs; sigma+ emission lowers m by 1, sigma- raises it.
    static transition_table yb174(const level_scheme& s) {
        const int em = s.index_of(state_kind::e_level, -0.5);
        const int ep = s.index_of(state_kind::e_level, 0.5);
        transition_table t;
        t.entries = {
            {em, s.index_of(state_kind::d_level, -1.5), pol::sigma_plus, std::sqrt(1.0 / 2.0)},
            {em, s.index_of(state_kind::d_level, -0.5), pol::pi_pol, -std::sqrt(1.0 / 3.0)},
            {em, s.index_of(state_kind::d_level, 0.5), pol::sigma_minus, std::sqrt(1.0 / 6.0)},
            {ep, s.index_of(state_kind::d_level, -0.5), pol::sigma_plus, std::sqrt(1.0 / 6.0)},
            {ep, s.index_of(state_kind::d_level, 0.5), pol::pi_pol, -std::sqrt(1.0 / 3.0)},
            {ep, s.index_of(state_kind::d_level, 1.5), pol::sigma_minus, std::sqrt(1.0 / 2.0)},
        };
        return t;
    }

    double max_abs_amplitude() const {
        double m = 0.0;
        for (const auto& t : entries) m = std::max(m, std::abs(t.amplitude));
        return m;
    }

    // (sigma+, sigma-) amplitudes of one excited sublevel, renormalized over
    // the two cavity-coupled channels. For m' = -1/2 this is the photon-spin
    // entangled pair (sqrt(3)/2, 1/2).
    struct cavity_amplitudes {
        double plus = 0.0;
        double minus = 0.0;
    };
    cavity_amplitudes cavity_pair(int e_index) const {
        cavity_amplitudes c;
        for (const auto& t : entries) {
            if (t.e_index != e_index) continue;
            if (t.p == pol::sigma_plus) c.plus = std::abs(t.amplitude);
            if (t.p == pol::sigma_minus) c.minus = std::abs(t.amplitude);
        }
        const double n = std::sqrt(c.plus * c.plus + c.minus * c.minus);
        if (n > 0.0) {
            c.plus /= n;
            c.minus /= n;
        }
        return c;
    }

    void validate(const level_scheme& s) const {
        std::vector<std::string> v;
        for (const auto& t : entries) {
            if (t.e_index < 0 || t.e_index >= s.size() ||
                s.states[t.e_index].kind != state_kind::e_level)
                v.push_back("transition_table: e_index does not name an excited state");
            if (t.d_index < 0 || t.d_index >= s.size() ||
                s.states[t.d_index].kind != state_kind::d_level)
                v.push_back("transition_table: d_index does not name a ground sublevel");
        }
        for (int e : s.e_indices()) {
            double sum = 0.0;
            for (const auto& t : entries)
                if (t.e_index == e) sum += t.amplitude * t.amplitude;
            if (std::abs(sum - 1.0) > 1e-12)
                v.push_back("transition_table: amplitudes of " + s.states[e].name +
                            " must satisfy sum of squares = 1");
        }
        if (!v.empty()) throw validation_error(std::move(v));
    }
};

} // namespace ioncav
