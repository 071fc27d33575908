#pragma once

// Detection post-processing of trajectory batches. Each cycle (one
// trajectory) is thinned and augmented with background independently, under
// a random stream derived from the observable seed and the cycle index, so
// results do not depend on batch partitioning and the same batch can feed
// several detection models reproducibly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ioncav/errors.hpp"
#include "ioncav/model.hpp"
#include "ioncav/rng.hpp"
#include "ioncav/trajectories.hpp"

namespace ioncav {

// Efficiencies behind the output mirror. The split between the two mirrors
// and intracavity loss is already carried by the trajectory jump tags, so
// eta_mirror is informational (budget reports); thinning applies the mode
// matching, path, and detector factors to every output-mirror click.
struct detection_model {
    double eta_mirror = 0.32;
    double eps_mode = 0.90;
    double eta_path = 0.75;
    double eta_det = 0.25;
    double background_rate = 0.0; // Hz per detector, stray light
    double dark_rate = 0.0;       // Hz per detector, detector darks
    double pol_mixing = 0.0;      // probability a click is tagged with the wrong polarization

    double thinning() const { return eps_mode * eta_path * eta_det; }

    void validate() const {
        std::vector<std::string> v;
        for (double e : {eta_mirror, eps_mode, eta_path, eta_det})
            if (!(e >= 0.0 && e <= 1.0)) {
                v.push_back("detection_model: efficiencies must lie in [0, 1]");
                break;
            }
        if (!(background_rate >= 0.0)) v.push_back("detection_model.background_rate must be >= 0");
        if (!(dark_rate >= 0.0)) v.push_back("detection_model.dark_rate must be >= 0");
        if (!(pol_mixing >= 0.0 && pol_mixing <= 1.0))
            v.push_back("detection_model.pol_mixing must lie in [0, 1]");
        if (!v.empty()) throw validation_error(std::move(v));
    }
};

struct histogram {
    std::vector<double> edges;  // ascending, one more than counts
    std::vector<double> counts;
    double underflow = 0.0, overflow = 0.0;

    static histogram uniform(double lo, double hi, int bins) {
        std::vector<std::string> v;
        if (!(hi > lo)) v.push_back("histogram: upper edge must exceed lower edge");
        if (bins < 1) v.push_back("histogram: needs at least one bin");
        if (!v.empty()) throw validation_error(std::move(v));
        histogram h;
        h.edges.resize(std::size_t(bins) + 1);
        for (int i = 0; i <= bins; ++i)
            h.edges[std::size_t(i)] = lo + (hi - lo) * double(i) / double(bins);
        h.counts.assign(std::size_t(bins), 0.0);
        return h;
    }

    // bin index; -1 below the range, counts.size() above. The top edge is
    // inclusive so window-boundary samples are kept.
    int bin_of(double x) const {
        if (x < edges.front()) return -1;
        if (x > edges.back()) return int(counts.size());
        if (x == edges.back()) return int(counts.size()) - 1;
        const auto it = std::upper_bound(edges.begin(), edges.end(), x);
        return int(it - edges.begin()) - 1;
    }

    void add(double x, double w = 1.0) {
        const int b = bin_of(x);
        if (b < 0)
            underflow += w;
        else if (b >= int(counts.size()))
            overflow += w;
        else
            counts[std::size_t(b)] += w;
    }

    double total() const {
        double s = 0.0;
        for (double c : counts) s += c;
        return s;
    }

    double center(int i) const { return 0.5 * (edges[std::size_t(i)] + edges[std::size_t(i) + 1]); }
};

namespace detail {

inline bool is_output_click(const lindblad_model& m, const jump_event& j) {
    return m.channels[std::size_t(j.channel)].tag.kind == channel_kind::mirror_ht;
}

inline pol click_pol(const lindblad_model& m, const jump_event& j) {
    return m.channels[std::size_t(j.channel)].tag.p;
}

} // namespace detail

struct arrival_options {
    double t_lo = 0.0;
    double t_hi = 0.0;
    int bins = 0;
};

// Arrival-time histogram of detected photons over all cycles: output-mirror
// clicks thinned by the detection chain, plus uniform background from two
// polarization-blind detectors.
inline histogram time_arrival_histogram(const lindblad_model& m,
                                        const std::vector<trajectory_result>& batch,
                                        const detection_model& det, const arrival_options& opt,
                                        std::uint64_t seed) {
    det.validate();
    histogram h = histogram::uniform(opt.t_lo, opt.t_hi, opt.bins);
    const double thin = det.thinning();
    const double window = opt.t_hi - opt.t_lo;
    const double bg_mean = 2.0 * (det.background_rate + det.dark_rate) * window;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        rng r(derive_seed(seed, 10, i));
        for (const auto& j : batch[i].jumps) {
            if (!detail::is_output_click(m, j)) continue;
            if (j.t < opt.t_lo || j.t > opt.t_hi) continue;
            if (r.bernoulli(thin)) h.add(j.t);
        }
        if (bg_mean > 0.0) {
            const auto k = r.poisson(bg_mean);
            for (std::uint64_t q = 0; q < k; ++q) h.add(opt.t_lo + r.uniform() * window);
        }
    }
    return h;
}

struct g2_options {
    double window_lo = 0.0;
    double window_hi = 0.0;
    int max_lag = 10; // in cycles
};

struct g2_result {
    int max_lag = 0;
    std::vector<double> counts; // signed cycle lag, index lag + max_lag
    std::uint64_t clicks_a = 0, clicks_b = 0;
    std::size_t n_cycles = 0;

    double at(int lag) const { return counts.at(std::size_t(lag + max_lag)); }
};

// Cycle-resolved coincidences between the two arms of a balanced splitter:
// counts[lag] sums clicks_a(cycle) * clicks_b(cycle + lag). Lag zero holds
// the same-cycle coincidences that antibunching suppresses.
inline g2_result coincidence_histogram(const lindblad_model& m,
                                       const std::vector<trajectory_result>& batch,
                                       const detection_model& det, const g2_options& opt,
                                       std::uint64_t seed) {
    det.validate();
    std::vector<std::string> v;
    if (!(opt.window_hi > opt.window_lo)) v.push_back("coincidences: empty detection window");
    if (opt.max_lag < 1) v.push_back("coincidences: max_lag must be >= 1");
    if (!v.empty()) throw validation_error(std::move(v));

    const double thin = det.thinning();
    const double window = opt.window_hi - opt.window_lo;
    const double bg_mean = (det.background_rate + det.dark_rate) * window; // per detector
    const std::size_t n = batch.size();
    std::vector<std::uint32_t> na(n, 0), nb(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        rng r(derive_seed(seed, 11, i));
        for (const auto& j : batch[i].jumps) {
            if (!detail::is_output_click(m, j)) continue;
            if (j.t < opt.window_lo || j.t > opt.window_hi) continue;
            if (!r.bernoulli(thin)) continue;
            (r.bernoulli(0.5) ? na[i] : nb[i]) += 1;
        }
        if (bg_mean > 0.0) {
            na[i] += std::uint32_t(r.poisson(bg_mean));
            nb[i] += std::uint32_t(r.poisson(bg_mean));
        }
    }

    g2_result out;
    out.max_lag = opt.max_lag;
    out.n_cycles = n;
    out.counts.assign(2 * std::size_t(opt.max_lag) + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        out.clicks_a += na[i];
        out.clicks_b += nb[i];
        for (int lag = -opt.max_lag; lag <= opt.max_lag; ++lag) {
            const long long jdx = (long long)i + lag;
            if (jdx < 0 || jdx >= (long long)n) continue;
            out.counts[std::size_t(lag + opt.max_lag)] += double(na[i]) * double(nb[std::size_t(jdx)]);
        }
    }
    return out;
}

// Threshold fluorescence readout: the gateway level reads dark, every other
// level reads bright, each with its stated fidelity.
struct readout_model {
    double dark_given_down = 0.98;
    double bright_given_up = 0.98;
    int down_level = 0; // atomic index that reads dark

    void validate() const {
        std::vector<std::string> v;
        if (!(dark_given_down >= 0.0 && dark_given_down <= 1.0))
            v.push_back("readout_model.dark_given_down must lie in [0, 1]");
        if (!(bright_given_up >= 0.0 && bright_given_up <= 1.0))
            v.push_back("readout_model.bright_given_up must lie in [0, 1]");
        if (down_level < 0) v.push_back("readout_model.down_level must be >= 0");
        if (!v.empty()) throw validation_error(std::move(v));
    }
};

struct spin_photon_options {
    double t_lo = 0.0;
    double t_hi = 0.0;
};

struct spin_photon_result {
    // [herald polarization: 0 sigma+, 1 sigma-][readout: 0 dark, 1 bright]
    std::array<std::array<std::uint64_t, 2>, 2> counts{};
    std::size_t n_cycles = 0;

    std::uint64_t heralds_plus() const { return counts[0][0] + counts[0][1]; }
    std::uint64_t heralds_minus() const { return counts[1][0] + counts[1][1]; }
    double p_dark_given_plus() const {
        return double(counts[0][0]) / double(heralds_plus());
    }
    double p_bright_given_minus() const {
        return double(counts[1][1]) / double(heralds_minus());
    }
    double herald_ratio() const { return double(heralds_plus()) / double(heralds_minus()); }
};

// First detected click in the window heralds the cycle with its polarization
// tag; the atomic state is then read out through the threshold model. The
// two detectors are polarization-resolved, each adding its own background.
inline spin_photon_result spin_photon_correlation(const lindblad_model& m,
                                                  const std::vector<trajectory_result>& batch,
                                                  const detection_model& det,
                                                  const readout_model& readout,
                                                  const spin_photon_options& opt,
                                                  std::uint64_t seed) {
    det.validate();
    readout.validate();
    if (!(opt.t_hi > opt.t_lo)) throw validation_error("spin correlation: empty herald window");

    const double thin = det.thinning();
    const double window = opt.t_hi - opt.t_lo;
    const double bg_mean = (det.background_rate + det.dark_rate) * window; // per detector
    spin_photon_result out;
    out.n_cycles = batch.size();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        rng r(derive_seed(seed, 12, i));
        bool have = false;
        double t_first = 0.0;
        int pol_first = 0;
        for (const auto& j : batch[i].jumps) {
            if (!detail::is_output_click(m, j)) continue;
            if (j.t < opt.t_lo || j.t > opt.t_hi) continue;
            if (!r.bernoulli(thin)) continue;
            bool plus = detail::click_pol(m, j) == pol::sigma_plus;
            if (det.pol_mixing > 0.0 && r.bernoulli(det.pol_mixing)) plus = !plus;
            if (!have || j.t < t_first) {
                have = true;
                t_first = j.t;
                pol_first = plus ? 0 : 1;
            }
        }
        if (bg_mean > 0.0) {
            for (int d = 0; d < 2; ++d) {
                const auto k = r.poisson(bg_mean);
                for (std::uint64_t q = 0; q < k; ++q) {
                    const double t = opt.t_lo + r.uniform() * window;
                    if (!have || t < t_first) {
                        have = true;
                        t_first = t;
                        pol_first = d;
                    }
                }
            }
        }
        if (!have) continue;
        const bool down = batch[i].final_atom == readout.down_level;
        const double p_dark = down ? readout.dark_given_down : 1.0 - readout.bright_given_up;
        const bool dark = r.bernoulli(p_dark);
        out.counts[std::size_t(pol_first)][dark ? 0 : 1] += 1;
    }
    return out;
}

// Per-photon absorption probability from the shelving probability after an
// exposure of photons_in photons, inverting P = 1 - exp(-n p).
inline double absorption_per_photon(double p_shelved, double photons_in) {
    std::vector<std::string> v;
    if (!(p_shelved >= 0.0 && p_shelved < 1.0))
        v.push_back("absorption_per_photon: shelving probability must lie in [0, 1)");
    if (!(photons_in > 0.0)) v.push_back("absorption_per_photon: photon number must be > 0");
    if (!v.empty()) throw validation_error(std::move(v));
    return -std::log1p(-p_shelved) / photons_in;
}

} // namespace ioncav
