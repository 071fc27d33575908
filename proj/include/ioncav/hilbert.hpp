#pragma once

// Composite Hilbert space: atom (x) fock(sigma+) (x) fock(sigma-), both
// cavity modes truncated at the same photon number. Flat index convention:
// atom slowest, then the plus mode, then the minus mode. Operators are
// sparse; dimensions stay small (<= a few hundred) so dense conversions are
// cheap where convenient.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>
#include <string>
#include <vector>

#include "ioncav/errors.hpp"
#include "ioncav/level_scheme.hpp"

namespace ioncav {

using cxd = std::complex<double>;
using mat = Eigen::MatrixXcd;
using vec = Eigen::VectorXcd;
using spmat = Eigen::SparseMatrix<cxd>;
using triplet = Eigen::Triplet<cxd>;

struct basis_label {
    int atom;
    int n_plus;
    int n_minus;
};

class hilbert_space {
  public:
    hilbert_space(level_scheme scheme, int n_max) : scheme_(std::move(scheme)), n_max_(n_max) {
        scheme_.validate();
        if (n_max < 0) throw validation_error("hilbert_space: n_max must be >= 0");
        n_fock_ = n_max_ + 1;
        dim_ = scheme_.size() * n_fock_ * n_fock_;
    }

    int dim() const { return dim_; }
    int n_max() const { return n_max_; }
    int n_fock() const { return n_fock_; }
    int n_atom() const { return scheme_.size(); }
    const level_scheme& scheme() const { return scheme_; }

    int flat_index(int atom, int n_plus, int n_minus) const {
        check_label(atom, n_plus, n_minus);
        return (atom * n_fock_ + n_plus) * n_fock_ + n_minus;
    }

    basis_label label_of(int flat) const {
        if (flat < 0 || flat >= dim_) throw validation_error("hilbert_space: flat index out of range");
        basis_label l;
        l.n_minus = flat % n_fock_;
        flat /= n_fock_;
        l.n_plus = flat % n_fock_;
        l.atom = flat / n_fock_;
        return l;
    }

    vec basis_state(int atom, int n_plus = 0, int n_minus = 0) const {
        vec v = vec::Zero(dim_);
        v(flat_index(atom, n_plus, n_minus)) = 1.0;
        return v;
    }

    // Annihilation operator of one circular cavity mode.
    spmat annihilation(pol mode) const {
        if (mode == pol::pi_pol)
            throw validation_error("hilbert_space: the cavity carries no pi-polarized mode");
        std::vector<triplet> trip;
        trip.reserve(static_cast<std::size_t>(dim_));
        for (int a = 0; a < n_atom(); ++a)
            for (int np = 0; np < n_fock_; ++np)
                for (int nm = 0; nm < n_fock_; ++nm) {
                    if (mode == pol::sigma_plus && np > 0)
                        trip.emplace_back(flat_index(a, np - 1, nm), flat_index(a, np, nm),
                                          std::sqrt(static_cast<double>(np)));
                    if (mode == pol::sigma_minus && nm > 0)
                        trip.emplace_back(flat_index(a, np, nm - 1), flat_index(a, np, nm),
                                          std::sqrt(static_cast<double>(nm)));
                }
        return from_triplets(trip);
    }

    spmat number_op(pol mode) const {
        if (mode == pol::pi_pol)
            throw validation_error("hilbert_space: the cavity carries no pi-polarized mode");
        std::vector<triplet> trip;
        for (int i = 0; i < dim_; ++i) {
            const auto l = label_of(i);
            const int n = (mode == pol::sigma_plus) ? l.n_plus : l.n_minus;
            if (n > 0) trip.emplace_back(i, i, static_cast<double>(n));
        }
        return from_triplets(trip);
    }

    // |to><from| on the atom, identity on both modes.
    spmat atomic_projector(int from, int to) const {
        check_atom(from);
        check_atom(to);
        std::vector<triplet> trip;
        for (int np = 0; np < n_fock_; ++np)
            for (int nm = 0; nm < n_fock_; ++nm)
                trip.emplace_back(flat_index(to, np, nm), flat_index(from, np, nm), 1.0);
        return from_triplets(trip);
    }

    // Projector onto a set of atomic levels.
    spmat atomic_subspace_projector(const std::vector<int>& atoms) const {
        std::vector<triplet> trip;
        for (int a : atoms) {
            check_atom(a);
            for (int np = 0; np < n_fock_; ++np)
                for (int nm = 0; nm < n_fock_; ++nm) {
                    const int i = flat_index(a, np, nm);
                    trip.emplace_back(i, i, 1.0);
                }
        }
        return from_triplets(trip);
    }

    spmat identity() const {
        spmat id(dim_, dim_);
        id.setIdentity();
        return id;
    }

  private:
    spmat from_triplets(const std::vector<triplet>& trip) const {
        spmat m(dim_, dim_);
        m.setFromTriplets(trip.begin(), trip.end());
        m.makeCompressed();
        return m;
    }

    void check_atom(int a) const {
        if (a < 0 || a >= n_atom())
            throw validation_error("hilbert_space: atomic index out of range");
    }

    void check_label(int atom, int np, int nm) const {
        std::vector<std::string> v;
        if (atom < 0 || atom >= n_atom()) v.push_back("hilbert_space: atomic index out of range");
        if (np < 0 || np > n_max_) v.push_back("hilbert_space: plus-mode photon number out of range");
        if (nm < 0 || nm > n_max_)
            v.push_back("hilbert_space: minus-mode photon number out of range");
        if (!v.empty()) throw validation_error(std::move(v));
    }

    level_scheme scheme_;
    int n_max_;
    int n_fock_ = 0;
    int dim_ = 0;
};

inline bool is_hermitian(const mat& m, double tol = 1e-12) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline bool is_hermitian(const spmat& m, double tol = 1e-12) { return is_hermitian(mat(m), tol); }

// Throws with one message per violated density-matrix property.
inline void validate_density(const mat& rho, double tol = 1e-8) {
    std::vector<std::string> v;
    if (rho.rows() != rho.cols()) v.push_back("density matrix must be square");
    if (std::abs(rho.trace().real() - 1.0) > tol || std::abs(rho.trace().imag()) > tol)
        v.push_back("density matrix trace must be 1");
    if (!is_hermitian(rho, tol)) v.push_back("density matrix must be hermitian");
    if (v.empty()) {
        Eigen::SelfAdjointEigenSolver<mat> es(rho, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -tol)
            v.push_back("density matrix must be positive semidefinite");
    }
    if (!v.empty()) throw validation_error(std::move(v));
}

inline double atomic_population(const mat& rho, const hilbert_space& space, int atom) {
    double p = 0.0;
    for (int np = 0; np < space.n_fock(); ++np)
        for (int nm = 0; nm < space.n_fock(); ++nm) {
            const int i = space.flat_index(atom, np, nm);
            p += rho(i, i).real();
        }
    return p;
}

inline double photon_number(const mat& rho, const hilbert_space& space, pol mode) {
    double n = 0.0;
    for (int i = 0; i < space.dim(); ++i) {
        const auto l = space.label_of(i);
        n += rho(i, i).real() * ((mode == pol::sigma_plus) ? l.n_plus : l.n_minus);
    }
    return n;
}

inline double atomic_population(const vec& psi, const hilbert_space& space, int atom) {
    double p = 0.0;
    for (int np = 0; np < space.n_fock(); ++np)
        for (int nm = 0; nm < space.n_fock(); ++nm)
            p += std::norm(psi(space.flat_index(atom, np, nm)));
    return p;
}

} // namespace ioncav
