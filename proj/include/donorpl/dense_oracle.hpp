#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "donorpl/constants.hpp"
#include "donorpl/spin_system.hpp"

namespace donorpl {

class EigensolverError : public std::runtime_error {
 public:
  EigensolverError(int sweeps, double off_norm)
      : std::runtime_error("Jacobi eigensolver did not converge after " + std::to_string(sweeps) +
                           " sweeps (off-diagonal norm " + std::to_string(off_norm) + ")"),
        sweeps_(sweeps) {}
  int sweeps() const { return sweeps_; }

 private:
  int sweeps_;
};

/// Full Hamiltonian in the product basis |S_z, I_z>, index
/// (S_z + 1/2) * (2I+1) + (I_z + I), built from ladder-operator elements.
inline Eigen::MatrixXd product_basis_hamiltonian(const SpinSystem& sys, double field) {
  const int n_i = sys.nuclear_multiplicity();
  const int dim = 2 * n_i;
  const double spin = sys.nuclear_spin.value();
  const double a = sys.hyperfine;
  const double zeeman_e = sys.electron_g * constants::bohr_magneton * field;
  const double zeeman_n = sys.nuclear_g * constants::nuclear_magneton * field;

  auto index = [n_i](int s_up, int i_idx) { return s_up * n_i + i_idx; };
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (int s_up = 0; s_up < 2; ++s_up) {
    const double sz = s_up ? 0.5 : -0.5;
    for (int k = 0; k < n_i; ++k) {
      const double iz = -spin + k;
      h(index(s_up, k), index(s_up, k)) = a * sz * iz + zeeman_e * sz - zeeman_n * iz;
    }
  }
  // (A/2)(S+ I- + S- I+): <+1/2, m-1| S+ I- |-1/2, m> = sqrt(I(I+1) - m(m-1))
  for (int k = 1; k < n_i; ++k) {
    const double m = -spin + k;
    const double elem = 0.5 * a * std::sqrt(spin * (spin + 1.0) - m * (m - 1.0));
    h(index(1, k - 1), index(0, k)) = elem;
    h(index(0, k), index(1, k - 1)) = elem;
  }
  return h;
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations,
/// returned ascending.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd m, int max_sweeps = 100,
                                              double tol = 1e-15) {
  const Eigen::Index n = m.rows();
  if (m.cols() != n) throw std::invalid_argument("jacobi_eigenvalues: matrix must be square");
  auto off_norm = [&m, n] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += m(i, j) * m(i, j);
    return std::sqrt(s);
  };
  const double scale = std::max(m.norm(), 1e-300);

  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    if (off_norm() <= tol * scale) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double tau = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double mkp = m(k, p);
          const double mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double mpk = m(p, k);
          const double mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
      }
    }
  }
  const double residual = off_norm();
  if (residual > tol * scale * 10.0) throw EigensolverError(sweep, residual);

  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = m(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

/// Sorted eigenvalues of the full donor Hamiltonian, for cross-checking the
/// block solution.
inline std::vector<double> dense_oracle(const SpinSystem& sys, double field) {
  if (!(field >= 0.0)) throw std::invalid_argument("magnetic field must be >= 0");
  return jacobi_eigenvalues(product_basis_hamiltonian(sys, field));
}

}  // namespace donorpl
