#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nsb/errors.hpp"
#include "nsb/lattice.hpp"

namespace nsb {

using Complex = std::complex<double>;

/**
 * Divergence-free velocity field u = sum_k a_k t_k e_k(x), with
 * e_k(x) = exp(i k.x) / (2 pi) so that every complex mode has unit L^2 norm
 * on [0, 2 pi)^2. One amplitude is stored per lattice mode (both members of
 * a conjugate pair are stored); real fields satisfy a_{-k} = conj(a_k).
 */
class SpectralField {
 public:
  SpectralField() = default;

  explicit SpectralField(LatticePtr lattice)
      : lattice_(std::move(lattice)), coeffs_(lattice_->size()) {}

  SpectralField(LatticePtr lattice, std::vector<Complex> coeffs)
      : lattice_(std::move(lattice)), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() != lattice_->size()) {
      throw ConfigError("coefficient count " + std::to_string(coeffs_.size()) +
                        " does not match lattice size " +
                        std::to_string(lattice_->size()));
    }
  }

  bool empty() const noexcept { return !lattice_; }
  const WavenumberLattice& lattice() const { return *lattice_; }
  const LatticePtr& lattice_ptr() const noexcept { return lattice_; }
  std::size_t size() const noexcept { return coeffs_.size(); }

  std::span<const Complex> coeffs() const noexcept { return coeffs_; }
  std::span<Complex> coeffs() noexcept { return coeffs_; }

  const Complex& operator[](std::size_t i) const { return coeffs_[i]; }
  Complex& operator[](std::size_t i) { return coeffs_[i]; }

  Complex at(Wavenumber k) const { return coeffs_[lattice_->index_of(k)]; }

  /// Sets mode k to `amplitude` and its partner -k to the conjugate.
  void set_mode(Wavenumber k, Complex amplitude) {
    const std::size_t i = lattice_->index_of(k);
    if (!lattice_->is_active(i)) {
      throw ConfigError("wavenumber " + to_string(k) +
                        " lies on the Nyquist row and is held at zero");
    }
    const std::size_t j = lattice_->conjugate(i);
    coeffs_[i] = amplitude;
    coeffs_[j] = std::conj(amplitude);
  }

  /// Replaces each pair by its conjugate-symmetric part; zeroes Nyquist modes.
  void enforce_symmetry() {
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
      if (!lattice_->is_active(i)) {
        coeffs_[i] = 0.0;
        continue;
      }
      const std::size_t j = lattice_->conjugate(i);
      if (i < j) {
        const Complex avg = 0.5 * (coeffs_[i] + std::conj(coeffs_[j]));
        coeffs_[i] = avg;
        coeffs_[j] = std::conj(avg);
      }
    }
  }

  /// max_k |a_{-k} - conj(a_k)| plus the magnitude of any Nyquist content.
  double symmetry_residual() const {
    double r = 0.0;
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
      if (!lattice_->is_active(i)) {
        r = std::max(r, std::abs(coeffs_[i]));
        continue;
      }
      r = std::max(r, std::abs(coeffs_[lattice_->conjugate(i)] -
                               std::conj(coeffs_[i])));
    }
    return r;
  }

  bool all_finite() const {
    return std::all_of(coeffs_.begin(), coeffs_.end(), [](const Complex& c) {
      return std::isfinite(c.real()) && std::isfinite(c.imag());
    });
  }

  SpectralField& operator+=(const SpectralField& other) {
    require_compatible(other);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += other.coeffs_[i];
    return *this;
  }
  SpectralField& operator-=(const SpectralField& other) {
    require_compatible(other);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= other.coeffs_[i];
    return *this;
  }
  SpectralField& operator*=(double s) {
    for (auto& c : coeffs_) c *= s;
    return *this;
  }

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(SpectralField a, double s) { return a *= s; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

  bool same_lattice(const SpectralField& other) const noexcept {
    return lattice_ && other.lattice_ && *lattice_ == *other.lattice_;
  }

  void require_compatible(const SpectralField& other) const {
    if (!same_lattice(other)) {
      throw ConfigError("spectral fields live on different lattices");
    }
  }

 private:
  LatticePtr lattice_;
  std::vector<Complex> coeffs_;
};

/// Real inner product in H: sum over all stored modes of Re(a_k conj(b_k)).
inline double inner(const SpectralField& a, const SpectralField& b) {
  a.require_compatible(b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sum += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
  }
  return sum;
}

/// H^s norm (sum_k lambda_k^s |a_k|^2)^(1/2), both members of each pair counted.
inline double sobolev_norm(const SpectralField& u, double s) {
  const auto& lat = u.lattice();
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double mag2 = std::norm(u[i]);
    if (mag2 == 0.0) continue;
    sum += (s == 0.0 ? 1.0 : std::pow(lat.eigenvalue(i), s)) * mag2;
  }
  return std::sqrt(sum);
}

inline double max_abs_diff(const SpectralField& a, const SpectralField& b) {
  a.require_compatible(b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Real field consisting of the pair (k, -k): a_k = amplitude, a_{-k} = conj.
inline SpectralField single_mode(LatticePtr lattice, Wavenumber k, Complex amplitude) {
  SpectralField f(std::move(lattice));
  f.set_mode(k, amplitude);
  return f;
}

/// Grid values of a real field on the uniform M x M collocation grid of
/// [0, 2 pi)^2. Layout: values[(c * M + i) * M + j] for component c at
/// x = 2 pi i / M, y = 2 pi j / M.
struct PhysicalField {
  int modes_per_dim = 0;
  int components = 0;
  std::vector<double> values;

  PhysicalField() = default;
  PhysicalField(int m, int comps)
      : modes_per_dim(m),
        components(comps),
        values(static_cast<std::size_t>(comps) * m * m, 0.0) {}

  std::size_t points() const noexcept {
    return static_cast<std::size_t>(modes_per_dim) * modes_per_dim;
  }
  double& operator()(int c, int i, int j) {
    return values[(static_cast<std::size_t>(c) * modes_per_dim + i) * modes_per_dim + j];
  }
  double operator()(int c, int i, int j) const {
    return values[(static_cast<std::size_t>(c) * modes_per_dim + i) * modes_per_dim + j];
  }
};

}  // namespace nsb
