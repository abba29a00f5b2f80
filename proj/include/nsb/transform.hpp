#pragma once

#include <fftw3.h>

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "nsb/errors.hpp"
#include "nsb/lattice.hpp"
#include "nsb/spectral_field.hpp"

namespace nsb {

namespace detail {

// The FFTW planner is not thread-safe; execution with new-array interfaces is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Pair of unaligned in-place-capable 2D complex DFT plans for an M x M grid.
/// FFTW_FORWARD computes sum_j f_j exp(-i k.x_j); FFTW_BACKWARD the + sign.
class FftPlans {
 public:
  explicit FftPlans(int m) : m_(m) {
    std::lock_guard lock(fftw_planner_mutex());
    std::vector<std::complex<double>> scratch(static_cast<std::size_t>(m) * m);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_ = fftw_plan_dft_2d(m, m, buf, buf, FFTW_FORWARD, flags);
    backward_ = fftw_plan_dft_2d(m, m, buf, buf, FFTW_BACKWARD, flags);
    if (!forward_ || !backward_) throw NumericalError("FFTW planning failed");
  }
  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;
  ~FftPlans() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  void forward(std::vector<std::complex<double>>& data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(forward_, p, p);
  }
  void backward(std::vector<std::complex<double>>& data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(backward_, p, p);
  }
  int size() const noexcept { return m_; }

 private:
  int m_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

inline const FftPlans& plans_for(int m) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<FftPlans>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[m];
  if (!slot) slot = std::make_unique<FftPlans>(m);
  return *slot;
}

using GridBuffer = std::vector<std::complex<double>>;

inline GridBuffer make_grid(const WavenumberLattice& lat) {
  return GridBuffer(lat.grid_size());
}

// Spectral coefficient c_k of e_k = exp(i k.x) / (2 pi)  ->  grid values.
inline void spectral_to_grid(GridBuffer& buf, const FftPlans& plans) {
  plans.backward(buf);
  const double scale = 1.0 / (2.0 * std::numbers::pi);
  for (auto& v : buf) v *= scale;
}

// Grid values -> coefficients c_k = (2 pi / M^2) sum_j f_j exp(-i k.x_j).
inline void grid_to_spectral(GridBuffer& buf, const FftPlans& plans) {
  plans.forward(buf);
  const double m = plans.size();
  const double scale = 2.0 * std::numbers::pi / (m * m);
  for (auto& v : buf) v *= scale;
}

}  // namespace detail

/// Unprojected vector-valued spectral data: two complex components per mode.
struct RawSpectralField {
  LatticePtr lattice;
  std::vector<std::array<Complex, 2>> components;

  explicit RawSpectralField(LatticePtr lat)
      : lattice(std::move(lat)), components(lattice->size()) {}
};

/// Leray projection P = I - k k^T / |k|^2 expressed in the tangent basis:
/// a_k = t_k . raw_k. Nyquist modes are dropped.
inline SpectralField leray_project(const RawSpectralField& raw) {
  const auto& lat = *raw.lattice;
  if (raw.components.size() != lat.size()) {
    throw ConfigError("raw spectral data does not match lattice size");
  }
  SpectralField out(raw.lattice);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (!lat.is_active(i)) continue;
    const auto& t = lat.tangent(i);
    out[i] = t[0] * raw.components[i][0] + t[1] * raw.components[i][1];
  }
  return out;
}

/// Velocity vector coefficients t_k a_k of a divergence-free field.
inline RawSpectralField velocity_components(const SpectralField& u) {
  RawSpectralField raw(u.lattice_ptr());
  const auto& lat = u.lattice();
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const auto& t = lat.tangent(i);
    raw.components[i] = {t[0] * u[i], t[1] * u[i]};
  }
  return raw;
}

inline PhysicalField to_physical(const SpectralField& u) {
  const auto& lat = u.lattice();
  const auto& plans = detail::plans_for(lat.modes_per_dim());
  const int m = lat.modes_per_dim();
  PhysicalField out(m, 2);
  for (int c = 0; c < 2; ++c) {
    auto buf = detail::make_grid(lat);
    for (std::size_t i = 0; i < lat.size(); ++i) {
      buf[lat.grid_index(i)] = lat.tangent(i)[c] * u[i];
    }
    detail::spectral_to_grid(buf, plans);
    for (std::size_t p = 0; p < buf.size(); ++p) {
      out.values[c * buf.size() + p] = buf[p].real();
    }
  }
  return out;
}

/// Largest |Im| of the inverse transform relative to the largest |Re|; zero
/// for conjugate-symmetric coefficients up to round-off.
inline double imaginary_residual(const SpectralField& u) {
  const auto& lat = u.lattice();
  const auto& plans = detail::plans_for(lat.modes_per_dim());
  double max_re = 0.0, max_im = 0.0;
  for (int c = 0; c < 2; ++c) {
    auto buf = detail::make_grid(lat);
    for (std::size_t i = 0; i < lat.size(); ++i) {
      buf[lat.grid_index(i)] = lat.tangent(i)[c] * u[i];
    }
    detail::spectral_to_grid(buf, plans);
    for (const auto& v : buf) {
      max_re = std::max(max_re, std::abs(v.real()));
      max_im = std::max(max_im, std::abs(v.imag()));
    }
  }
  return max_re > 0.0 ? max_im / max_re : max_im;
}

/// Grid velocity -> Leray-projected spectral field on `lattice`.
inline SpectralField to_spectral(const PhysicalField& field, LatticePtr lattice) {
  const auto& lat = *lattice;
  if (field.modes_per_dim != lat.modes_per_dim() || field.components != 2 ||
      field.values.size() != 2 * lat.grid_size()) {
    throw ConfigError("physical field of size " +
                      std::to_string(field.modes_per_dim) + " (" +
                      std::to_string(field.components) +
                      " components) does not match a " +
                      std::to_string(lat.modes_per_dim()) + "^2 velocity grid");
  }
  const auto& plans = detail::plans_for(lat.modes_per_dim());
  RawSpectralField raw(lattice);
  for (int c = 0; c < 2; ++c) {
    auto buf = detail::make_grid(lat);
    for (std::size_t p = 0; p < buf.size(); ++p) {
      buf[p] = field.values[c * buf.size() + p];
    }
    detail::grid_to_spectral(buf, plans);
    for (std::size_t i = 0; i < lat.size(); ++i) {
      raw.components[i][c] = buf[lat.grid_index(i)];
    }
  }
  auto out = leray_project(raw);
  out.enforce_symmetry();
  return out;
}

/// L^2 norm by grid quadrature, (4 pi^2 / M^2) sum |u(x_j)|^2.
inline double grid_l2_norm(const PhysicalField& f) {
  double sum = 0.0;
  for (double v : f.values) sum += v * v;
  const double m = f.modes_per_dim;
  return std::sqrt(4.0 * std::numbers::pi * std::numbers::pi / (m * m) * sum);
}

/**
 * Projected advection term P[(u . grad) v], evaluated pseudo-spectrally.
 *
 * Inputs are truncated to |k_i| <= dealias_cutoff() before the products are
 * formed and the result is truncated to the same set, so the retained part is
 * free of aliasing. B(u, u) is returned with a positive sign; the solver
 * applies the minus sign of the evolution equation.
 */
inline SpectralField nonlinear_term(const SpectralField& u, const SpectralField& v) {
  u.require_compatible(v);
  const auto& lat = u.lattice();
  const auto& plans = detail::plans_for(lat.modes_per_dim());
  const std::size_t n = lat.grid_size();
  const Complex I(0.0, 1.0);

  // u1, u2, d1 v1, d2 v1, d1 v2, d2 v2 on the grid.
  std::array<detail::GridBuffer, 6> grids;
  for (auto& g : grids) g.assign(n, 0.0);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (!lat.survives_dealiasing(i)) continue;
    const auto& t = lat.tangent(i);
    const auto& k = lat.wavenumber(i);
    const std::size_t g = lat.grid_index(i);
    grids[0][g] = t[0] * u[i];
    grids[1][g] = t[1] * u[i];
    const Complex v1 = t[0] * v[i];
    const Complex v2 = t[1] * v[i];
    grids[2][g] = I * static_cast<double>(k.k1) * v1;
    grids[3][g] = I * static_cast<double>(k.k2) * v1;
    grids[4][g] = I * static_cast<double>(k.k1) * v2;
    grids[5][g] = I * static_cast<double>(k.k2) * v2;
  }
  for (auto& g : grids) detail::spectral_to_grid(g, plans);

  detail::GridBuffer n1(n), n2(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double u1 = grids[0][p].real();
    const double u2 = grids[1][p].real();
    n1[p] = u1 * grids[2][p].real() + u2 * grids[3][p].real();
    n2[p] = u1 * grids[4][p].real() + u2 * grids[5][p].real();
  }
  detail::grid_to_spectral(n1, plans);
  detail::grid_to_spectral(n2, plans);

  RawSpectralField raw(u.lattice_ptr());
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (!lat.survives_dealiasing(i)) continue;
    const std::size_t g = lat.grid_index(i);
    raw.components[i] = {n1[g], n2[g]};
  }
  auto out = leray_project(raw);
  out.enforce_symmetry();
  return out;
}

/// B(u, u) = P[(u . grad) u].
inline SpectralField nonlinear_term(const SpectralField& u) { return nonlinear_term(u, u); }

inline Complex vorticity_coefficient(const WavenumberLattice& lat, std::size_t i,
                                     Complex amplitude) {
  const auto& k = lat.wavenumber(i);
  const auto& t = lat.tangent(i);
  return Complex(0.0, k.k1 * t[1] - k.k2 * t[0]) * amplitude;
}

/**
 * Scalar vorticity w = d1 u2 - d2 u1 on the grid. Per mode
 * w_k = i (k1 t2 - k2 t1) a_k, i.e. i |k| a_k on the positive half plane and
 * -i |k| a_k on the other half. Taylor-Green (cos x sin y, -sin x cos y) maps
 * to -2 cos x cos y under this convention.
 */
inline PhysicalField vorticity(const SpectralField& u) {
  const auto& lat = u.lattice();
  const auto& plans = detail::plans_for(lat.modes_per_dim());
  auto buf = detail::make_grid(lat);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    buf[lat.grid_index(i)] = vorticity_coefficient(lat, i, u[i]);
  }
  detail::spectral_to_grid(buf, plans);
  PhysicalField out(lat.modes_per_dim(), 1);
  for (std::size_t p = 0; p < buf.size(); ++p) out.values[p] = buf[p].real();
  return out;
}

}  // namespace nsb
