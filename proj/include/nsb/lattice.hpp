#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "nsb/errors.hpp"

namespace nsb {

struct Wavenumber {
  int k1 = 0;
  int k2 = 0;

  auto operator<=>(const Wavenumber&) const = default;
};

inline std::string to_string(const Wavenumber& k) {
  return "(" + std::to_string(k.k1) + "," + std::to_string(k.k2) + ")";
}

/**
 * Truncated Fourier lattice on the 2*pi-periodic torus.
 *
 * The retained wavenumbers are the FFT index set k_i in [-M/2, M/2 - 1]
 * without the origin, so there are M*M - 1 modes, ordered lexicographically
 * by (k1, k2). The Stokes eigenvalue of mode k is |k|^2.
 *
 * Conjugate partners are taken modulo M. Modes with a component equal to
 * -M/2 (the Nyquist row and column) have no divergence-free real partner on
 * the grid; they are carried for indexing but every field holds them at zero
 * (see `is_active`).
 *
 * Each mode's velocity direction is t_k = s_k * k_perp / |k| with
 * k_perp = (-k2, k1) and s_k = +1 on the positive half plane (k1 > 0, or
 * k1 == 0 and k2 > 0), -1 otherwise. Since t_{-k} = t_k, a real velocity
 * field has coefficients with a_{-k} = conj(a_k).
 */
class WavenumberLattice {
 public:
  explicit WavenumberLattice(int modes_per_dim) : m_(modes_per_dim) {
    if (modes_per_dim < 4 || modes_per_dim % 2 != 0) {
      throw ConfigError("modes_per_dim must be even and >= 4, got " +
                        std::to_string(modes_per_dim));
    }
    const int half = m_ / 2;
    modes_.reserve(static_cast<std::size_t>(m_ * m_ - 1));
    for (int k1 = -half; k1 < half; ++k1) {
      for (int k2 = -half; k2 < half; ++k2) {
        if (k1 == 0 && k2 == 0) continue;
        Mode mode;
        mode.k = {k1, k2};
        mode.eigenvalue = static_cast<double>(k1 * k1 + k2 * k2);
        const double norm = std::sqrt(mode.eigenvalue);
        mode.positive = k1 > 0 || (k1 == 0 && k2 > 0);
        const double sign = mode.positive ? 1.0 : -1.0;
        mode.tangent = {-sign * k2 / norm, sign * k1 / norm};
        mode.nyquist = (k1 == -half || k2 == -half);
        mode.grid_index = static_cast<std::size_t>(wrap(k1) * m_ + wrap(k2));
        modes_.push_back(mode);
      }
    }
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      const Wavenumber k = modes_[i].k;
      modes_[i].conjugate = *find({wrap_signed(-k.k1), wrap_signed(-k.k2)});
    }
    dealias_cutoff_ = (m_ - 1) / 3;
  }

  int modes_per_dim() const noexcept { return m_; }
  std::size_t size() const noexcept { return modes_.size(); }
  /// Number of physical grid points, M * M.
  std::size_t grid_size() const noexcept {
    return static_cast<std::size_t>(m_) * static_cast<std::size_t>(m_);
  }

  const Wavenumber& wavenumber(std::size_t i) const { return modes_.at(i).k; }
  double eigenvalue(std::size_t i) const { return modes_[i].eigenvalue; }
  const std::array<double, 2>& tangent(std::size_t i) const {
    return modes_[i].tangent;
  }
  std::size_t conjugate(std::size_t i) const { return modes_[i].conjugate; }
  bool is_positive_half(std::size_t i) const { return modes_[i].positive; }
  bool is_nyquist(std::size_t i) const { return modes_[i].nyquist; }
  bool is_active(std::size_t i) const { return !modes_[i].nyquist; }
  /// Flattened FFT array offset (k1 mod M) * M + (k2 mod M).
  std::size_t grid_index(std::size_t i) const { return modes_[i].grid_index; }

  /// Largest |k_i| kept by the 2/3-rule when forming quadratic products.
  int dealias_cutoff() const noexcept { return dealias_cutoff_; }
  bool survives_dealiasing(std::size_t i) const {
    const Wavenumber& k = modes_[i].k;
    return std::abs(k.k1) <= dealias_cutoff_ && std::abs(k.k2) <= dealias_cutoff_;
  }

  double min_eigenvalue() const noexcept { return 1.0; }
  double max_eigenvalue() const noexcept {
    return 2.0 * (m_ / 2) * (m_ / 2);
  }

  std::optional<std::size_t> find(Wavenumber k) const {
    const int half = m_ / 2;
    if (k.k1 < -half || k.k1 >= half || k.k2 < -half || k.k2 >= half) {
      return std::nullopt;
    }
    if (k.k1 == 0 && k.k2 == 0) return std::nullopt;
    std::size_t flat =
        static_cast<std::size_t>((k.k1 + half) * m_ + (k.k2 + half));
    const std::size_t origin = static_cast<std::size_t>(half * m_ + half);
    if (flat > origin) --flat;
    return flat;
  }

  std::size_t index_of(Wavenumber k) const {
    auto idx = find(k);
    if (!idx) {
      throw ConfigError("wavenumber " + to_string(k) + " is not in the " +
                        std::to_string(m_) + "x" + std::to_string(m_) +
                        " lattice");
    }
    return *idx;
  }

  bool operator==(const WavenumberLattice& other) const noexcept {
    return m_ == other.m_;
  }

 private:
  struct Mode {
    Wavenumber k;
    double eigenvalue = 0.0;
    std::array<double, 2> tangent{};
    std::size_t conjugate = 0;
    std::size_t grid_index = 0;
    bool positive = false;
    bool nyquist = false;
  };

  int wrap(int k) const { return ((k % m_) + m_) % m_; }
  int wrap_signed(int k) const {
    int w = wrap(k);
    return w >= m_ / 2 ? w - m_ : w;
  }

  int m_;
  int dealias_cutoff_ = 0;
  std::vector<Mode> modes_;
};

using LatticePtr = std::shared_ptr<const WavenumberLattice>;

/// Shared, cached lattice for a grid size. Lattices are immutable.
inline LatticePtr build_lattice(int modes_per_dim) {
  static std::mutex mutex;
  static std::map<int, LatticePtr> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(modes_per_dim);
  if (it != cache.end()) return it->second;
  auto lattice = std::make_shared<const WavenumberLattice>(modes_per_dim);
  cache.emplace(modes_per_dim, lattice);
  return lattice;
}

}  // namespace nsb
