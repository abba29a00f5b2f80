#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "nsb/errors.hpp"
#include "nsb/lattice.hpp"
#include "nsb/spectral_field.hpp"

namespace nsb {

/// Decimal text that round-trips a double (17 significant digits).
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Ten significant digits, for messages.
inline std::string format_brief(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Exact hexadecimal float text, used by checkpoints.
inline std::string format_hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_double(const std::string& token, const std::string& context) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (token.empty() || end != token.c_str() + token.size()) {
    throw IoError(context + ": expected a number, got '" + token + "'");
  }
  return v;
}

/**
 * Field snapshot format:
 *
 *   nsb-field v1 <M>
 *   k1 k2 re im        (one line per lattice mode, lexicographic in (k1, k2))
 */
inline void write_field(std::ostream& os, const SpectralField& u) {
  const auto& lat = u.lattice();
  os << "nsb-field v1 " << lat.modes_per_dim() << '\n';
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const auto& k = lat.wavenumber(i);
    os << k.k1 << ' ' << k.k2 << ' ' << format_double(u[i].real()) << ' '
       << format_double(u[i].imag()) << '\n';
  }
}

inline SpectralField read_field(std::istream& is, const std::string& source = "field") {
  std::string magic, version;
  int m = 0;
  if (!(is >> magic >> version >> m) || magic != "nsb-field" || version != "v1") {
    throw IoError(source + ": missing 'nsb-field v1 <M>' header");
  }
  LatticePtr lattice;
  try {
    lattice = build_lattice(m);
  } catch (const ConfigError& e) {
    throw IoError(source + ": " + e.what());
  }
  SpectralField u(lattice);
  for (std::size_t i = 0; i < lattice->size(); ++i) {
    int k1 = 0, k2 = 0;
    std::string re, im;
    if (!(is >> k1 >> k2 >> re >> im)) {
      throw IoError(source + ": truncated at record " + std::to_string(i));
    }
    const auto& expected = lattice->wavenumber(i);
    if (k1 != expected.k1 || k2 != expected.k2) {
      throw IoError(source + ": record " + std::to_string(i) + " has wavenumber " +
                    to_string({k1, k2}) + ", expected " + to_string(expected));
    }
    u[i] = Complex(parse_double(re, source), parse_double(im, source));
  }
  return u;
}

inline void write_field_file(const std::filesystem::path& path, const SpectralField& u) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_field(os, u);
  if (!os) throw IoError("failed writing " + path.string());
}

inline SpectralField read_field_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return read_field(is, path.string());
}

}  // namespace nsb
