#pragma once

#include <limits>
#include <string>
#include <vector>

#include "taskmri/forward_model.hpp"
#include "taskmri/mask.hpp"

namespace taskmri {

enum class Direction { Vertical, Horizontal };

Direction parse_direction(const std::string& name);
std::string to_string(Direction direction);

inline constexpr double kUnboundedFwhm = std::numeric_limits<double>::infinity();

/// Magnitude samples along a grid line through the PSF main lobe, rolled so
/// the peak sits at index size()/2.
struct PsfProfile {
  Direction direction = Direction::Vertical;
  std::vector<double> samples;
  size_t peak_index = 0;
};

/// Inverse unitary transform of the mask, DC centred. Throws InvalidInput for
/// an all-zero mask.
ComplexGrid compute_psf(const SamplingMask& mask);

/// Line through the global magnitude peak (the peak nearest the grid centre
/// when several are tied) along `direction`.
PsfProfile extract_profile(const ComplexGrid& psf, Direction direction);

/// Distance between the half-maximum crossings nearest the peak, each located
/// by linear interpolation between the bracketing samples. kUnboundedFwhm when
/// one side never drops to half maximum.
double fwhm(const PsfProfile& profile);
double fwhm(const std::vector<double>& samples, size_t peak_index);

/// FWHM of a mask's PSF along a direction.
double mask_fwhm(const SamplingMask& mask, Direction direction);

/// (fwhm(m1) - fwhm(m2)) / fwhm(m1); positive when m2 is sharper.
double compare_masks(const SamplingMask& m1, const SamplingMask& m2, Direction direction);

/// Fraction of a mask's non-ACS samples whose column lies in the central
/// vertical k-space band |kx| < band_width / 2 (band_width columns in total).
double vertical_band_fraction(const SamplingMask& mask, const torch::Tensor& acs_indicator, int64_t band_width);

}  // namespace taskmri
