#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssdu/core.hpp"
#include "ssdu/encoding.hpp"
#include "ssdu/sampling.hpp"

namespace ssdu {

/// One acquired slice with everything needed to train on or reconstruct it.
struct Scan {
  std::string scan_id;
  CoilKSpace kspace;  // acquired, zero outside mask
  SamplingMask mask;
  std::optional<SplitSpec> split;
  CoilSensitivities sens;
  std::optional<ComplexImage> ref_image;
  double noise_sigma = 0.0;

  SenseOperator omega_operator() const { return SenseOperator(sens, mask.picked); }
};

/// Shepp-Logan style ellipses with randomized geometry and intensities,
/// multiplied by a smooth low-order polynomial phase; max magnitude is 1.
ComplexImage make_phantom(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Gaussian-lobe coil profiles around the FOV perimeter with smooth phase,
/// SOS-normalized at every pixel.
CoilSensitivities make_coilmaps(std::size_t rows, std::size_t cols, std::size_t ncoils, std::uint64_t seed);

/// E x plus i.i.d. complex Gaussian noise (std noise_sigma per real component) on masked entries.
CoilKSpace simulate_acquisition(const ComplexImage& x, const CoilSensitivities& sens, const BoolGrid& mask,
                                double noise_sigma, std::uint64_t seed);

struct CohortSpec {
  std::size_t scans = 20;
  std::size_t size = 64;
  std::size_t coils = 4;
  double noise_sigma = 0.01;
  std::size_t accel = 4;
  std::size_t acs = 8;
  std::uint64_t seed = 0;
  /// Prefix for scan identifiers ("scan_0", ...).
  std::string id_prefix = "scan_";
};

/// Deterministic synthetic cohort; scan k uses sub-seeds derived from (seed, k).
std::vector<Scan> make_cohort(const CohortSpec& spec);

/// Attaches a Theta/Lambda split to every scan; scan k uses seed derive_seed(seed, k).
void assign_splits(std::vector<Scan>& scans, double rho, SplitScheme scheme, std::uint64_t seed,
                   const SplitOptions& opts = {});

}  // namespace ssdu
