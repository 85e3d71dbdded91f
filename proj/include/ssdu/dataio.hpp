#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ssdu/core.hpp"
#include "ssdu/encoding.hpp"
#include "ssdu/network.hpp"
#include "ssdu/phantom.hpp"
#include "ssdu/sampling.hpp"

namespace ssdu {

// ---------------------------------------------------------------------------
// KSRD blobs. Layout (all little-endian):
//   "KSRD" | u32 version (=1) | u32 dtype | u32 ndims | u64 dims[ndims] | payload
// dtype 1: complex, (re, im) float64 pairs; 2: float64; 3: uint8.

enum class DType : std::uint32_t { complex128 = 1, float64 = 2, uint8 = 3 };

std::string_view to_string(DType d) noexcept;
std::size_t element_size(DType d) noexcept;

inline constexpr std::uint32_t kBlobVersion = 1;

struct Blob {
  DType dtype = DType::float64;
  std::vector<std::uint64_t> dims;
  std::vector<std::byte> payload;  // little-endian element bytes

  std::size_t count() const;
  bool operator==(const Blob&) const = default;
};

std::vector<std::byte> encode_blob(const Blob& b);
/// Throws FormatError (with byte offset) on bad magic, version, dtype, or length.
Blob decode_blob(std::span<const std::byte> bytes);

void write_blob(const std::filesystem::path& path, const Blob& b);
Blob read_blob(const std::filesystem::path& path);

// Conversions between blobs and library objects.
Blob to_blob(std::span<const cplx> values, std::vector<std::uint64_t> dims);
Blob to_blob(const ComplexImage& x);
Blob to_blob(const KSpaceGrid& k);
Blob to_blob(const CoilKSpace& y);           // dims (ncoils, rows, cols)
Blob to_blob(const CoilSensitivities& s);    // dims (ncoils, rows, cols)
Blob to_blob(const BoolGrid& m);             // uint8, dims (rows, cols)
Blob to_blob(const SplitSpec& s);            // uint8, dims (2, rows, cols): Theta then Lambda
Blob to_blob(std::span<const double> v);     // float64, dims (n)

std::vector<cplx> complex_values(const Blob& b);
std::vector<double> real_values(const Blob& b);
std::vector<std::uint8_t> byte_values(const Blob& b);

ComplexImage image_from_blob(const Blob& b);
KSpaceGrid kspace_from_blob(const Blob& b);
CoilKSpace coil_kspace_from_blob(const Blob& b);
CoilSensitivities sens_from_blob(const Blob& b);
BoolGrid mask_from_blob(const Blob& b);
/// Theta/Lambda planes only; rho, scheme and seed come from the manifest.
std::pair<BoolGrid, BoolGrid> split_planes_from_blob(const Blob& b);

// ---------------------------------------------------------------------------
// JSON side data.

nlohmann::json to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const nlohmann::json& j);

/// Trained weights: <stem>.ksrd holds the flat vector, <stem>.json the NetConfig.
void save_params(const std::filesystem::path& stem, const NetworkParams& p, const nlohmann::json& extra = {});
NetworkParams load_params(const std::filesystem::path& stem);

// ---------------------------------------------------------------------------
// Datasets: <dir>/manifest.json plus <dir>/scan_<k>/{kspace,mask,split,sens,ref}.ksrd.

struct Dataset {
  std::string name;
  std::uint64_t seed = 0;
  nlohmann::json generator;  // parameters used to synthesize the cohort
  std::vector<Scan> scans;
};

/// Writes every scan (split.ksrd only when a split is attached) and the manifest.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
/// Loads every scan and checks manifest shapes against blob headers.
Dataset read_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Image export: binary PGM (P5), 8-bit, magnitude min-max scaled per image.

std::vector<unsigned char> encode_pgm(const ComplexImage& x);
void write_pgm(const std::filesystem::path& path, const ComplexImage& x);

}  // namespace ssdu
