#include "ssdu/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace ssdu {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kFixedHeader = 16;  // magic + version + dtype + ndims
constexpr std::uint32_t kMaxDims = 8;

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
}
std::uint32_t get_u32(const std::byte* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}
std::uint64_t get_u64(const std::byte* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}
void put_f64(std::byte* dst, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) dst[i] = static_cast<std::byte>((v >> (8 * i)) & 0xFF);
}
double get_f64(const std::byte* p) { return std::bit_cast<double>(get_u64(p)); }

std::size_t product(const std::vector<std::uint64_t>& dims, std::size_t offset) {
  std::size_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d)
      throw FormatError("dimension product overflows", offset);
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void require_dtype(const Blob& b, DType want, const char* what) {
  if (b.dtype != want)
    throw ShapeError(std::string(what) + " needs dtype " + std::string(to_string(want)) + ", blob has " +
                     std::string(to_string(b.dtype)));
}

void require_ndims(const Blob& b, std::size_t n, const char* what) {
  if (b.dims.size() != n)
    throw ShapeError(std::string(what) + " needs " + std::to_string(n) + " dimensions, blob has " +
                     std::to_string(b.dims.size()));
}

std::vector<std::uint64_t> dims_of(const json& j) { return j.get<std::vector<std::uint64_t>>(); }

json file_entry(const std::string& rel, const Blob& b) {
  return json{{"path", rel}, {"dtype", std::string(to_string(b.dtype))}, {"dims", b.dims}};
}

// Reads a blob listed in the manifest and checks it against the recorded header fields.
Blob read_listed(const fs::path& dir, const json& entry) {
  const fs::path path = dir / entry.at("path").get<std::string>();
  Blob b = read_blob(path);
  if (std::string(to_string(b.dtype)) != entry.at("dtype").get<std::string>() || b.dims != dims_of(entry.at("dims")))
    throw ConfigError("manifest entry for " + path.string() + " disagrees with the file header");
  return b;
}

}  // namespace

std::string_view to_string(DType d) noexcept {
  switch (d) {
    case DType::complex128:
      return "complex128";
    case DType::float64:
      return "float64";
    case DType::uint8:
      return "uint8";
  }
  return "unknown";
}

std::size_t element_size(DType d) noexcept {
  switch (d) {
    case DType::complex128:
      return 16;
    case DType::float64:
      return 8;
    case DType::uint8:
      return 1;
  }
  return 0;
}

std::size_t Blob::count() const { return product(dims, 0); }

std::vector<std::byte> encode_blob(const Blob& b) {
  if (b.dims.size() > kMaxDims) throw ShapeError("too many dimensions for a blob");
  if (b.payload.size() != b.count() * element_size(b.dtype))
    throw ShapeError("blob payload length does not match its dimensions");
  std::vector<std::byte> out;
  out.reserve(kFixedHeader + 8 * b.dims.size() + b.payload.size());
  for (char c : {'K', 'S', 'R', 'D'}) out.push_back(static_cast<std::byte>(c));
  put_u32(out, kBlobVersion);
  put_u32(out, static_cast<std::uint32_t>(b.dtype));
  put_u32(out, static_cast<std::uint32_t>(b.dims.size()));
  for (auto d : b.dims) put_u64(out, d);
  out.insert(out.end(), b.payload.begin(), b.payload.end());
  return out;
}

namespace {

// prefix names the source (a file path) in error messages.
Blob decode(std::span<const std::byte> bytes, const std::string& prefix) {
  auto fail = [&](const std::string& msg, std::size_t off) { return FormatError(prefix + msg, off); };
  const std::size_t n = bytes.size();
  if (n < kFixedHeader)
    throw fail("truncated header: expected at least " + std::to_string(kFixedHeader) + " bytes, found " +
                          std::to_string(n),
                      n);
  if (std::memcmp(bytes.data(), "KSRD", 4) != 0) throw fail("bad magic, expected \"KSRD\"", 0);
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kBlobVersion)
    throw fail("unsupported version " + std::to_string(version) + ", expected " + std::to_string(kBlobVersion),
                      4);
  const std::uint32_t code = get_u32(bytes.data() + 8);
  if (code < 1 || code > 3) throw fail("unknown dtype code " + std::to_string(code), 8);
  const std::uint32_t ndims = get_u32(bytes.data() + 12);
  if (ndims > kMaxDims) throw fail("unreasonable dimension count " + std::to_string(ndims), 12);

  const std::size_t header = kFixedHeader + 8 * std::size_t{ndims};
  if (n < header)
    throw fail("truncated header: expected " + std::to_string(header) + " bytes, found " + std::to_string(n),
                      n);
  Blob b;
  b.dtype = static_cast<DType>(code);
  for (std::uint32_t i = 0; i < ndims; ++i) b.dims.push_back(get_u64(bytes.data() + kFixedHeader + 8 * i));

  const std::size_t count = product(b.dims, kFixedHeader);
  const std::size_t esize = element_size(b.dtype);
  if (count > std::numeric_limits<std::size_t>::max() / esize) throw fail("payload size overflows", header);
  const std::size_t expected = count * esize;
  const std::size_t available = n - header;
  if (available < expected)
    throw fail("truncated payload: expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(available),
                      n);
  if (available > expected)
    throw fail(std::to_string(available - expected) + " trailing bytes after payload", header + expected);
  b.payload.assign(bytes.begin() + static_cast<long>(header), bytes.end());
  return b;
}

}  // namespace

Blob decode_blob(std::span<const std::byte> bytes) { return decode(bytes, ""); }

void write_blob(const fs::path& path, const Blob& b) {
  const auto bytes = encode_blob(b);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + path.string());
}

Blob read_blob(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(std::as_bytes(std::span<const char>(raw)), path.string() + ": ");
}

// ---------------------------------------------------------------------------

Blob to_blob(std::span<const cplx> values, std::vector<std::uint64_t> dims) {
  Blob b{DType::complex128, std::move(dims), {}};
  if (b.count() != values.size()) throw ShapeError("complex blob dimensions do not match the value count");
  b.payload.resize(values.size() * 16);
  for (std::size_t i = 0; i < values.size(); ++i) {
    put_f64(b.payload.data() + 16 * i, values[i].real());
    put_f64(b.payload.data() + 16 * i + 8, values[i].imag());
  }
  return b;
}

Blob to_blob(const ComplexImage& x) { return to_blob(x.span(), {x.rows(), x.cols()}); }
Blob to_blob(const KSpaceGrid& k) { return to_blob(k.span(), {k.rows(), k.cols()}); }

Blob to_blob(const CoilKSpace& y) {
  if (y.empty()) throw ShapeError("empty coil stack");
  std::vector<cplx> all;
  for (const auto& g : y) {
    if (!g.same_shape(y.front().rows(), y.front().cols())) throw ShapeError("coil grids differ in shape");
    all.insert(all.end(), g.values().begin(), g.values().end());
  }
  return to_blob(all, {y.size(), y.front().rows(), y.front().cols()});
}

Blob to_blob(const CoilSensitivities& s) {
  std::vector<cplx> all;
  for (const auto& m : s.maps()) all.insert(all.end(), m.values().begin(), m.values().end());
  return to_blob(all, {s.ncoils(), s.rows(), s.cols()});
}

Blob to_blob(const BoolGrid& m) {
  Blob b{DType::uint8, {m.rows(), m.cols()}, {}};
  b.payload.resize(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) b.payload[i] = static_cast<std::byte>(m[i] ? 1 : 0);
  return b;
}

Blob to_blob(const SplitSpec& s) {
  if (s.theta.rows() != s.lambda.rows() || s.theta.cols() != s.lambda.cols())
    throw ShapeError("Theta and Lambda differ in shape");
  Blob b{DType::uint8, {2, s.theta.rows(), s.theta.cols()}, {}};
  const std::size_t n = s.theta.size();
  b.payload.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    b.payload[i] = static_cast<std::byte>(s.theta[i] ? 1 : 0);
    b.payload[n + i] = static_cast<std::byte>(s.lambda[i] ? 1 : 0);
  }
  return b;
}

Blob to_blob(std::span<const double> v) {
  Blob b{DType::float64, {v.size()}, {}};
  b.payload.resize(8 * v.size());
  for (std::size_t i = 0; i < v.size(); ++i) put_f64(b.payload.data() + 8 * i, v[i]);
  return b;
}

std::vector<cplx> complex_values(const Blob& b) {
  require_dtype(b, DType::complex128, "complex data");
  std::vector<cplx> out(b.count());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = {get_f64(b.payload.data() + 16 * i), get_f64(b.payload.data() + 16 * i + 8)};
  return out;
}

std::vector<double> real_values(const Blob& b) {
  require_dtype(b, DType::float64, "real data");
  std::vector<double> out(b.count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_f64(b.payload.data() + 8 * i);
  return out;
}

std::vector<std::uint8_t> byte_values(const Blob& b) {
  require_dtype(b, DType::uint8, "mask data");
  std::vector<std::uint8_t> out(b.payload.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(b.payload[i]);
    if (out[i] > 1) throw ShapeError("mask bytes must be 0 or 1");
  }
  return out;
}

ComplexImage image_from_blob(const Blob& b) {
  require_ndims(b, 2, "image");
  return ComplexImage(b.dims[0], b.dims[1], complex_values(b));
}

KSpaceGrid kspace_from_blob(const Blob& b) {
  require_ndims(b, 2, "k-space grid");
  return KSpaceGrid(b.dims[0], b.dims[1], complex_values(b));
}

CoilKSpace coil_kspace_from_blob(const Blob& b) {
  require_ndims(b, 3, "coil k-space stack");
  const auto v = complex_values(b);
  const std::size_t plane = b.dims[1] * b.dims[2];
  CoilKSpace y;
  for (std::size_t c = 0; c < b.dims[0]; ++c)
    y.emplace_back(b.dims[1], b.dims[2], std::vector<cplx>(v.begin() + static_cast<long>(c * plane),
                                                           v.begin() + static_cast<long>((c + 1) * plane)));
  return y;
}

CoilSensitivities sens_from_blob(const Blob& b) {
  require_ndims(b, 3, "coil sensitivity stack");
  const auto v = complex_values(b);
  const std::size_t plane = b.dims[1] * b.dims[2];
  std::vector<ComplexImage> maps;
  for (std::size_t c = 0; c < b.dims[0]; ++c)
    maps.emplace_back(b.dims[1], b.dims[2], std::vector<cplx>(v.begin() + static_cast<long>(c * plane),
                                                              v.begin() + static_cast<long>((c + 1) * plane)));
  return CoilSensitivities(std::move(maps));
}

BoolGrid mask_from_blob(const Blob& b) {
  require_ndims(b, 2, "mask");
  return BoolGrid(b.dims[0], b.dims[1], byte_values(b));
}

std::pair<BoolGrid, BoolGrid> split_planes_from_blob(const Blob& b) {
  require_ndims(b, 3, "split");
  if (b.dims[0] != 2) throw ShapeError("split blob must hold exactly two planes");
  const auto v = byte_values(b);
  const std::size_t n = b.dims[1] * b.dims[2];
  return {BoolGrid(b.dims[1], b.dims[2], std::vector<std::uint8_t>(v.begin(), v.begin() + static_cast<long>(n))),
          BoolGrid(b.dims[1], b.dims[2], std::vector<std::uint8_t>(v.begin() + static_cast<long>(n), v.end()))};
}

// ---------------------------------------------------------------------------

json to_json(const NetConfig& cfg) {
  return json{{"unrolls", cfg.unrolls},         {"cg_iters", cfg.cg_iters}, {"channels", cfg.channels},
              {"res_blocks", cfg.res_blocks},   {"kernel", cfg.kernel},     {"scale", cfg.scale},
              {"initial_mu", cfg.initial_mu},   {"zero_init_output", cfg.zero_init_output}};
}

NetConfig net_config_from_json(const json& j) {
  NetConfig cfg;
  try {
    cfg.unrolls = j.at("unrolls").get<std::size_t>();
    cfg.cg_iters = j.at("cg_iters").get<std::size_t>();
    cfg.channels = j.at("channels").get<std::size_t>();
    cfg.res_blocks = j.at("res_blocks").get<std::size_t>();
    cfg.kernel = j.at("kernel").get<std::size_t>();
    cfg.scale = j.at("scale").get<double>();
    cfg.initial_mu = j.at("initial_mu").get<double>();
    cfg.zero_init_output = j.value("zero_init_output", cfg.zero_init_output);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_params(const fs::path& stem, const NetworkParams& p, const json& extra) {
  fs::path blob = stem, meta = stem;
  blob += ".ksrd";
  meta += ".json";
  write_blob(blob, to_blob(p.flat()));
  json j = extra.is_object() ? extra : json::object();
  j["net"] = to_json(p.config());
  j["param_count"] = p.size();
  j["mu"] = p.mu();
  j["weights"] = file_entry(blob.filename().string(), to_blob(p.flat()));
  std::ofstream f(meta);
  if (!f) throw Error("cannot open " + meta.string() + " for writing");
  f << j.dump(2) << '\n';
}

NetworkParams load_params(const fs::path& stem) {
  fs::path blob = stem, meta = stem;
  blob += ".ksrd";
  meta += ".json";
  std::ifstream f(meta);
  if (!f) throw Error("cannot open " + meta.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(meta.string() + ": " + e.what());
  }
  const NetConfig cfg = net_config_from_json(j.at("net"));
  const auto v = real_values(read_blob(blob));
  NetworkParams p(cfg);
  if (v.size() != p.size())
    throw ShapeError("checkpoint holds " + std::to_string(v.size()) + " values, config needs " +
                     std::to_string(p.size()));
  std::copy(v.begin(), v.end(), p.flat().begin());
  return p;
}

// ---------------------------------------------------------------------------

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  json scans = json::array();
  for (std::size_t k = 0; k < ds.scans.size(); ++k) {
    const Scan& s = ds.scans[k];
    const std::string sub = "scan_" + std::to_string(k);
    fs::create_directories(dir / sub);
    json files;
    auto put = [&](const std::string& name, const Blob& b) {
      const std::string rel = sub + "/" + name + ".ksrd";
      write_blob(dir / rel, b);
      files[name] = file_entry(rel, b);
    };
    put("kspace", to_blob(s.kspace));
    put("mask", to_blob(s.mask.picked));
    put("sens", to_blob(s.sens));
    if (s.ref_image) put("ref", to_blob(*s.ref_image));
    const fs::path split_path = dir / sub / "split.ksrd";
    if (s.split)
      put("split", to_blob(*s.split));
    else if (fs::exists(split_path))
      fs::remove(split_path);

    json mask{{"accel", s.mask.accel}, {"acs_cols", nullptr}};
    if (s.mask.acs_cols) mask["acs_cols"] = {s.mask.acs_cols->first, s.mask.acs_cols->second};
    json split = nullptr;
    if (s.split)
      split = json{{"rho", s.split->rho}, {"scheme", std::string(to_string(s.split->scheme))}, {"seed", s.split->seed}};
    scans.push_back(json{{"scan_id", s.scan_id},
                         {"dir", sub},
                         {"rows", s.mask.rows()},
                         {"cols", s.mask.cols()},
                         {"ncoils", s.sens.ncoils()},
                         {"noise_sigma", s.noise_sigma},
                         {"mask", mask},
                         {"split", split},
                         {"files", files}});
  }
  const json manifest{{"format", "KSRD"},         {"format_version", kBlobVersion}, {"name", ds.name},
                      {"seed", ds.seed},          {"scan_count", ds.scans.size()},  {"generator", ds.generator},
                      {"scans", scans}};
  std::ofstream f(dir / "manifest.json");
  if (!f) throw Error("cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << '\n';
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream f(mpath);
  if (!f) throw Error("cannot open " + mpath.string());
  json m;
  try {
    m = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(mpath.string() + ": " + e.what());
  }
  Dataset ds;
  try {
    ds.name = m.at("name").get<std::string>();
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.generator = m.value("generator", json::object());
    const auto& list = m.at("scans");
    if (list.size() != m.at("scan_count").get<std::size_t>())
      throw ConfigError(mpath.string() + ": scan_count disagrees with the scan list");
    for (const auto& e : list) {
      Scan s;
      s.scan_id = e.at("scan_id").get<std::string>();
      s.noise_sigma = e.at("noise_sigma").get<double>();
      const auto& files = e.at("files");
      s.kspace = coil_kspace_from_blob(read_listed(dir, files.at("kspace")));
      s.mask.picked = mask_from_blob(read_listed(dir, files.at("mask")));
      s.mask.accel = e.at("mask").at("accel").get<std::size_t>();
      if (!e.at("mask").at("acs_cols").is_null()) {
        const auto acs = e.at("mask").at("acs_cols").get<std::vector<std::size_t>>();
        if (acs.size() != 2) throw ConfigError("acs_cols must be a pair");
        s.mask.acs_cols = std::make_pair(acs[0], acs[1]);
      }
      s.sens = sens_from_blob(read_listed(dir, files.at("sens")));
      if (files.contains("ref")) s.ref_image = image_from_blob(read_listed(dir, files.at("ref")));
      if (!e.at("split").is_null()) {
        if (!files.contains("split")) throw ConfigError("scan " + s.scan_id + " lists split metadata but no file");
        auto [theta, lambda] = split_planes_from_blob(read_listed(dir, files.at("split")));
        SplitSpec sp;
        sp.theta = std::move(theta);
        sp.lambda = std::move(lambda);
        sp.rho = e.at("split").at("rho").get<double>();
        sp.scheme = parse_split_scheme(e.at("split").at("scheme").get<std::string>());
        sp.seed = e.at("split").at("seed").get<std::uint64_t>();
        s.split = std::move(sp);
      }
      if (s.sens.rows() != s.mask.rows() || s.sens.cols() != s.mask.cols() || s.kspace.size() != s.sens.ncoils() ||
          e.at("rows").get<std::size_t>() != s.mask.rows() || e.at("cols").get<std::size_t>() != s.mask.cols())
        throw ConfigError("scan " + s.scan_id + ": shapes in manifest and files do not agree");
      ds.scans.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ConfigError(mpath.string() + ": " + e.what());
  }
  return ds;
}

// ---------------------------------------------------------------------------

std::vector<unsigned char> encode_pgm(const ComplexImage& x) {
  if (x.size() == 0) throw ShapeError("cannot export an empty image");
  std::vector<double> mag(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mag[i] = std::abs(x[i]);
  const auto [lo, hi] = std::minmax_element(mag.begin(), mag.end());
  const double a = *lo, span = *hi - *lo;
  const std::string header = "P5\n" + std::to_string(x.cols()) + " " + std::to_string(x.rows()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  for (double m : mag) {
    const double v = span > 0.0 ? 255.0 * (m - a) / span : 0.0;
    out.push_back(static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L)));
  }
  return out;
}

void write_pgm(const fs::path& path, const ComplexImage& x) {
  const auto bytes = encode_pgm(x);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + path.string());
}

}  // namespace ssdu
