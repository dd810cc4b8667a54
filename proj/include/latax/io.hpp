#pragma once

// On-disk formats: dataset CSV, axis-bank / world JSON, PGM (P5) and f64raw images.
// Writes go to a temporary sibling file that is renamed into place.

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "latax/axes.hpp"
#include "latax/dataset.hpp"
#include "latax/error.hpp"
#include "latax/image.hpp"
#include "latax/toyworld.hpp"

namespace latax {

using json = nlohmann::json;

inline constexpr int kBankFormatVersion = 1;
inline constexpr int kWorldFormatVersion = 1;
inline constexpr std::array<char, 8> kF64RawMagic = {'F', '6', '4', 'R', 'A', 'W', '0', '1'};

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
  return std::move(ss).str();
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("error while writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
  }
}

// ---------------------------------------------------------------------------
// Number formatting

/// 17 significant digits: parses back to the identical double.
inline std::string format_real(double x) {
  std::array<char, 40> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x,
                                 std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

inline std::optional<double> parse_real(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------
// Dataset CSV:  id,z_0,...,z_{p-1},<attribute names...>

inline std::string dataset_to_csv(const LatentDataset& ds) {
  std::string out = "id";
  for (std::size_t j = 0; j < ds.dim(); ++j) out += ",z_" + std::to_string(j);
  for (const auto& a : ds.attributes()) out += "," + a;
  out += "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += std::to_string(ds.ids()[i]);
    for (const double v : ds.latents().row(i)) {
      out += ',';
      out += format_real(v);
    }
    for (const double v : ds.labels().row(i)) {
      out += ',';
      out += format_real(v);
    }
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    std::string_view line = text.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = pos + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace detail

inline LatentDataset dataset_from_csv(std::string_view text) {
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw ParseError("dataset csv: empty input");
  const auto header = detail::split_commas(lines[0]);
  if (header.empty() || header[0] != "id") throw ParseError("dataset csv: header must start with 'id'");
  std::size_t p = 0;
  while (1 + p < header.size() && header[1 + p] == "z_" + std::to_string(p)) ++p;
  if (p == 0) throw ParseError("dataset csv: header has no latent columns z_0..");
  std::vector<std::string> attrs;
  for (std::size_t c = 1 + p; c < header.size(); ++c) {
    const std::string name(header[c]);
    if (name.empty()) throw ParseError("dataset csv: empty column name at column " + std::to_string(c));
    if (name.rfind("z_", 0) == 0)
      throw ParseError("dataset csv: malformed header, latent column '" + name + "' out of order");
    attrs.push_back(name);
  }
  if (attrs.empty()) throw ParseError("dataset csv: header declares no attributes");
  if (lines.size() < 2) throw ParseError("dataset csv: no samples");

  const std::size_t n = lines.size() - 1;
  const std::size_t ncol = header.size();
  std::vector<std::int64_t> ids(n);
  std::vector<double> z(n * p);
  std::vector<double> y(n * attrs.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = i + 1;  // 1-based data row
    const auto fields = detail::split_commas(lines[i + 1]);
    if (fields.size() != ncol) {
      const std::string missing =
          fields.size() < ncol ? std::string(header[fields.size()]) : std::string("(extra field)");
      throw ParseError("dataset csv: row " + std::to_string(row) + " has " +
                       std::to_string(fields.size()) + " fields, expected " + std::to_string(ncol) +
                       " (column '" + missing + "')");
    }
    std::int64_t id = 0;
    const auto idres = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), id);
    if (idres.ec != std::errc() || idres.ptr != fields[0].data() + fields[0].size())
      throw ParseError("dataset csv: row " + std::to_string(row) + ", column 'id': bad integer");
    ids[i] = id;
    for (std::size_t c = 1; c < ncol; ++c) {
      const auto v = parse_real(fields[c]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError("dataset csv: row " + std::to_string(row) + ", column '" +
                         std::string(header[c]) + "': " +
                         (v ? "non-finite value" : "not a number") + " '" + std::string(fields[c]) + "'");
      }
      if (c <= p) z[i * p + (c - 1)] = *v;
      else y[i * attrs.size() + (c - 1 - p)] = *v;
    }
  }
  const std::size_t m = attrs.size();
  return LatentDataset(std::move(ids), Mat(n, p, std::move(z)), std::move(attrs), Mat(n, m, std::move(y)));
}

inline void write_dataset(const std::filesystem::path& path, const LatentDataset& ds) {
  write_file_atomic(path, dataset_to_csv(ds));
}

inline LatentDataset read_dataset(const std::filesystem::path& path) {
  return dataset_from_csv(read_file(path));
}

// ---------------------------------------------------------------------------
// JSON helpers

namespace detail {

inline void require_keys(const json& j, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const auto a : allowed) ok = ok || key == a;
    if (!ok) throw VersionError(where + ": unknown field '" + key + "' (newer format?)");
  }
  for (const auto a : allowed) {
    if (!j.contains(std::string(a))) throw ParseError(where + ": missing field '" + std::string(a) + "'");
  }
}

inline json vec_to_json(const Vec& v) { return json(v.data()); }

inline Vec vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of numbers");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw ParseError(where + ": expected an array of numbers");
    v.push_back(x.get<double>());
  }
  return Vec(std::move(v));
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": bad field '" + key + "': " + e.what());
  }
}

inline json parse_json(std::string_view text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(where + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Axis bank JSON

inline json bank_to_json(const AxisBank& bank) {
  json base = json::array();
  for (const auto& a : bank.base_raw()) {
    base.push_back({{"name", a.name},
                    {"direction", detail::vec_to_json(a.direction)},
                    {"bias", a.bias},
                    {"rss", a.rss},
                    {"r_squared", a.r_squared},
                    {"n_samples", a.n_samples},
                    {"rank_deficient", a.rank_deficient}});
  }
  json ortho = json::array();
  for (const auto& v : bank.base_ortho()) ortho.push_back(detail::vec_to_json(v));
  json exts = json::array();
  for (const auto& e : bank.extensions()) {
    exts.push_back({{"name", e.name},
                    {"mode", std::string(to_string(e.mode))},
                    {"weights", e.weights},
                    {"d_in", detail::vec_to_json(e.d_in)},
                    {"d_out", detail::vec_to_json(e.d_out)}});
  }
  return json{{"format_version", kBankFormatVersion},
              {"dim", bank.dim()},
              {"base_axes", std::move(base)},
              {"base_ortho", std::move(ortho)},
              {"extensions", std::move(exts)}};
}

inline AxisBank bank_from_json(const json& j) {
  const std::string where = "axis bank";
  if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer())
    throw VersionError(where + ": missing format_version");
  const int version = j["format_version"].get<int>();
  if (version != kBankFormatVersion) {
    throw VersionError(where + ": unsupported format_version " + std::to_string(version) +
                       " (this build reads " + std::to_string(kBankFormatVersion) + ")");
  }
  detail::require_keys(j, {"format_version", "dim", "base_axes", "base_ortho", "extensions"}, where);
  const auto dim = detail::get_field<std::size_t>(j, "dim", where);

  std::vector<AttributeAxis> base;
  for (const auto& a : j.at("base_axes")) {
    detail::require_keys(a, {"name", "direction", "bias", "rss", "r_squared", "n_samples",
                             "rank_deficient"},
                         where + " base axis");
    const auto name = detail::get_field<std::string>(a, "name", where);
    base.push_back(AttributeAxis{name,
                                 detail::vec_from_json(a.at("direction"), where + " axis '" + name + "'"),
                                 detail::get_field<double>(a, "bias", where),
                                 detail::get_field<double>(a, "rss", where),
                                 detail::get_field<double>(a, "r_squared", where),
                                 detail::get_field<std::size_t>(a, "n_samples", where),
                                 detail::get_field<bool>(a, "rank_deficient", where)});
  }
  std::vector<Vec> ortho;
  for (const auto& v : j.at("base_ortho")) ortho.push_back(detail::vec_from_json(v, where + " base_ortho"));
  std::vector<Extension> exts;
  for (const auto& e : j.at("extensions")) {
    detail::require_keys(e, {"name", "mode", "weights", "d_in", "d_out"}, where + " extension");
    const auto name = detail::get_field<std::string>(e, "name", where);
    exts.push_back(Extension{name,
                             detail::vec_from_json(e.at("d_in"), where + " extension '" + name + "'"),
                             detail::vec_from_json(e.at("d_out"), where + " extension '" + name + "'"),
                             parse_extension_mode(detail::get_field<std::string>(e, "mode", where)),
                             detail::get_field<std::vector<double>>(e, "weights", where)});
  }
  return AxisBank(dim, std::move(base), std::move(ortho), std::move(exts));
}

inline void write_axis_bank(const std::filesystem::path& path, const AxisBank& bank) {
  write_file_atomic(path, bank_to_json(bank).dump(2) + "\n");
}

inline AxisBank read_axis_bank(const std::filesystem::path& path) {
  return bank_from_json(detail::parse_json(read_file(path), "axis bank"));
}

// ---------------------------------------------------------------------------
// World JSON: the construction parameters (the world is rebuilt from them).

inline json world_to_json(const ToyWorldSpec& world) {
  const WorldParams& p = world.params;
  return json{{"format_version", kWorldFormatVersion},
              {"p", p.p},
              {"k", p.k},
              {"rho", p.rho},
              {"noise_sigma", p.noise_sigma},
              {"img_h", p.img_h},
              {"img_w", p.img_w},
              {"seed", p.seed},
              {"names", world.names}};
}

inline ToyWorldSpec world_from_json(const json& j) {
  const std::string where = "world";
  if (!j.is_object() || !j.contains("format_version") ||
      j["format_version"] != kWorldFormatVersion) {
    throw VersionError(where + ": unsupported or missing format_version");
  }
  detail::require_keys(j, {"format_version", "p", "k", "rho", "noise_sigma", "img_h", "img_w", "seed",
                           "names"},
                       where);
  WorldParams p;
  p.p = detail::get_field<std::size_t>(j, "p", where);
  p.k = detail::get_field<std::size_t>(j, "k", where);
  p.rho = detail::get_field<double>(j, "rho", where);
  p.noise_sigma = detail::get_field<double>(j, "noise_sigma", where);
  p.img_h = detail::get_field<std::size_t>(j, "img_h", where);
  p.img_w = detail::get_field<std::size_t>(j, "img_w", where);
  p.seed = detail::get_field<std::uint64_t>(j, "seed", where);
  p.names = detail::get_field<std::vector<std::string>>(j, "names", where);
  return make_world(p);
}

inline void write_world(const std::filesystem::path& path, const ToyWorldSpec& world) {
  write_file_atomic(path, world_to_json(world).dump(2) + "\n");
}

inline ToyWorldSpec read_world(const std::filesystem::path& path) {
  return world_from_json(detail::parse_json(read_file(path), "world"));
}

// ---------------------------------------------------------------------------
// Images

enum class ImageFormat { kPgm8, kF64Raw };

inline ImageFormat parse_image_format(std::string_view s) {
  if (s == "pgm8") return ImageFormat::kPgm8;
  if (s == "f64raw") return ImageFormat::kF64Raw;
  throw ValidationError("unknown image format '" + std::string(s) + "' (expected pgm8 or f64raw)");
}

/// x in [0, 1] -> 0..255, ties rounded to even.
inline std::uint8_t quantize8(double x) {
  const double v = std::clamp(x, 0.0, 1.0) * 255.0;
  double r = std::floor(v);
  const double frac = v - r;
  if (frac > 0.5 || (frac == 0.5 && std::fmod(r, 2.0) != 0.0)) r += 1.0;
  return static_cast<std::uint8_t>(r);
}

inline std::string encode_pgm8(const ImageGrid& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.reserve(out.size() + img.size());
  for (const double v : img.pixels()) out.push_back(static_cast<char>(quantize8(v)));
  return out;
}

namespace detail {

inline void put_u64le(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline std::uint64_t get_u64le(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}

}  // namespace detail

inline std::string encode_f64raw(const ImageGrid& img) {
  std::string out(kF64RawMagic.begin(), kF64RawMagic.end());
  detail::put_u64le(out, img.height());
  detail::put_u64le(out, img.width());
  for (const double v : img.pixels()) detail::put_u64le(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline ImageGrid decode_f64raw(std::string_view bytes) {
  if (bytes.size() < 24 || bytes.substr(0, 8) != std::string_view(kF64RawMagic.data(), 8))
    throw ParseError("f64raw: bad magic");
  const std::uint64_t h = detail::get_u64le(bytes, 8);
  const std::uint64_t w = detail::get_u64le(bytes, 16);
  if (h == 0 || w == 0 || h > (1u << 20) || w > (1u << 20) || bytes.size() != 24 + 8 * h * w)
    throw ParseError("f64raw: size does not match header");
  std::vector<double> px(h * w);
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = std::bit_cast<double>(detail::get_u64le(bytes, 24 + 8 * i));
  return ImageGrid(h, w, std::move(px));
}

/// Binary PGM (P5), maxval up to 65535; pixels scaled to [0, 1].
inline ImageGrid decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string_view {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P5") throw ParseError("pgm: only binary P5 is supported");
  auto number = [&](const char* what) {
    const auto t = next_token();
    std::size_t v = 0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size() || v == 0)
      throw ParseError(std::string("pgm: bad ") + what);
    return v;
  };
  const std::size_t w = number("width");
  const std::size_t h = number("height");
  const std::size_t maxval = number("maxval");
  if (maxval > 65535) throw ParseError("pgm: maxval above 65535");
  ++pos;  // single whitespace before the raster
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  if (bytes.size() < pos + h * w * bpp) throw ParseError("pgm: truncated raster");
  std::vector<double> px(h * w);
  for (std::size_t i = 0; i < px.size(); ++i) {
    std::size_t v = static_cast<unsigned char>(bytes[pos + i * bpp]);
    if (bpp == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos + i * bpp + 1]);
    px[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return ImageGrid(h, w, std::move(px));
}

inline void write_image(const std::filesystem::path& path, const ImageGrid& img, ImageFormat fmt) {
  write_file_atomic(path, fmt == ImageFormat::kPgm8 ? encode_pgm8(img) : encode_f64raw(img));
}

/// Reads either format, chosen by the leading magic bytes.
inline ImageGrid read_image(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 8 && std::string_view(bytes).substr(0, 8) ==
                               std::string_view(kF64RawMagic.data(), kF64RawMagic.size()))
    return decode_f64raw(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_pgm(bytes);
  throw ParseError("'" + path.string() + "': unrecognized image format");
}

}  // namespace latax
