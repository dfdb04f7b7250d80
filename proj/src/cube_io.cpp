#include <png.h>

#include <algorithm>
#include <array>
#include <csetjmp>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include "json.hpp"
#include "specsplit/error.hpp"
#include "specsplit/hypercube.hpp"

namespace specsplit {
namespace {

constexpr std::array<char, 4> kMagic = {'H', 'S', 'C', '1'};

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_f32le(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

float get_f32le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::size_t header_dim(const nlohmann::json& header, const char* key) {
  if (!header.contains(key) || !header[key].is_number_integer() || header[key].get<long long>() <= 0) {
    throw FormatError(std::string("header field '") + key + "' missing or not a positive integer");
  }
  return header[key].get<std::size_t>();
}

struct PngCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  bool writing = false;
  ~PngCloser() {
    if (!png) return;
    if (writing) {
      png_destroy_write_struct(&png, info ? &info : nullptr);
    } else {
      png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
  }
};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
};

// libpng reports errors by longjmp; the message is parked here until the
// setjmp site turns it into an exception.
struct PngErrorSlot {
  char message[256] = {};
};

void png_fail(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<PngErrorSlot*>(png_get_error_ptr(png));
  if (slot) std::snprintf(slot->message, sizeof slot->message, "%s", msg);
  png_longjmp(png, 1);
}
void png_warn(png_structp, png_const_charp) {}

GrayImage read_gray_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(path.string() + ": not a PNG file");
  }
  PngErrorSlot slot;
  PngCloser guard;
  guard.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &slot, png_fail, png_warn);
  if (!guard.png) throw FormatError("libpng initialisation failed");
  guard.info = png_create_info_struct(guard.png);
  std::vector<unsigned char> buf;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(guard.png))) {
    throw FormatError(path.string() + ": " + slot.message);
  }
  png_init_io(guard.png, fp.get());
  png_set_sig_bytes(guard.png, 8);
  png_read_info(guard.png, guard.info);

  const auto width = png_get_image_width(guard.png, guard.info);
  const auto height = png_get_image_height(guard.png, guard.info);
  const int depth = png_get_bit_depth(guard.png, guard.info);
  const int color = png_get_color_type(guard.png, guard.info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    throw FormatError(path.string() + ": only grayscale PNG bands are supported");
  }
  if (depth != 8 && depth != 16) {
    throw FormatError(path.string() + ": bit depth " + std::to_string(depth) + " unsupported");
  }
  const std::size_t row_bytes = png_get_rowbytes(guard.png, guard.info);
  buf.resize(row_bytes * height);
  rows.resize(height);
  for (std::size_t r = 0; r < height; ++r) rows[r] = buf.data() + r * row_bytes;
  png_read_image(guard.png, rows.data());

  GrayImage img{height, width, std::vector<double>(static_cast<std::size_t>(height) * width)};
  const double peak = depth == 16 ? 65535.0 : 255.0;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const unsigned raw = depth == 16 ? (unsigned{rows[r][2 * c]} << 8) | rows[r][2 * c + 1]
                                       : unsigned{rows[r][c]};
      img.values[r * width + c] = raw / peak;
    }
  }
  return img;
}

// Row encoding kept out of the frame that calls setjmp.
void write_rows(png_structp png, std::span<const double> plane, std::size_t height,
                std::size_t width, int bit_depth) {
  const std::size_t bpp = bit_depth == 16 ? 2 : 1;
  const double peak = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<unsigned char> row(width * bpp);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double v = std::clamp(plane[r * width + c], 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(v * peak));
      if (bpp == 2) {
        row[2 * c] = static_cast<unsigned char>(q >> 8);
        row[2 * c + 1] = static_cast<unsigned char>(q & 0xFF);
      } else {
        row[c] = static_cast<unsigned char>(q);
      }
    }
    png_write_row(png, row.data());
  }
}

}  // namespace

void write_cube(const HyperCube& cube, const std::filesystem::path& path) {
  cube.validate();
  nlohmann::ordered_json header;
  header["height"] = cube.height();
  header["width"] = cube.width();
  header["bands"] = cube.bands();
  header["dtype"] = "f32le";
  if (cube.wavelengths_nm()) header["wavelengths_nm"] = *cube.wavelengths_nm();

  std::string bytes(kMagic.begin(), kMagic.end());
  bytes.push_back('\n');
  bytes += header.dump();
  bytes.push_back('\n');
  bytes.reserve(bytes.size() + 4 * cube.size());
  for (double v : cube.data()) put_f32le(bytes, static_cast<float>(v));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

HyperCube read_cube(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < 5 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()) ||
      bytes[4] != '\n') {
    throw FormatError(path.string() + ": missing HSC1 magic");
  }
  const auto eol = std::find(bytes.begin() + 5, bytes.end(), '\n');
  if (eol == bytes.end()) throw FormatError(path.string() + ": unterminated header line");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 5, eol);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad header JSON: " + e.what());
  }
  if (!header.is_object()) throw FormatError(path.string() + ": header is not a JSON object");
  if (header.value("dtype", std::string{}) != "f32le") {
    throw FormatError(path.string() + ": unsupported dtype");
  }
  const auto height = header_dim(header, "height");
  const auto width = header_dim(header, "width");
  const auto bands = header_dim(header, "bands");

  const std::size_t offset = static_cast<std::size_t>(eol - bytes.begin()) + 1;
  const std::size_t count = height * width * bands;
  const std::size_t payload = bytes.size() - offset;
  if (payload < 4 * count) {
    throw TruncationError(path.string() + ": payload holds " + std::to_string(payload) +
                          " bytes, header requires " + std::to_string(4 * count));
  }
  if (payload > 4 * count) throw FormatError(path.string() + ": trailing bytes after payload");

  std::vector<double> data(count);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  for (std::size_t i = 0; i < count; ++i) {
    const float v = get_f32le(p + 4 * i);
    if (!std::isfinite(v)) {
      throw DataError(path.string() + ": non-finite sample at index " + std::to_string(i));
    }
    data[i] = v;
  }
  HyperCube cube(height, width, bands, std::move(data));
  if (header.contains("wavelengths_nm")) {
    try {
      cube.set_wavelengths_nm(header["wavelengths_nm"].get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": bad wavelengths_nm: " + e.what());
    }
  }
  return cube;
}

HyperCube import_band_stack(std::span<const std::filesystem::path> paths) {
  if (paths.empty()) throw ArgumentError("import needs at least one band image");
  std::vector<GrayImage> planes;
  planes.reserve(paths.size());
  for (const auto& p : paths) {
    planes.push_back(read_gray_png(p));
    if (planes.back().height != planes.front().height ||
        planes.back().width != planes.front().width) {
      throw ShapeError(p.string() + ": band dimensions differ from " + paths.front().string());
    }
  }
  HyperCube cube(planes.front().height, planes.front().width, planes.size());
  for (std::size_t b = 0; b < planes.size(); ++b) {
    std::copy(planes[b].values.begin(), planes[b].values.end(), cube.band(b).begin());
  }
  return cube;
}

void write_gray_png(const std::filesystem::path& path, std::span<const double> plane,
                    std::size_t height, std::size_t width, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ArgumentError("PNG bit depth must be 8 or 16");
  if (plane.size() != height * width) throw ShapeError("plane size does not match dimensions");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  PngErrorSlot slot;
  PngCloser guard;
  guard.writing = true;
  guard.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &slot, png_fail, png_warn);
  if (!guard.png) throw IoError("libpng initialisation failed");
  guard.info = png_create_info_struct(guard.png);
  if (setjmp(png_jmpbuf(guard.png))) {
    throw IoError(path.string() + ": " + slot.message);
  }
  png_init_io(guard.png, fp.get());
  png_set_IHDR(guard.png, guard.info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), bit_depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(guard.png, guard.info);

  write_rows(guard.png, plane, height, width, bit_depth);
  png_write_end(guard.png, nullptr);
}

}  // namespace specsplit
