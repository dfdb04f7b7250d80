#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>

#include "specsplit/error.hpp"
#include "specsplit/ssanet.hpp"

namespace specsplit::ssanet {
namespace {

constexpr char kMagic[4] = {'S', 'S', 'A', 'P'};

void append_f32le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

double read_f32le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SSANetConfig& config,
                     const ParamSet& params) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "SSAP";
  manifest["dtype"] = "f32le";
  manifest["config"] = config_to_json(config);
  auto tensors = nlohmann::ordered_json::array();
  std::string payload;
  params.for_each_conv([&](const std::string& name, const nn::Conv2d& c) {
    tensors.push_back({{"name", name + ".weight"},
                       {"shape", {c.out_channels, c.in_channels, c.kernel, c.kernel}}});
    tensors.push_back({{"name", name + ".bias"}, {"shape", {c.out_channels}}});
    for (double v : c.weight) {
      if (!std::isfinite(v)) throw DataError("non-finite weight in " + name);
      append_f32le(payload, v);
    }
    for (double v : c.bias) append_f32le(payload, v);
  });
  manifest["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 4);
  out.put('\n');
  const auto header = manifest.dump();
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.put('\n');
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::pair<SSANetConfig, ParamSet> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 5 || !std::equal(kMagic, kMagic + 4, bytes.begin()) || bytes[4] != '\n') {
    throw FormatError(path.string() + ": missing SSAP magic");
  }
  const auto eol = std::find(bytes.begin() + 5, bytes.end(), '\n');
  if (eol == bytes.end()) throw FormatError(path.string() + ": unterminated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 5, eol);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad manifest: " + e.what());
  }
  SSANetConfig config = config_from_json(manifest.at("config"));
  ParamSet params = zero_params(config);

  const auto* p = reinterpret_cast<const unsigned char*>(&*eol) + 1;
  const auto* end = reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size();
  const auto& tensors = manifest.at("tensors");
  std::size_t t = 0;
  auto take = [&](const std::string& name, std::vector<double>& dst) {
    if (t >= tensors.size() || tensors[t].at("name").get<std::string>() != name) {
      throw FormatError(path.string() + ": manifest does not list " + name + " in order");
    }
    ++t;
    if (static_cast<std::size_t>(end - p) < 4 * dst.size()) {
      throw TruncationError(path.string() + ": payload ends inside " + name);
    }
    for (auto& v : dst) {
      v = read_f32le(p);
      p += 4;
      if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite value in " + name);
    }
  };
  params.for_each_conv([&](const std::string& name, nn::Conv2d& c) {
    take(name + ".weight", c.weight);
    take(name + ".bias", c.bias);
  });
  if (t != tensors.size() || p != end) throw FormatError(path.string() + ": unexpected trailing tensors");
  return {std::move(config), std::move(params)};
}

}  // namespace specsplit::ssanet
