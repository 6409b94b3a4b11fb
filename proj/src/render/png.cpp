#include "ecglab/render/png.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <zlib.h>

#include <json.hpp>

#include "ecglab/error.hpp"
#include "ecglab/render/render.hpp"

namespace ecglab {

namespace {

constexpr std::array<std::uint8_t, 8> kSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a);
  const int pb = std::abs(p - b);
  const int pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const EcgImage& image) {
  const auto w = static_cast<std::size_t>(image.width);
  const auto h = static_cast<std::size_t>(image.height);
  if (w == 0 || h == 0 || image.pixels.size() != w * h * 3) {
    throw ParameterError("encode_png: image buffer does not match its dimensions");
  }
  std::vector<std::uint8_t> raw;
  raw.reserve(h * (w * 3 + 1));
  for (std::size_t y = 0; y < h; ++y) {
    raw.push_back(0);
    const auto* row = image.pixels.data() + y * w * 3;
    raw.insert(raw.end(), row, row + w * 3);
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw IoError("encode_png: deflate failed");
  }
  packed.resize(packed_size);

  std::vector<std::uint8_t> out(kSignature.begin(), kSignature.end());
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(w));
  put_u32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit, RGB, deflate, filter set 0, no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

EcgImage decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || !std::equal(kSignature.begin(), kSignature.end(), bytes.begin())) {
    throw ParseError("png: bad signature");
  }
  std::size_t pos = 8;
  std::uint32_t w = 0, h = 0;
  std::vector<std::uint8_t> idat;
  bool seen_end = false;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = get_u32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw ParseError("png: truncated chunk");
    const std::string type(reinterpret_cast<const char*>(&bytes[pos + 4]), 4);
    const std::uint8_t* data = &bytes[pos + 8];
    const uLong crc = crc32(0L, &bytes[pos + 4], len + 4);
    if (crc != get_u32(data + len)) throw ChecksumError("png: CRC mismatch in " + type + " chunk");
    if (type == "IHDR") {
      if (len != 13) throw ParseError("png: bad IHDR");
      w = get_u32(data);
      h = get_u32(data + 4);
      if (data[8] != 8 || data[9] != 2 || data[12] != 0) {
        throw ParseError("png: only 8-bit RGB non-interlaced images are supported");
      }
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      seen_end = true;
      break;
    }
    pos += 12 + len;
  }
  if (!seen_end || w == 0 || h == 0) throw ParseError("png: missing IHDR/IEND");

  const std::size_t stride = std::size_t{w} * 3;
  std::vector<std::uint8_t> raw(std::size_t{h} * (stride + 1));
  uLongf raw_size = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_size != raw.size()) {
    throw ParseError("png: corrupt image data");
  }

  EcgImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.pixels.resize(std::size_t{h} * stride);
  for (std::size_t y = 0; y < h; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* in = &raw[y * (stride + 1) + 1];
    std::uint8_t* out = &img.pixels[y * stride];
    const std::uint8_t* prev = y ? &img.pixels[(y - 1) * stride] : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= 3 ? out[i - 3] : 0;
      const int b = prev ? prev[i] : 0;
      const int c = (prev && i >= 3) ? prev[i - 3] : 0;
      int v = in[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw ParseError("png: unknown row filter");
      }
      out[i] = static_cast<std::uint8_t>(v);
    }
  }
  return img;
}

void write_png(const EcgImage& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

EcgImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

namespace {

nlohmann::json box_json(const PixelBox& b) { return {b.x0, b.y0, b.x1, b.y1}; }

PixelBox box_from(const nlohmann::json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

Lead lead_from(const std::string& s) {
  for (std::size_t i = 0; i < kNumLeads; ++i) {
    if (kLeadNames[i] == s) return static_cast<Lead>(i);
  }
  throw ParseError("sidecar: unknown lead \"" + s + "\"");
}

}  // namespace

void write_sidecar(const EcgImage& image, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["config_hash"] = image.meta.config_hash;
  j["width"] = image.width;
  j["height"] = image.height;
  j["px_per_mm"] = image.meta.px_per_mm;
  j["paper_speed"] = image.meta.paper_speed;
  j["gain"] = image.meta.gain;
  auto& panels = j["panels"] = nlohmann::ordered_json::array();
  for (const auto& p : image.meta.panels) {
    panels.push_back({{"id", p.id},
                      {"lead", name(p.lead)},
                      {"box", box_json(p.box)},
                      {"time_window", {p.t_start, p.t_end}},
                      {"baseline_y", p.baseline_y},
                      {"label_box", box_json(p.label_box)}});
  }
  auto& trace = j["augmentation"] = nlohmann::ordered_json::array();
  for (const auto& s : image.meta.augment_trace) {
    trace.push_back({{"transform", s.transform}, {"applied", s.applied}, {"params", s.params}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError(path.string() + ": write failed");
}

RenderMeta read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  try {
    const auto j = nlohmann::json::parse(in);
    RenderMeta m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.px_per_mm = j.at("px_per_mm").get<int>();
    m.paper_speed = j.at("paper_speed").get<double>();
    m.gain = j.at("gain").get<double>();
    for (const auto& p : j.at("panels")) {
      PanelInfo info;
      info.id = p.at("id").get<std::string>();
      info.lead = lead_from(p.at("lead").get<std::string>());
      info.box = box_from(p.at("box"));
      info.t_start = p.at("time_window").at(0).get<double>();
      info.t_end = p.at("time_window").at(1).get<double>();
      info.baseline_y = p.at("baseline_y").get<int>();
      info.label_box = box_from(p.at("label_box"));
      m.panels.push_back(std::move(info));
    }
    for (const auto& s : j.at("augmentation")) {
      m.augment_trace.push_back({s.at("transform").get<std::string>(), s.at("applied").get<bool>(),
                                 s.at("params").get<std::vector<double>>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": malformed sidecar: " + e.what());
  }
}

}  // namespace ecglab
