#pragma once

// Model bundles and the DDRW weight container.
//
// Layout of a .ddrw file:
//   bytes 0..7    magic "DDRW0001"
//   bytes 8..11   little-endian uint32 header length H
//   bytes 12..    H bytes of UTF-8 JSON:
//                   arch_id, hyper{...}, input_window,
//                   normalization{mean[6], std[6]},
//                   tensors[{name, shape, byte_offset, byte_length}], ...
//   then          concatenated little-endian float32 blobs; byte_offset is
//                 relative to the first byte after the header.
// The header is written compact with sorted keys. Unknown top-level keys are
// preserved so a bundle can be re-saved without losing provenance fields.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddr/nn/tensor.hpp"

namespace ddr::nn {

enum class ArchId { ResNet1dVel, ResNet1dDir, TfEncHeading };

inline std::string_view to_string(ArchId a) {
  switch (a) {
    case ArchId::ResNet1dVel: return "resnet1d_vel";
    case ArchId::ResNet1dDir: return "resnet1d_dir";
    case ArchId::TfEncHeading: return "tfenc_heading";
  }
  return "unknown";
}

inline ArchId parse_arch(std::string_view s) {
  if (s == "resnet1d_vel") return ArchId::ResNet1dVel;
  if (s == "resnet1d_dir") return ArchId::ResNet1dDir;
  if (s == "tfenc_heading") return ArchId::TfEncHeading;
  throw Error(ErrorCode::UnsupportedArch, std::string(s));
}

inline bool is_resnet(ArchId a) { return a == ArchId::ResNet1dVel || a == ArchId::ResNet1dDir; }

inline constexpr std::size_t kInputChannels = 6;

struct ResNetHyper {
  std::size_t base_channels = 64;  // stage widths base, 2*base, 4*base, 8*base
  std::array<std::size_t, 4> blocks{2, 2, 2, 2};
  std::size_t stem_kernel = 7;
  std::size_t block_kernel = 3;
  std::size_t head_hidden = 128;
  double bn_eps = 1e-5;
};

struct TransformerHyper {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t layers = 3;
  std::size_t ffn = 128;
  std::size_t embed_kernel = 3;
  std::size_t head_hidden = 64;
  double ln_eps = 1e-5;
  double dropout = 0.1;  // training only
};

struct Normalization {
  std::array<float, kInputChannels> mean{};
  std::array<float, kInputChannels> std{1, 1, 1, 1, 1, 1};
};

struct ModelBundle {
  ArchId arch = ArchId::ResNet1dVel;
  ResNetHyper resnet;
  TransformerHyper transformer;
  std::size_t input_window = 0;
  Normalization normalization;
  std::vector<std::pair<std::string, Tensor>> tensors;  // container order
  nlohmann::json extra = nlohmann::json::object();      // unrecognized header keys

  const Tensor* find(std::string_view name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return &t;
    }
    return nullptr;
  }
  Tensor* find(std::string_view name) {
    for (auto& [n, t] : tensors) {
      if (n == name) return &t;
    }
    return nullptr;
  }
  const Tensor& get(std::string_view name) const {
    const Tensor* t = find(name);
    if (!t) throw Error(ErrorCode::MissingTensor, std::string(name));
    return *t;
  }
  Tensor& get(std::string_view name) {
    Tensor* t = find(name);
    if (!t) throw Error(ErrorCode::MissingTensor, std::string(name));
    return *t;
  }

  std::size_t output_dim() const { return arch == ArchId::ResNet1dDir ? 2 : 1; }
};

// ---------------------------------------------------------------------------
// Architecture graph: the tensors a bundle must carry and their shapes.

namespace detail {
inline std::size_t conv_out(std::size_t len, std::size_t k, std::size_t stride, std::size_t pad) {
  if (len + 2 * pad < k) throw Error(ErrorCode::ShapeMismatch, "input window too short for architecture");
  return (len + 2 * pad - k) / stride + 1;
}

inline void add_bn(std::vector<std::pair<std::string, Shape>>& out, const std::string& prefix, std::size_t c) {
  for (const char* s : {"weight", "bias", "running_mean", "running_var"}) out.emplace_back(prefix + "." + s, Shape{c});
}
}  // namespace detail

/// Temporal length after the ResNet stem and the four stages.
inline std::size_t resnet_feature_length(const ResNetHyper& h, std::size_t window) {
  std::size_t len = detail::conv_out(window, h.stem_kernel, 2, h.stem_kernel / 2);
  len = detail::conv_out(len, 3, 2, 1);  // max pool
  for (std::size_t s = 1; s < 4; ++s) len = detail::conv_out(len, h.block_kernel, 2, h.block_kernel / 2);
  return len;
}

inline std::vector<std::pair<std::string, Shape>> expected_tensors(ArchId arch, const ResNetHyper& rh,
                                                                   const TransformerHyper& th, std::size_t window) {
  std::vector<std::pair<std::string, Shape>> out;
  if (is_resnet(arch)) {
    const std::size_t c0 = rh.base_channels;
    out.emplace_back("stem.conv.weight", Shape{c0, kInputChannels, rh.stem_kernel});
    detail::add_bn(out, "stem.bn", c0);
    std::size_t c_in = c0;
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t c = c0 << s;
      for (std::size_t b = 0; b < rh.blocks[s]; ++b) {
        const std::string p = "layer" + std::to_string(s + 1) + "." + std::to_string(b);
        const std::size_t cin_b = b == 0 ? c_in : c;
        out.emplace_back(p + ".conv1.weight", Shape{c, cin_b, rh.block_kernel});
        detail::add_bn(out, p + ".bn1", c);
        out.emplace_back(p + ".conv2.weight", Shape{c, c, rh.block_kernel});
        detail::add_bn(out, p + ".bn2", c);
        const bool project = b == 0 && (s > 0 || cin_b != c);
        if (project) {
          out.emplace_back(p + ".downsample.0.weight", Shape{c, cin_b, 1});
          detail::add_bn(out, p + ".downsample.1", c);
        }
      }
      c_in = c;
    }
    const std::size_t flat = c_in * resnet_feature_length(rh, window);
    const std::size_t n_out = arch == ArchId::ResNet1dDir ? 2 : 1;
    if (rh.head_hidden > 0) {
      out.emplace_back("fc1.weight", Shape{rh.head_hidden, flat});
      out.emplace_back("fc1.bias", Shape{rh.head_hidden});
      out.emplace_back("fc2.weight", Shape{n_out, rh.head_hidden});
      out.emplace_back("fc2.bias", Shape{n_out});
    } else {
      out.emplace_back("fc.weight", Shape{n_out, flat});
      out.emplace_back("fc.bias", Shape{n_out});
    }
  } else {
    const std::size_t d = th.d_model;
    out.emplace_back("embed.weight", Shape{d, kInputChannels, th.embed_kernel});
    out.emplace_back("embed.bias", Shape{d});
    for (std::size_t l = 0; l < th.layers; ++l) {
      const std::string p = "encoder.layers." + std::to_string(l);
      out.emplace_back(p + ".self_attn.in_proj_weight", Shape{3 * d, d});
      out.emplace_back(p + ".self_attn.in_proj_bias", Shape{3 * d});
      out.emplace_back(p + ".self_attn.out_proj.weight", Shape{d, d});
      out.emplace_back(p + ".self_attn.out_proj.bias", Shape{d});
      out.emplace_back(p + ".linear1.weight", Shape{th.ffn, d});
      out.emplace_back(p + ".linear1.bias", Shape{th.ffn});
      out.emplace_back(p + ".linear2.weight", Shape{d, th.ffn});
      out.emplace_back(p + ".linear2.bias", Shape{d});
      out.emplace_back(p + ".norm1.weight", Shape{d});
      out.emplace_back(p + ".norm1.bias", Shape{d});
      out.emplace_back(p + ".norm2.weight", Shape{d});
      out.emplace_back(p + ".norm2.bias", Shape{d});
    }
    out.emplace_back("head.fc1.weight", Shape{th.head_hidden, d});
    out.emplace_back("head.fc1.bias", Shape{th.head_hidden});
    out.emplace_back("head.fc2.weight", Shape{1, th.head_hidden});
    out.emplace_back("head.fc2.bias", Shape{1});
  }
  return out;
}

/// Checks that every tensor of the architecture graph is present with its
/// exact shape.
inline void audit_bundle(const ModelBundle& b) {
  if (b.input_window == 0) throw Error(ErrorCode::ShapeMismatch, "input_window must be positive");
  for (float sd : b.normalization.std) {
    if (!(sd > 0.0f)) throw Error(ErrorCode::ShapeMismatch, "normalization std must be positive");
  }
  if (!is_resnet(b.arch) && (b.transformer.heads == 0 || b.transformer.d_model % b.transformer.heads != 0)) {
    throw Error(ErrorCode::ShapeMismatch, "d_model not divisible by heads");
  }
  for (const auto& [name, shape] : expected_tensors(b.arch, b.resnet, b.transformer, b.input_window)) {
    const Tensor* t = b.find(name);
    if (!t) throw Error(ErrorCode::MissingTensor, name);
    if (t->shape != shape) {
      throw Error(ErrorCode::ShapeMismatch, name + ": expected " + shape_string(shape) + ", got " + shape_string(t->shape));
    }
  }
}

/// Bundle with every expected tensor present: weights zero, batch-norm and
/// layer-norm scales one, unit running variance, identity normalization.
inline ModelBundle make_bundle(ArchId arch, std::size_t input_window, ResNetHyper rh = {}, TransformerHyper th = {}) {
  ModelBundle b;
  b.arch = arch;
  b.resnet = rh;
  b.transformer = th;
  b.input_window = input_window;
  for (auto& [name, shape] : expected_tensors(arch, rh, th, input_window)) {
    const bool ones = name.ends_with("running_var") ||
                      ((name.find(".bn") != std::string::npos || name.find("norm") != std::string::npos ||
                        name.find("downsample.1") != std::string::npos) &&
                       name.ends_with(".weight"));
    b.tensors.emplace_back(name, Tensor(shape, ones ? 1.0f : 0.0f));
  }
  return b;
}

// ---------------------------------------------------------------------------
// DDRW serialization

inline constexpr std::string_view kDdrwMagic = "DDRW0001";

namespace detail {
inline std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float load_f32_le(const unsigned char* p) {
  std::uint32_t bits = read_u32_le(p);
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

inline void append_f32_le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline nlohmann::json hyper_json(const ModelBundle& b) {
  if (is_resnet(b.arch)) {
    const auto& h = b.resnet;
    return {{"base_channels", h.base_channels},
            {"blocks", h.blocks},
            {"stem_kernel", h.stem_kernel},
            {"block_kernel", h.block_kernel},
            {"head_hidden", h.head_hidden},
            {"bn_eps", h.bn_eps}};
  }
  const auto& h = b.transformer;
  return {{"d_model", h.d_model},     {"heads", h.heads},
          {"layers", h.layers},       {"ffn", h.ffn},
          {"embed_kernel", h.embed_kernel}, {"head_hidden", h.head_hidden},
          {"ln_eps", h.ln_eps}, {"dropout", h.dropout}};
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

inline void parse_hyper(const nlohmann::json& j, ModelBundle& b) {
  if (is_resnet(b.arch)) {
    auto& h = b.resnet;
    read_opt(j, "base_channels", h.base_channels);
    read_opt(j, "blocks", h.blocks);
    read_opt(j, "stem_kernel", h.stem_kernel);
    read_opt(j, "block_kernel", h.block_kernel);
    read_opt(j, "head_hidden", h.head_hidden);
    read_opt(j, "bn_eps", h.bn_eps);
  } else {
    auto& h = b.transformer;
    read_opt(j, "d_model", h.d_model);
    read_opt(j, "heads", h.heads);
    read_opt(j, "layers", h.layers);
    read_opt(j, "ffn", h.ffn);
    read_opt(j, "embed_kernel", h.embed_kernel);
    read_opt(j, "head_hidden", h.head_hidden);
    read_opt(j, "dropout", h.dropout);
    read_opt(j, "ln_eps", h.ln_eps);
  }
}

inline nlohmann::json float_array_json(const std::array<float, kInputChannels>& a) {
  auto arr = nlohmann::json::array();
  for (float v : a) arr.push_back(static_cast<double>(v));
  return arr;
}
}  // namespace detail

/// Parses a DDRW byte image and audits it against its architecture.
inline ModelBundle parse_model(std::string_view bytes) {
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || bytes.substr(0, 8) != kDdrwMagic) throw Error(ErrorCode::BadMagic, "not a DDRW0001 container");
  const std::uint32_t header_len = detail::read_u32_le(raw + 8);
  if (bytes.size() < 12ull + header_len) throw Error(ErrorCode::BadMagic, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadMagic, std::string("corrupt header: ") + e.what());
  }

  ModelBundle b;
  try {
    b.arch = parse_arch(header.at("arch_id").get<std::string>());
    b.input_window = header.at("input_window").get<std::size_t>();
    detail::parse_hyper(header.value("hyper", nlohmann::json::object()), b);
    if (header.contains("normalization")) {
      const auto& norm = header.at("normalization");
      for (std::size_t c = 0; c < kInputChannels; ++c) {
        b.normalization.mean[c] = static_cast<float>(norm.at("mean").at(c).get<double>());
        b.normalization.std[c] = static_cast<float>(norm.at("std").at(c).get<double>());
      }
    }

    const std::string_view blob = bytes.substr(12 + header_len);
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("byte_offset").get<std::size_t>();
      const auto length = entry.at("byte_length").get<std::size_t>();
      if (length != 4 * element_count(shape)) {
        throw Error(ErrorCode::ShapeMismatch, name + ": byte_length " + std::to_string(length) + " does not match shape " +
                                                  shape_string(shape));
      }
      if (offset > blob.size() || length > blob.size() - offset) {
        throw Error(ErrorCode::Io, "truncated tensor data for " + name);
      }
      Tensor t(shape);
      const auto* p = reinterpret_cast<const unsigned char*>(blob.data() + offset);
      for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = detail::load_f32_le(p + 4 * i);
      b.tensors.emplace_back(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadMagic, std::string("malformed header: ") + e.what());
  }

  for (const auto& [key, value] : header.items()) {
    if (key != "arch_id" && key != "input_window" && key != "hyper" && key != "normalization" && key != "tensors") {
      b.extra[key] = value;
    }
  }
  audit_bundle(b);
  return b;
}

inline ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_model(bytes);
}

inline std::string serialize_model(const ModelBundle& b) {
  nlohmann::json header = b.extra;
  header["arch_id"] = std::string(to_string(b.arch));
  header["input_window"] = b.input_window;
  header["hyper"] = detail::hyper_json(b);
  header["normalization"] = {{"mean", detail::float_array_json(b.normalization.mean)},
                             {"std", detail::float_array_json(b.normalization.std)}};
  auto manifest = nlohmann::json::array();
  std::string blob;
  for (const auto& [name, t] : b.tensors) {
    manifest.push_back({{"name", name}, {"shape", t.shape}, {"byte_offset", blob.size()}, {"byte_length", 4 * t.size()}});
    for (float v : t.data) detail::append_f32_le(blob, v);
  }
  header["tensors"] = std::move(manifest);

  const std::string text = header.dump();
  std::string out(kDdrwMagic);
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
  out += text;
  out += blob;
  return out;
}

inline void save_model(const std::filesystem::path& path, const ModelBundle& b) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const std::string bytes = serialize_model(b);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace ddr::nn
