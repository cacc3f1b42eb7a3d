#include "animax/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <json.hpp>

#include "animax/error.hpp"
#include "animax/io_util.hpp"

namespace animax {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'A', 'N', 'M', 'X', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, size_t pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("checkpoint: truncated container");
  unsigned char b[sizeof(T)];
  std::memcpy(b, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T value;
  std::memcpy(&value, b, sizeof(T));
  return value;
}

json config_json(const DenoiserConfig& c) {
  return {{"blocks", c.blocks},
          {"heads", c.heads},
          {"width", c.width},
          {"mlp_ratio", c.mlp_ratio},
          {"patch_hidden", c.patch_hidden},
          {"slot_freqs", c.slot_freqs},
          {"channels", c.channels},
          {"label_vocab", c.label_vocab},
          {"label_tokens", c.label_tokens},
          {"time_freqs", c.time_freqs},
          {"modality_freqs", c.modality_freqs},
          {"cond_drop", c.cond_drop},
          {"guidance", c.guidance},
          {"steps", c.steps},
          {"shared_pe", c.shared_pe},
          {"rope_base", c.rope_base}};
}

DenoiserConfig config_from(const json& j) {
  DenoiserConfig c;
  try {
    c.blocks = j.value("blocks", c.blocks);
    c.heads = j.value("heads", c.heads);
    c.width = j.value("width", c.width);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.patch_hidden = j.value("patch_hidden", c.patch_hidden);
    c.slot_freqs = j.value("slot_freqs", c.slot_freqs);
    c.channels = j.value("channels", c.channels);
    c.label_vocab = j.value("label_vocab", c.label_vocab);
    c.label_tokens = j.value("label_tokens", c.label_tokens);
    c.time_freqs = j.value("time_freqs", c.time_freqs);
    c.modality_freqs = j.value("modality_freqs", c.modality_freqs);
    c.cond_drop = j.value("cond_drop", c.cond_drop);
    c.guidance = j.value("guidance", c.guidance);
    c.steps = j.value("steps", c.steps);
    c.shared_pe = j.value("shared_pe", c.shared_pe);
    c.rope_base = j.value("rope_base", c.rope_base);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("denoiser config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace

std::string config_to_json_text(const DenoiserConfig& config) { return config_json(config).dump(2); }

DenoiserConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("denoiser config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("denoiser config: expected a JSON object");
  return config_from(j);
}

std::string encode_checkpoint(const Denoiser<float>& model, const std::string& metadata_json) {
  json meta;
  try {
    meta = json::parse(metadata_json);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("checkpoint metadata: ") + e.what());
  }
  if (!meta.is_object()) throw ValidationError("checkpoint metadata must be a JSON object");

  json tensors = json::array();
  std::uint64_t offset = 0;
  for (size_t i = 0; i < model.params().size(); ++i) {
    const auto& p = model.params()[i];
    tensors.push_back({{"name", model.names()[i]}, {"shape", {p.rows(), p.cols()}}, {"dtype", "f32"}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(p.size()) * sizeof(float);
  }
  const std::string header =
      json{{"format", "animax-checkpoint"}, {"config", config_json(model.config())}, {"metadata", meta}, {"tensors", tensors}}.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, header.size());
  out += header;
  out.reserve(out.size() + offset);
  for (const auto& p : model.params())
    for (Eigen::Index k = 0; k < p.size(); ++k) put_le<float>(out, p.data()[k]);
  return out;
}

Denoiser<float> decode_checkpoint(const std::string& bytes, std::string* metadata_json) {
  if (bytes.size() < sizeof(kMagic) + 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError("checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(bytes, 12);
  const size_t data_start = 20 + header_len;
  if (header_len > bytes.size() || data_start > bytes.size()) throw IoError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(20, header_len));
  } catch (const json::parse_error& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
  if (!header.contains("config") || !header.contains("tensors")) throw IoError("checkpoint header lacks config or tensors");

  Denoiser<float> model(config_from(header["config"]), 0);
  const auto& tensors = header["tensors"];
  if (!tensors.is_array() || tensors.size() != model.params().size())
    throw ValidationError("checkpoint: tensor count does not match the config");
  for (size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    auto& p = model.params()[i];
    const auto name = t.at("name").get<std::string>();
    if (name != model.names()[i]) throw ValidationError("checkpoint: expected tensor " + model.names()[i] + ", found " + name);
    if (t.at("dtype").get<std::string>() != "f32") throw ValidationError("checkpoint: tensor " + name + " is not f32");
    const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != p.rows() || shape[1] != p.cols())
      throw ValidationError("checkpoint: tensor " + name + " has the wrong shape");
    const auto offset = t.at("offset").get<std::uint64_t>();
    const size_t pos = data_start + offset;
    if (offset > bytes.size() || pos + static_cast<size_t>(p.size()) * sizeof(float) > bytes.size())
      throw IoError("checkpoint: tensor " + name + " runs past the end of the file");
    for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] = get_le<float>(bytes, pos + static_cast<size_t>(k) * sizeof(float));
  }
  if (metadata_json) *metadata_json = header.value("metadata", json::object()).dump();
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Denoiser<float>& model, const std::string& metadata_json) {
  write_file_atomic(path, encode_checkpoint(model, metadata_json));
}

Denoiser<float> load_checkpoint(const std::filesystem::path& path, std::string* metadata_json) {
  return decode_checkpoint(read_text_file(path), metadata_json);
}

std::string loss_curve_csv(const std::vector<double>& losses) {
  std::string out = "step,loss\n";
  char buf[64];
  for (size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, losses[i]);
    out += buf;
  }
  return out;
}

}  // namespace animax
