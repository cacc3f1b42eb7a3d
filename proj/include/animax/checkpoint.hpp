#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "animax/denoiser.hpp"

namespace animax {

// Layout: "ANMXCKPT", u32 version, u64 header length, JSON header
// (config, metadata, tensors: name/shape/dtype/offset), then little-endian f32
// tensor data; offsets count from the first data byte.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string config_to_json_text(const DenoiserConfig& config);
DenoiserConfig config_from_json_text(const std::string& text);

// `metadata_json` must be a JSON object; it is stored verbatim under "metadata".
std::string encode_checkpoint(const Denoiser<float>& model, const std::string& metadata_json = "{}");
// Throws IoError on a malformed container, ValidationError on a tensor mismatch.
Denoiser<float> decode_checkpoint(const std::string& bytes, std::string* metadata_json = nullptr);

void save_checkpoint(const std::filesystem::path& path, const Denoiser<float>& model, const std::string& metadata_json = "{}");
Denoiser<float> load_checkpoint(const std::filesystem::path& path, std::string* metadata_json = nullptr);

// "step,loss" header then one row per step.
std::string loss_curve_csv(const std::vector<double>& losses);

}  // namespace animax
