#pragma once

#include "dvdgan/common.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dvdgan {

/// Named tensors, opaque blobs and JSON metadata stored in one file:
///
///   magic[8] | u32 version | u64 config_hash | u64 header_len | header JSON
///   | tensor + blob payload | u64 FNV-1a of every preceding byte
///
/// All integers little-endian. The header lists each tensor's dtype, shape
/// and payload offset. Writing is deterministic: equal archives produce equal
/// bytes.
struct Archive {
  std::string kind;  // 8-byte magic, padded with '\0'
  uint32_t version = 1;
  uint64_t config_hash = 0;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  std::map<std::string, std::vector<uint8_t>> blobs;

  void add(const std::string& name, const torch::Tensor& t) { tensors.emplace_back(name, t); }
  const torch::Tensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

std::vector<uint8_t> serialize(const Archive& archive);
Archive deserialize(const std::vector<uint8_t>& bytes);

void write_archive(const std::filesystem::path& file, const Archive& archive);
/// Throws CheckpointError on bad magic, truncation or checksum mismatch.
Archive read_archive(const std::filesystem::path& file);

/// Adds every parameter and buffer of `module` under `prefix`.
void add_module_state(Archive& archive, const std::string& prefix, const torch::nn::Module& module);
/// Copies matching tensors back into `module`; missing names or shape/dtype
/// mismatches raise CheckpointError.
void load_module_state(const Archive& archive, const std::string& prefix, torch::nn::Module& module);

/// Single-tensor file (an archive of kind "DVDGTENS" holding "data"), used
/// for videos exchanged with the command-line tool.
void write_tensor_file(const std::filesystem::path& file, const torch::Tensor& t,
                       const nlohmann::json& meta = nlohmann::json::object());
torch::Tensor read_tensor_file(const std::filesystem::path& file, nlohmann::json* meta = nullptr);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& file);
void write_file_bytes(const std::filesystem::path& file, const std::vector<uint8_t>& bytes);

}  // namespace dvdgan
