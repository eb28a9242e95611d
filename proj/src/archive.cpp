#include "dvdgan/archive.hpp"

#include <cstring>
#include <fstream>

namespace dvdgan {

namespace {

constexpr size_t kMagicSize = 8;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint64_t get_u64(const std::vector<uint8_t>& in, size_t pos) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(in[pos + i]) << (8 * i);
  return v;
}

uint32_t get_u32(const std::vector<uint8_t>& in, size_t pos) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(in[pos + i]) << (8 * i);
  return v;
}

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    case torch::kUInt8: return "u8";
    default: throw CheckpointError(std::string("unsupported tensor dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from(const std::string& name) {
  if (name == "f32") return torch::kFloat32;
  if (name == "f64") return torch::kFloat64;
  if (name == "i64") return torch::kInt64;
  if (name == "u8") return torch::kUInt8;
  throw CheckpointError("unknown tensor dtype '" + name + "'");
}

}  // namespace

const torch::Tensor& Archive::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw CheckpointError("archive has no tensor '" + name + "'");
}

bool Archive::has_tensor(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

std::vector<uint8_t> serialize(const Archive& archive) {
  nlohmann::json header;
  header["meta"] = archive.meta;
  std::vector<uint8_t> payload;
  auto& table = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : archive.tensors) {
    auto c = t.detach().contiguous().cpu();
    table.push_back({{"name", name},
                     {"dtype", dtype_name(c.scalar_type())},
                     {"shape", c.sizes().vec()},
                     {"offset", payload.size()},
                     {"nbytes", c.nbytes()}});
    const auto* p = static_cast<const uint8_t*>(c.data_ptr());
    payload.insert(payload.end(), p, p + c.nbytes());
  }
  auto& blobs = header["blobs"] = nlohmann::json::array();
  for (const auto& [name, bytes] : archive.blobs) {
    blobs.push_back({{"name", name}, {"offset", payload.size()}, {"nbytes", bytes.size()}});
    payload.insert(payload.end(), bytes.begin(), bytes.end());
  }
  const auto text = header.dump();

  std::vector<uint8_t> out;
  std::string magic = archive.kind;
  magic.resize(kMagicSize, '\0');
  out.insert(out.end(), magic.begin(), magic.end());
  put_u32(out, archive.version);
  put_u64(out, archive.config_hash);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  put_u64(out, fnv1a(std::span<const uint8_t>(out)));
  return out;
}

Archive deserialize(const std::vector<uint8_t>& bytes) {
  constexpr size_t kFixed = kMagicSize + 4 + 8 + 8;
  if (bytes.size() < kFixed + 8) {
    throw CheckpointError("archive truncated");
  }
  const auto body = bytes.size() - 8;
  if (fnv1a(std::span<const uint8_t>(bytes.data(), body)) != get_u64(bytes, body)) {
    throw CheckpointError("archive checksum mismatch (corrupt file)");
  }
  Archive a;
  a.kind.assign(bytes.begin(), bytes.begin() + kMagicSize);
  a.kind.erase(a.kind.find_last_not_of('\0') + 1);
  a.version = get_u32(bytes, kMagicSize);
  a.config_hash = get_u64(bytes, kMagicSize + 4);
  const auto header_len = get_u64(bytes, kMagicSize + 12);
  if (kFixed + header_len > body) {
    throw CheckpointError("archive header overruns the file");
  }
  const auto header = nlohmann::json::parse(bytes.begin() + kFixed,
                                            bytes.begin() + static_cast<std::ptrdiff_t>(kFixed + header_len));
  const size_t base = kFixed + header_len;
  a.meta = header.at("meta");
  for (const auto& entry : header.at("tensors")) {
    const auto offset = entry.at("offset").get<size_t>();
    const auto nbytes = entry.at("nbytes").get<size_t>();
    if (base + offset + nbytes > body) {
      throw CheckpointError("tensor payload overruns the file");
    }
    auto t = torch::empty(entry.at("shape").get<std::vector<int64_t>>(),
                          dtype_from(entry.at("dtype").get<std::string>()));
    if (t.nbytes() != nbytes) {
      throw CheckpointError("tensor size does not match its shape");
    }
    std::memcpy(t.data_ptr(), bytes.data() + base + offset, nbytes);
    a.tensors.emplace_back(entry.at("name").get<std::string>(), t);
  }
  for (const auto& entry : header.at("blobs")) {
    const auto offset = entry.at("offset").get<size_t>();
    const auto nbytes = entry.at("nbytes").get<size_t>();
    if (base + offset + nbytes > body) {
      throw CheckpointError("blob payload overruns the file");
    }
    const auto* p = bytes.data() + base + offset;
    a.blobs[entry.at("name").get<std::string>()] = std::vector<uint8_t>(p, p + nbytes);
  }
  return a;
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + file.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& file, const std::vector<uint8_t>& bytes) {
  if (file.has_parent_path()) {
    std::filesystem::create_directories(file.parent_path());
  }
  // write-then-rename so an interrupted save never leaves a torn file
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open " + tmp.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw IoError("short write to " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, file);
}

void write_archive(const std::filesystem::path& file, const Archive& archive) {
  write_file_bytes(file, serialize(archive));
}

Archive read_archive(const std::filesystem::path& file) {
  try {
    return deserialize(read_file_bytes(file));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(file.string() + ": malformed archive header: " + e.what());
  }
}

void write_tensor_file(const std::filesystem::path& file, const torch::Tensor& t,
                       const nlohmann::json& meta) {
  Archive a;
  a.kind = "DVDGTENS";
  a.meta = meta;
  a.add("data", t);
  write_archive(file, a);
}

torch::Tensor read_tensor_file(const std::filesystem::path& file, nlohmann::json* meta) {
  auto a = read_archive(file);
  if (a.kind != "DVDGTENS") {
    throw CheckpointError(file.string() + " is not a tensor file");
  }
  if (meta != nullptr) *meta = a.meta;
  return a.tensor("data");
}

void add_module_state(Archive& archive, const std::string& prefix,
                      const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters(/*recurse=*/true)) {
    archive.add(prefix + p.key(), p.value());
  }
  for (const auto& b : module.named_buffers(/*recurse=*/true)) {
    archive.add(prefix + b.key(), b.value());
  }
}

void load_module_state(const Archive& archive, const std::string& prefix,
                       torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  auto load = [&](const std::string& name, torch::Tensor& target) {
    const auto& src = archive.tensor(prefix + name);
    if (src.sizes() != target.sizes() || src.scalar_type() != target.scalar_type()) {
      throw CheckpointError("tensor '" + prefix + name + "' has shape " + c10::str(src.sizes()) +
                            ", expected " + c10::str(target.sizes()));
    }
    target.copy_(src);
  };
  for (auto& p : module.named_parameters(true)) load(p.key(), p.value());
  for (auto& b : module.named_buffers(true)) load(b.key(), b.value());
}

}  // namespace dvdgan
