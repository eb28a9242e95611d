#include "dvdgan/data/dataset.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dvdgan::data {

namespace fs = std::filesystem;

void write_raw_tensor(const fs::path& file, const torch::Tensor& frames_u8) {
  auto t = frames_u8.contiguous();
  if (t.scalar_type() != torch::kUInt8) {
    throw InvalidInput("raw tensor files hold uint8 pixels");
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw IoError("cannot open " + file.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(t.data_ptr<uint8_t>()),
            static_cast<std::streamsize>(t.numel()));
  if (!out) {
    throw IoError("short write to " + file.string());
  }
}

torch::Tensor read_raw_tensor(const fs::path& file, int64_t num_frames, int64_t height,
                              int64_t width) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + file.string());
  }
  auto t = torch::empty({num_frames, height, width, 3}, torch::kUInt8);
  in.read(reinterpret_cast<char*>(t.data_ptr<uint8_t>()), static_cast<std::streamsize>(t.numel()));
  if (in.gcount() != t.numel() || in.peek() != std::char_traits<char>::eof()) {
    throw IoError(file.string() + " does not hold " + std::to_string(t.numel()) + " bytes");
  }
  return t;
}

void write_dataset(const fs::path& dir, const Dataset& videos) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
  std::ofstream index(dir / "index.tsv");
  if (!index) {
    throw IoError("cannot write " + (dir / "index.tsv").string());
  }
  index << "path\tlabel\tnum_frames\theight\twidth\n";
  for (size_t i = 0; i < videos.size(); ++i) {
    const auto& v = videos[i];
    validate(v);
    char name[32];
    std::snprintf(name, sizeof(name), "video_%06zu.u8", i);
    write_raw_tensor(dir / name, v.frames);
    index << name << '\t' << v.label << '\t' << v.num_frames() << '\t' << v.height() << '\t'
          << v.width() << '\n';
  }
}

Dataset read_dataset(const fs::path& dir) {
  std::ifstream index(dir / "index.tsv");
  if (!index) {
    throw IoError("dataset index not found: " + (dir / "index.tsv").string());
  }
  Dataset out;
  std::string line;
  std::getline(index, line);
  if (line.rfind("path\t", 0) != 0) {
    throw IoError("malformed index header in " + (dir / "index.tsv").string());
  }
  int64_t row = 1;
  while (std::getline(index, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string path;
    RawVideo v;
    int64_t t = 0, h = 0, w = 0;
    if (!(std::getline(fields, path, '\t') && fields >> v.label >> t >> h >> w)) {
      throw IoError("malformed index row " + std::to_string(row));
    }
    v.frames = read_raw_tensor(dir / path, t, h, w);
    out.push_back(std::move(v));
  }
  return out;
}

uint64_t dataset_hash(const Dataset& videos) {
  uint64_t h = kFnvOffset;
  for (const auto& v : videos) {
    h = hash_tensor(v.frames, h);
    h = fnv1a(std::to_string(v.label), h);
  }
  return h;
}

Batcher::Batcher(std::shared_ptr<const Dataset> dataset, PreprocessConfig config,
                 uint64_t seed)
    : dataset_(std::move(dataset)), config_(config), gen_(make_generator(seed)) {
  if (!dataset_ || dataset_->empty()) {
    throw InvalidInput("batcher needs a nonempty dataset");
  }
  reshuffle();
}

void Batcher::reshuffle() {
  order_ = sample_without_replacement(static_cast<int64_t>(dataset_->size()),
                                      static_cast<int64_t>(dataset_->size()), gen_);
  cursor_ = 0;
}

VideoBatch Batcher::next(int64_t batch_size) {
  if (batch_size < 1) {
    throw InvalidInput("batch_size must be >= 1");
  }
  std::vector<Clip> clips;
  clips.reserve(static_cast<size_t>(batch_size));
  for (int64_t i = 0; i < batch_size; ++i) {
    if (cursor_ == static_cast<int64_t>(order_.size())) {
      ++epoch_;
      reshuffle();
    }
    const auto& video = (*dataset_)[static_cast<size_t>(order_[cursor_++])];
    clips.push_back(preprocess(video, config_, gen_));
  }
  return stack_clips(clips);
}

std::vector<uint8_t> Batcher::save_state() const {
  auto gen = gen_;
  nlohmann::json j{{"order", order_},
                   {"cursor", cursor_},
                   {"epoch", epoch_},
                   {"rng", generator_state(gen)}};
  return nlohmann::json::to_cbor(j);
}

void Batcher::load_state(const std::vector<uint8_t>& state) {
  const auto j = nlohmann::json::from_cbor(state);
  auto order = j.at("order").get<std::vector<int64_t>>();
  if (order.size() != dataset_->size()) {
    throw CheckpointError("batcher state does not match the dataset size");
  }
  order_ = std::move(order);
  cursor_ = j.at("cursor").get<int64_t>();
  epoch_ = j.at("epoch").get<int64_t>();
  set_generator_state(gen_, j.at("rng").get<std::vector<uint8_t>>());
}

VideoBatch make_batch(Batcher& batcher, int64_t batch_size) { return batcher.next(batch_size); }

VideoBatch stack_clips(const std::vector<Clip>& clips) {
  if (clips.empty()) {
    throw InvalidInput("cannot stack an empty clip list");
  }
  std::vector<torch::Tensor> frames;
  std::vector<int64_t> labels;
  for (const auto& c : clips) {
    frames.push_back(c.frames);
    labels.push_back(c.label);
  }
  return {torch::stack(frames), torch::tensor(labels, torch::kLong)};
}

}  // namespace dvdgan::data
