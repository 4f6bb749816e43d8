#include "model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "core/errors.hpp"

#include <json.hpp>

namespace seqnav {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'O', 'R', 'S', 'T'};

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

uint32_t get_u32(const std::string& in, size_t& at) {
  if (at + 4 > in.size()) throw IoError("checkpoint: truncated file");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(in[at + i]);
  at += 4;
  return v;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(header_json.size()));
  out += header_json;
  put_u32(out, static_cast<uint32_t>(blocks.size()));
  for (const NamedBlock& b : blocks) {
    put_u32(out, static_cast<uint32_t>(b.name.size()));
    out += b.name;
    put_u32(out, static_cast<uint32_t>(b.shape.size()));
    for (int e : b.shape) put_u32(out, static_cast<uint32_t>(e));
    for (float f : b.data) put_u32(out, std::bit_cast<uint32_t>(f));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("checkpoint: cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot read " + path);
  std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  size_t at = 0;
  if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) {
    throw IoError("checkpoint: bad magic in " + path);
  }
  at = 4;
  const uint32_t version = get_u32(in, at);
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const uint32_t header_len = get_u32(in, at);
  if (at + header_len > in.size()) throw IoError("checkpoint: truncated header");
  ckpt.header_json = in.substr(at, header_len);
  at += header_len;
  const uint32_t n_blocks = get_u32(in, at);
  ckpt.blocks.reserve(n_blocks);
  for (uint32_t i = 0; i < n_blocks; ++i) {
    NamedBlock b;
    const uint32_t name_len = get_u32(in, at);
    if (at + name_len > in.size()) throw IoError("checkpoint: truncated block name");
    b.name = in.substr(at, name_len);
    at += name_len;
    const uint32_t rank = get_u32(in, at);
    int64_t count = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const int extent = static_cast<int>(get_u32(in, at));
      b.shape.push_back(extent);
      count *= extent;
    }
    b.data.resize(static_cast<size_t>(count));
    for (int64_t j = 0; j < count; ++j) {
      b.data[static_cast<size_t>(j)] = std::bit_cast<float>(get_u32(in, at));
    }
    ckpt.blocks.push_back(std::move(b));
  }
  return ckpt;
}

const NamedBlock* Checkpoint::find(const std::string& name) const {
  for (const NamedBlock& b : blocks) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

std::string make_checkpoint_header(const ModelConfig& cfg, const std::string& trainer_state_json) {
  json j;
  j["model_config"] = json::parse(model_config_to_json(cfg));
  if (!trainer_state_json.empty()) j["trainer_state"] = json::parse(trainer_state_json);
  return j.dump();
}

ModelConfig checkpoint_model_config(const Checkpoint& ckpt) {
  const json j = json::parse(ckpt.header_json);
  return model_config_from_json(j.at("model_config").dump());
}

std::string checkpoint_trainer_state(const Checkpoint& ckpt) {
  const json j = json::parse(ckpt.header_json);
  if (!j.contains("trainer_state")) return "";
  return j.at("trainer_state").dump();
}

void append_model_blocks(const OristModel& model, Checkpoint& ckpt) {
  for (const auto& [name, t] : model.parameters()) {
    NamedBlock b;
    b.name = name;
    b.shape = t.shape();
    b.data.assign(t.values().begin(), t.values().end());
    ckpt.blocks.push_back(std::move(b));
  }
}

void load_model_blocks(OristModel& model, const Checkpoint& ckpt) {
  for (const auto& [name, t] : model.parameters()) {
    const NamedBlock* b = ckpt.find(name);
    if (b == nullptr) throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    if (b->shape != t.shape()) {
      throw std::runtime_error("checkpoint: parameter '" + name + "' has extents " +
                               shape_str(b->shape) + ", model expects " + shape_str(t.shape()));
    }
    model.set_parameter(name, b->data);
  }
}

}  // namespace seqnav
