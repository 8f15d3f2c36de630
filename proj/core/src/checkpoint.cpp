#include "dsegan/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "dsegan/serialize.hpp"

namespace dsegan {

namespace {
constexpr char kMagic[4] = {'D', 'S', 'E', 'G'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  std::filesystem::path target(path);
  if (target.has_parent_path()) {
    std::filesystem::create_directories(target.parent_path());
  }
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("save_checkpoint: cannot open " + tmp.string());
    }
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_string(out, cp.config_json);
    write_u32(out, static_cast<std::uint32_t>(cp.tensors.size()));
    for (const auto& [name, t] : cp.tensors) {
      write_string(out, name);
      write_tensor(out, t);
    }
    write_u64(out, cp.step);
    write_string(out, cp.rng_state);
    if (!out) {
      throw std::runtime_error("save_checkpoint: write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_checkpoint: cannot open " + path);
  }
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || magic[0] != 'D' || magic[1] != 'S' || magic[2] != 'E' || magic[3] != 'G') {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  Checkpoint cp;
  cp.version = read_u32(in);
  if (cp.version != kVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(cp.version));
  }
  cp.config_json = read_string(in);
  std::uint32_t count = read_u32(in);
  cp.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_string(in);
    Tensor t = read_tensor(in);
    cp.tensors.emplace_back(std::move(name), std::move(t));
  }
  cp.step = read_u64(in);
  cp.rng_state = read_string(in);
  return cp;
}

}  // namespace dsegan
