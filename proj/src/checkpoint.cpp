#include "covlm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "covlm/model.hpp"
#include "json.hpp"

namespace covlm {

namespace {
constexpr char kMagic[8] = {'C', 'V', 'L', 'M', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const std::string& path, const ParamRefs<float>& params) {
  nlohmann::json manifest = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto* p : params) {
    manifest.push_back({{"name", p->name},
                        {"shape", p->value.shape},
                        {"trainable", p->trainable},
                        {"offset", offset}});
    offset += p->size() * sizeof(float);
  }
  const std::string m = manifest.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kMagic, 8);
  const uint64_t mlen = m.size();
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(m.data(), static_cast<std::streamsize>(m.size()));
  for (const auto* p : params)
    f.write(reinterpret_cast<const char*>(p->value.data.data()),
            static_cast<std::streamsize>(p->size() * sizeof(float)));
}

void load_checkpoint(const std::string& path, const ParamRefs<float>& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic");
  uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  std::string m(mlen, '\0');
  f.read(m.data(), static_cast<std::streamsize>(mlen));
  const auto manifest = nlohmann::json::parse(m);
  const std::streampos blob_start = f.tellg();

  std::map<std::string, Parameter<float>*> by_name;
  for (auto* p : params) by_name[p->name] = p;

  size_t loaded = 0;
  for (const auto& entry : manifest) {
    const std::string name = entry.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end()) continue;  // extra tensors in file are ignored
    Parameter<float>* p = it->second;
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape != p->value.shape)
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    f.seekg(blob_start + static_cast<std::streamoff>(entry.at("offset").get<uint64_t>()));
    f.read(reinterpret_cast<char*>(p->value.data.data()),
           static_cast<std::streamsize>(p->size() * sizeof(float)));
    p->trainable = entry.at("trainable").get<bool>();
    ++loaded;
  }
  if (loaded != params.size())
    throw std::runtime_error("load_checkpoint: missing parameters in file");
}

uint64_t partition_checksum(const ParamRefs<float>& params,
                            const std::string& partition) {
  uint64_t h = 1469598103934665603ULL;  // FNV offset basis
  for (const auto* p : params) {
    if (Model<float>::partition_of(p->name) != partition) continue;
    const auto* bytes = reinterpret_cast<const uint8_t*>(p->value.data.data());
    const size_t n = p->size() * sizeof(float);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::map<std::string, uint64_t> all_partition_checksums(
    const ParamRefs<float>& params) {
  std::map<std::string, uint64_t> out;
  for (const auto* p : params) {
    const std::string part = Model<float>::partition_of(p->name);
    if (!out.count(part)) out[part] = 0;
  }
  for (auto& [part, sum] : out) sum = partition_checksum(params, part);
  return out;
}

}  // namespace covlm
