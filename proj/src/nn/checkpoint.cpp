#include "mswin/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mswin/errors.hpp"

namespace mswin::nn {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void save_checkpoint(const std::filesystem::path& file, Generator& gen, const json& meta) {
  json header;
  header["format"] = "mswin-checkpoint";
  header["version"] = 1;
  header["generator"] = to_json(gen->cfg);
  header["meta"] = meta;
  header["params"] = json::array();
  std::vector<torch::Tensor> blobs;
  std::uint64_t offset = 0;
  for (const auto& p : gen->named_parameters()) {
    auto t = p.value().detach().to(torch::kFloat32).contiguous();
    const std::uint64_t nbytes = static_cast<std::uint64_t>(t.numel()) * sizeof(float);
    header["params"].push_back({{"name", p.key()}, {"shape", t.sizes().vec()}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
    blobs.push_back(std::move(t));
  }
  const std::string text = header.dump();
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out.write(kCheckpointMagic, 8);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : blobs)
    out.write(reinterpret_cast<const char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * 4));
  if (!out) throw IoError("write failed for " + file.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + file.string());
  char magic[8];
  std::uint64_t len = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CorruptionError(file.string() + " is not a checkpoint (bad magic)");
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1ull << 32))
    throw CorruptionError("checkpoint header length is unreadable");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw CorruptionError("checkpoint header is truncated");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  LoadedCheckpoint ck;
  ck.meta = header.value("meta", json::object());
  ck.generator = Generator(generator_config_from_json(header.at("generator")));
  auto params = ck.generator->named_parameters();
  const auto& manifest = header.at("params");
  if (manifest.size() != params.size())
    throw CorruptionError("checkpoint manifest lists " + std::to_string(manifest.size()) + " tensors, model has " +
                          std::to_string(params.size()));
  torch::NoGradGuard guard;
  for (const auto& e : manifest) {
    const auto name = e.at("name").get<std::string>();
    auto* p = params.find(name);
    if (!p) throw CorruptionError("checkpoint tensor '" + name + "' does not exist in the model");
    const auto shape = e.at("shape").get<std::vector<int64_t>>();
    if (!p->sizes().equals(shape)) throw CorruptionError("checkpoint tensor '" + name + "' has the wrong shape");
    const auto off = e.at("offset").get<std::uint64_t>();
    const auto nbytes = e.at("nbytes").get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(p->numel()) * 4 || off + nbytes > blob.size())
      throw CorruptionError("checkpoint blob for '" + name + "' is truncated");
    std::memcpy(p->data_ptr<float>(), blob.data() + off, nbytes);
  }
  return ck;
}

std::vector<float> flatten_parameters(torch::nn::Module& m) {
  std::vector<float> out;
  for (const auto& p : m.parameters()) {
    const auto t = p.detach().to(torch::kFloat32).contiguous();
    out.insert(out.end(), t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
  }
  return out;
}

}  // namespace mswin::nn
