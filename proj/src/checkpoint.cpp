#include "vidtwin/checkpoint.hpp"

#include <fstream>

#include "vidtwin/binary_io.hpp"
#include "vidtwin/errors.hpp"

namespace vidtwin {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const torch::nn::Module& module, const std::string& kind, const json& meta,
                     const fs::path& path) {
  json manifest{{"version", kCheckpointVersion}, {"kind", kind}, {"meta", meta}, {"params", json::array()}};
  const auto params = module.named_parameters(true);
  for (const auto& item : params) {
    manifest["params"].push_back({{"name", item.key()}, {"shape", item.value().sizes().vec()}});
  }
  const std::string text = manifest.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  binio::put_magic(os, "VTCK");
  binio::put<uint16_t>(os, kCheckpointVersion);
  binio::put<uint32_t>(os, static_cast<uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& item : params) {
    auto t = item.value().detach().to(torch::kFloat32).contiguous();
    binio::put_floats(os, t.data_ptr<float>(), static_cast<size_t>(t.numel()));
  }
  if (!os) throw IoError("write failed for " + path.string());
}

namespace {
json read_manifest(std::istream& is, const fs::path& path) {
  if (!binio::check_magic(is, "VTCK")) throw FormatError(path.string() + " is not a checkpoint");
  const auto version = binio::get<uint16_t>(is, "checkpoint version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto n = binio::get<uint32_t>(is, "checkpoint manifest size");
  std::string text(n, '\0');
  is.read(text.data(), n);
  if (!is) throw IoError("truncated checkpoint manifest in " + path.string());
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
}
}  // namespace

json read_checkpoint_manifest(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_manifest(is, path);
}

json load_checkpoint(torch::nn::Module& module, const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  json manifest = read_manifest(is, path);
  auto params = module.named_parameters(true);
  const auto& listed = manifest.at("params");
  if (listed.size() != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(listed.size()) + " parameters, module has " +
                      std::to_string(params.size()));
  }
  torch::NoGradGuard no_grad;
  for (const auto& entry : listed) {
    const auto name = entry.at("name").get<std::string>();
    auto* target = params.find(name);
    if (target == nullptr) throw FormatError("checkpoint parameter '" + name + "' not present in module");
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    if (target->sizes().vec() != shape) throw FormatError("shape mismatch for parameter '" + name + "'");
    auto buf = torch::empty(shape, torch::kFloat32);
    binio::get_floats(is, buf.data_ptr<float>(), static_cast<size_t>(buf.numel()), "checkpoint");
    target->copy_(buf.to(target->dtype()));
  }
  return manifest;
}

}  // namespace vidtwin
