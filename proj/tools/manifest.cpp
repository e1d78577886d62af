#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>

#include "egospeed/error.hpp"
#include "egospeed/io.hpp"

namespace egospeed::cli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string() + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::kIo, "sha256 initialisation failed");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

void RunManifest::add_input(const std::string& role, const std::filesystem::path& path) {
  inputs.push_back({role, path, sha256_file(path)});
}

void RunManifest::add_output(const std::string& role, const std::filesystem::path& path) {
  artifacts.push_back({role, path, sha256_file(path)});
}

void RunManifest::add_volatile(const std::string& role, const std::filesystem::path& path) {
  volatile_artifacts.push_back({role, path, sha256_file(path)});
}

void RunManifest::write(const std::filesystem::path& path) const {
  const auto list = [](const std::vector<Artifact>& items) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& a : items) {
      out.push_back({{"role", a.role}, {"path", a.path.string()}, {"sha256", a.sha256}});
    }
    return out;
  };
  nlohmann::json j;
  j["schema"] = "egospeed.manifest";
  j["version"] = 1;
  j["command"] = command;
  j["tool_version"] = tool_version;
  j["config_path"] = config_path;
  j["config"] = nlohmann::json::parse(resolved_config);
  j["master_seed"] = master_seed;
  j["inputs"] = list(inputs);
  j["artifacts"] = list(artifacts);
  j["volatile_artifacts"] = list(volatile_artifacts);
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace egospeed::cli
