#include "nmsynth/manifest.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "nmsynth/csv.hpp"

namespace nmsynth {

using nlohmann::json;

namespace {
std::string hex(const unsigned char* digest, unsigned len) {
  static const char* chars = "0123456789abcdef";
  std::string out(2 * len, '0');
  for (unsigned i = 0; i < len; ++i) {
    out[2 * i] = chars[digest[i] >> 4];
    out[2 * i + 1] = chars[digest[i] & 0xf];
  }
  return out;
}
}  // namespace

std::string sha256_bytes(const void* data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned digest_len = 0;
  if (!EVP_Digest(data, len, digest, &digest_len, EVP_sha256(), nullptr))
    throw std::runtime_error("sha256 digest failed");
  return hex(digest, digest_len);
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path, 0, "cannot open file for digest");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("sha256 context allocation failed");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    std::streamsize got = in.gcount();
    if (got > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(got));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned digest_len = 0;
  EVP_DigestFinal_ex(ctx, digest, &digest_len);
  EVP_MD_CTX_free(ctx);
  return hex(digest, digest_len);
}

void RunManifest::write(const std::string& path) const {
  json j;
  j["version"] = version;
  j["command"] = command;
  j["inputs"] = input_digests;
  j["config"] = json::parse(config_json.empty() ? "{}" : config_json);
  j["settings"] = {{"chains", n_chains}, {"iterations", n_iterations}, {"burn_in", burn_in},
                   {"thin", thin},       {"seed", seed}};
  j["wall_clock_seconds"] = wall_clock_seconds;
  json diag = json::array();
  for (const auto& d : diagnostics) {
    diag.push_back({{"name", d.name},
                    {"rhat", std::isfinite(d.rhat) ? d.rhat : -1.0},
                    {"ess", std::isfinite(d.ess) ? d.ess : -1.0}});
  }
  j["diagnostics"] = diag;
  j["outputs"] = output_digests;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path, 0, "cannot open for writing");
  out << j.dump(2) << "\n";
}

RunManifest RunManifest::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path, 0, "cannot open manifest");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError(path, 0, std::string("invalid manifest: ") + e.what());
  }
  RunManifest m;
  m.version = j.value("version", std::string());
  m.command = j.value("command", std::string());
  if (j.contains("inputs")) m.input_digests = j["inputs"].get<std::map<std::string, std::string>>();
  if (j.contains("config")) m.config_json = j["config"].dump();
  if (j.contains("settings")) {
    m.n_chains = j["settings"].value("chains", 0L);
    m.n_iterations = j["settings"].value("iterations", 0L);
    m.burn_in = j["settings"].value("burn_in", 0L);
    m.thin = j["settings"].value("thin", 0L);
    m.seed = j["settings"].value("seed", 0ULL);
  }
  m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  if (j.contains("diagnostics"))
    for (const auto& d : j["diagnostics"])
      m.diagnostics.push_back({d.value("name", std::string()), d.value("rhat", -1.0), d.value("ess", -1.0)});
  if (j.contains("outputs")) m.output_digests = j["outputs"].get<std::map<std::string, std::string>>();
  return m;
}

}  // namespace nmsynth
