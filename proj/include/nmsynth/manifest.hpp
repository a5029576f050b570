#pragma once

#include <map>
#include <string>
#include <vector>

namespace nmsynth {

std::string sha256_file(const std::string& path);
std::string sha256_bytes(const void* data, std::size_t len);

struct ManifestDiagnostic {
  std::string name;
  double rhat = 0.0;  // NaN encoded as -1 in the file
  double ess = 0.0;
};

// Everything needed to reproduce a run bit-identically and to verify that a
// replay produced the same outputs.
struct RunManifest {
  std::string version;
  std::string command;
  std::map<std::string, std::string> input_digests;   // path -> sha256
  std::string config_json;                            // full ModelConfig snapshot
  long n_chains = 0, n_iterations = 0, burn_in = 0, thin = 0;
  unsigned long long seed = 0;
  double wall_clock_seconds = 0.0;
  std::vector<ManifestDiagnostic> diagnostics;        // per-parameter rhat/ess
  std::map<std::string, std::string> output_digests;  // file name -> sha256

  void write(const std::string& path) const;
  static RunManifest read(const std::string& path);
};

}  // namespace nmsynth
