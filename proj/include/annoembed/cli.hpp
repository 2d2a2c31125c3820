#pragma once

#include <string>
#include <vector>

namespace annoembed {

// Default output root when --out is not given.
constexpr const char* kOutEnvVar = "ANNOEMBED_OUT";

// Commands: synth, split, train, eval, baselines, ablate, analyze, report.
// `args` excludes the program name. Returns the process exit status.
//
// Every command writes <out>/manifest.json:
//   {"command": ..., "options": {flag: value, ...}, ...}
// and `annoembed --config <out>/manifest.json [--out other]` reruns it.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace annoembed
