#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "streamcap/memory.hpp"
#include "streamcap/metrics.hpp"
#include "streamcap/scheduler.hpp"

namespace streamcap::cli {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kUsage = 2,  // bad flags or unparsable input
  kIo = 3,
  kDegenerate = 4,
};

// Settings shared by every subcommand. Defaults are the best-performing
// configuration: K = 2 x 257 tokens, two K-means iterations, momentum on,
// stride 32, caption-only prefix, IoU thresholds 0.3/0.5/0.7/0.9.
struct RunConfig {
  memory::MemoryConfig memory;
  int stride = 32;
  scheduler::PrefixMode prefix_mode = scheduler::PrefixMode::kCaptions;
  std::vector<double> thresholds = metrics::kDefaultThresholds;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string log_level = "warn";

  nlohmann::json to_json() const;
};

// Entry point for the `streamcap` tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace streamcap::cli
