#pragma once

// Command-line front end: datagen, train, reconstruct, evaluate and ablate.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "voxpix/datagen.hpp"
#include "voxpix/evalkit.hpp"
#include "voxpix/training.hpp"

namespace voxpix::cli {

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitEmpty = 3;

// Runs one command line (args excludes the program name). Errors print as
// "error: <kind>: <message>" on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct VariantResult {
  std::string name;
  FeatureMask mask;
  MetricReport mean;
  std::vector<MetricReport> rows;
  double final_loss = 0;
};

struct AblationResult {
  std::vector<VariantResult> variants;  // geometry_only, pixel_only, fused
  bool fused_best_cd = false;
  bool fused_best_psd = false;
  bool geometry_beats_pixel_psd = false;
  std::string table;  // comparison TSV with the check lines
};

// Stage 1 once, then stage 2 per variant from the shared stage-1 weights with
// early fusion, each evaluated on `test`. Writes under `out` when not empty.
AblationResult run_ablation(const TrainingConfig& config, std::span<const DatasetRecord> train,
                            std::span<const DatasetRecord> test, std::uint64_t seed,
                            const std::filesystem::path& out, std::ostream& log);

}  // namespace voxpix::cli
