#pragma once

// Per-record reconstruction and metrics over a dataset split.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "voxpix/datagen.hpp"
#include "voxpix/evalkit.hpp"
#include "voxpix/implicit.hpp"

namespace voxpix {

struct EvaluateOptions {
  int resolution = 128;
  int n_samples = 10000;
  std::uint64_t seed = 0;
  FieldOptions field;
  // Scores the ground-truth mesh against itself instead of reconstructing.
  bool oracle = false;
  // Called once per record with its row (sentinel rows included).
  std::function<void(const MetricReport&)> on_record;
};

// One row per record, in input order. A record whose reconstruction or
// metrics fail gets a sentinel row (failed = true) and the run continues.
std::vector<MetricReport> evaluate_dataset(const Model<float>& model, std::span<const DatasetRecord> records,
                                           const EvaluateOptions& options = {});

}  // namespace voxpix
