#include "voxpix/evaluate.hpp"

namespace voxpix {

std::vector<MetricReport> evaluate_dataset(const Model<float>& model, std::span<const DatasetRecord> records,
                                           const EvaluateOptions& options) {
  std::vector<MetricReport> rows;
  rows.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DatasetRecord& r = records[i];
    const std::uint64_t seed = options.seed + 2 * i;
    MetricReport row;
    try {
      if (options.oracle) {
        row = evaluate_meshes(r.id, r.mesh, r.mesh, r.camera, options.n_samples, seed);
      } else {
        const TriMesh mesh = reconstruct(model, r.image, r.camera, options.resolution, options.field);
        if (mesh.empty()) throw Error(ErrorKind::empty_reconstruction, "no surface crosses 0.5");
        row = evaluate_meshes(r.id, mesh, r.mesh, r.camera, options.n_samples, seed);
      }
    } catch (const Error& e) {
      row = MetricReport{};
      row.record_id = r.id;
      row.failed = true;
      row.failure = std::string(to_string(e.kind())) + ": " + e.what();
    }
    if (options.on_record) options.on_record(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace voxpix
