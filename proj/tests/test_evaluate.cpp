#include "doctest.h"

#include "voxpix/evaluate.hpp"

using namespace voxpix;

namespace {

std::vector<DatasetRecord> records() {
  return {make_record("test/0000", random_figure_spec(11)), make_record("test/0001", random_figure_spec(12))};
}

}  // namespace

TEST_CASE("oracle pass-through scores zero") {
  const auto data = records();
  Model<float> model(model_preset("tiny"));
  EvaluateOptions opt;
  opt.oracle = true;
  opt.n_samples = 2000;
  const auto rows = evaluate_dataset(model, std::span(data).first(1), opt);
  REQUIRE(rows.size() == 1);
  CHECK_FALSE(rows[0].failed);
  CHECK(rows[0].cd_x1e4 < 1e-9);
  CHECK(rows[0].psd_x1e4 < 1e-9);
  CHECK(rows[0].normal_cosine == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rows[0].normal_l2 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rows[0].mask_iou == 1.0);
}

TEST_CASE("rows are deterministic and the mean row is their average") {
  const auto data = records();
  Model<float> model(model_preset("tiny"));
  model.init(3);
  EvaluateOptions opt;
  opt.resolution = 32;
  opt.n_samples = 2000;
  opt.seed = 5;
  int seen = 0;
  opt.on_record = [&](const MetricReport&) { ++seen; };
  const auto a = evaluate_dataset(model, data, opt);
  const auto b = evaluate_dataset(model, data, opt);
  CHECK(seen == 4);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].record_id == data[i].id);
    CHECK(a[i].cd_x1e4 == b[i].cd_x1e4);
    CHECK(a[i].normal_cosine == b[i].normal_cosine);
  }
  if (!a[0].failed && !a[1].failed) {
    const MetricReport mean = mean_report(a);
    CHECK(mean.cd_x1e4 == doctest::Approx((a[0].cd_x1e4 + a[1].cd_x1e4) / 2));
    CHECK(mean.psd_x1e4 == doctest::Approx((a[0].psd_x1e4 + a[1].psd_x1e4) / 2));
    CHECK(mean.normal_l2 == doctest::Approx((a[0].normal_l2 + a[1].normal_l2) / 2));
  }
}

TEST_CASE("a failed reconstruction leaves a sentinel row and the run continues") {
  const auto data = records();
  Model<float> model(model_preset("tiny"));
  model.init(4);
  auto& last = model.head.layers().back();
  last.weight.value.setZero();
  last.bias.value.setConstant(-50.0f);
  EvaluateOptions opt;
  opt.resolution = 16;
  const auto rows = evaluate_dataset(model, data, opt);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.failed);
    CHECK(r.failure.find("empty_reconstruction") == 0);
  }
  const std::string tsv = report_tsv(rows);
  CHECK(tsv.find("test/0001\tnan") != std::string::npos);
  CHECK(tsv.find("MEAN\tnan") != std::string::npos);
}
