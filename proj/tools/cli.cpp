#include "cli.hpp"

#include <chrono>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "voxpix/checkpoint.hpp"
#include "voxpix/evaluate.hpp"
#include "voxpix/io.hpp"

namespace voxpix::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool deterministic = false;
};

class Manifest {
 public:
  Manifest(std::string command, const Common& common) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["seed"] = common.seed.value_or(0);
    doc_["deterministic"] = common.deterministic;
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
  }
  void config(const TrainingConfig& c) {
    doc_["config"] = c.to_text();
    doc_["model_config_hash"] = c.model_config().hash();
  }
  void input(const fs::path& p) { doc_["inputs"][p.string()] = sha256_file(p); }
  void output(const fs::path& p) { doc_["outputs"][p.string()] = sha256_file(p); }
  void set(const std::string& key, json value) { doc_[key] = std::move(value); }
  void write(const fs::path& dir, const std::string& status) {
    doc_["status"] = status;
    doc_["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_text_file(dir / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

TrainingConfig load_config(const Common& c, Manifest& m) {
  if (c.config_path.empty()) {
    TrainingConfig config;
    m.config(config);
    return config;
  }
  TrainingConfig config = TrainingConfig::load(c.config_path);
  m.input(c.config_path);
  m.config(config);
  return config;
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw Error(ErrorKind::invalid_argument, "--out is required");
  fs::create_directories(c.out);
  return c.out;
}

fs::path require_dataset(const std::string& root, Manifest& m) {
  if (root.empty()) throw Error(ErrorKind::invalid_argument, "--data is required");
  const fs::path manifest = fs::path(root) / "manifest.tsv";
  if (!fs::exists(manifest)) throw Error(ErrorKind::io, "no dataset at " + root + " (missing manifest.tsv)");
  m.input(manifest);
  return root;
}

void copy_values(const nn::ParamList<float>& from, const nn::ParamList<float>& to) {
  for (std::size_t i = 0; i < from.size(); ++i) to[i]->value = from[i]->value;
}

void add_common(CLI::App* app, Common& c, bool with_config = true) {
  if (with_config) app->add_option("--config", c.config_path, "key=value config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "root of all randomness (default 0)");
  app->add_option("--out", c.out, "output directory; the manifest is written at its root");
  app->add_flag("--deterministic", c.deterministic, "single-threaded, bit-reproducible execution");
}

std::string config_help() {
  std::ostringstream s;
  s << "\nConfig keys (key=value, one per line; provenance: published = stated in the source method,\n"
       "chosen = a design decision of this implementation):\n";
  for (const auto& k : training_config_keys()) {
    s << "  " << std::left << std::setw(29) << k.key << std::setw(22) << k.default_value << std::setw(10)
      << k.provenance << k.help << "\n";
  }
  return s.str();
}

void print_mean(std::ostream& out, const std::string& label, const MetricReport& m) {
  out << std::fixed << std::setprecision(4) << label << ": CD " << m.cd_x1e4 << "  PSD " << m.psd_x1e4
      << "  cosine " << m.normal_cosine << "  L2 " << m.normal_l2 << "\n";
  out.unsetf(std::ios::floatfield);
}

}  // namespace

AblationResult run_ablation(const TrainingConfig& base, std::span<const DatasetRecord> train,
                            std::span<const DatasetRecord> test, std::uint64_t seed, const fs::path& out,
                            std::ostream& log) {
  TrainingConfig c1 = base;
  c1.fusion = FusionMode::early_3d;
  c1.mask = FeatureMask::fused;
  Model<float> stage1(c1.model_config());
  stage1.init(seed);
  std::vector<LossLogRow> log1;
  TrainOptions opt;
  opt.seed = seed;
  opt.on_epoch = [&](int e, double l) { log << "stage 1 epoch " << e << " loss_geo " << l << std::endl; };
  train_stage1(stage1, train, c1, log1, opt);
  if (!out.empty()) {
    fs::create_directories(out);
    save_checkpoint(out / "stage1.ckpt", stage1, 1, c1.stage1_epochs);
    write_loss_log(out / "loss_stage1.tsv", log1);
  }

  AblationResult result;
  for (FeatureMask mask : {FeatureMask::geometry_only, FeatureMask::pixel_only, FeatureMask::fused}) {
    TrainingConfig c = c1;
    c.mask = mask;
    Model<float> model(c.model_config());
    model.init(seed);
    copy_values(stage1.voxel_encoder.params(), model.voxel_encoder.params());
    copy_values(stage1.coarse_decoder.params(), model.coarse_decoder.params());
    VariantResult v;
    v.name = to_string(mask);
    v.mask = mask;
    std::vector<LossLogRow> log2;
    opt.on_epoch = [&](int e, double l) { log << v.name << " epoch " << e << " loss_query " << l << std::endl; };
    v.final_loss = train_stage2(model, train, c, log2, opt);
    EvaluateOptions eo;
    eo.resolution = c.resolution;
    eo.n_samples = c.eval_samples;
    eo.seed = seed;
    eo.field.batch_size = c.field_batch;
    v.rows = evaluate_dataset(model, test, eo);
    v.mean = mean_report(v.rows);
    print_mean(log, v.name, v.mean);
    if (!out.empty()) {
      const fs::path dir = out / v.name;
      fs::create_directories(dir);
      save_checkpoint(dir / "model.ckpt", model, 2, c.stage2_end_epoch, false);
      write_loss_log(dir / "loss_stage2.tsv", log2);
      write_text_file(dir / "metrics.tsv", report_tsv(v.rows));
    }
    result.variants.push_back(std::move(v));
  }

  const MetricReport &geo = result.variants[0].mean, &pix = result.variants[1].mean, &fused = result.variants[2].mean;
  const bool ok = !geo.failed && !pix.failed && !fused.failed;
  result.fused_best_cd = ok && fused.cd_x1e4 <= std::min(geo.cd_x1e4, pix.cd_x1e4);
  result.fused_best_psd = ok && fused.psd_x1e4 <= std::min(geo.psd_x1e4, pix.psd_x1e4);
  result.geometry_beats_pixel_psd = ok && geo.psd_x1e4 < pix.psd_x1e4;

  std::ostringstream t;
  t << "variant\tcd_x1e4\tpsd_x1e4\tnormal_cosine\tnormal_l2\tfailed_records\tfinal_loss_query\n";
  for (const auto& v : result.variants) {
    int failed = 0;
    for (const auto& r : v.rows) failed += r.failed;
    t << std::setprecision(6) << v.name << '\t' << v.mean.cd_x1e4 << '\t' << v.mean.psd_x1e4 << '\t'
      << v.mean.normal_cosine << '\t' << v.mean.normal_l2 << '\t' << failed << '\t' << v.final_loss << '\n';
  }
  auto verdict = [](bool b) { return b ? "PASS" : "FAIL"; };
  t << "# check fused CD <= min(geometry_only, pixel_only): " << verdict(result.fused_best_cd) << '\n';
  t << "# check fused PSD <= min(geometry_only, pixel_only): " << verdict(result.fused_best_psd) << '\n';
  t << "# report geometry_only PSD < pixel_only PSD: "
    << (result.geometry_beats_pixel_psd ? "PASS" : "WARN (dataset-dependent)") << '\n';
  result.table = t.str();
  if (!out.empty()) write_text_file(out / "comparison.tsv", result.table);
  return result;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-view mesh reconstruction from geometry- and pixel-aligned implicit features.", "voxpix"};
  app.footer(config_help());
  app.require_subcommand(1);

  Common common;
  std::string stage = "all", data, checkpoint, image, record, split = "test";
  int resolution = 0;
  bool oracle = false;

  auto* datagen = app.add_subcommand("datagen", "write the procedural train/test dataset to --out");
  add_common(datagen, common);

  auto* train = app.add_subcommand("train", "train stage 1, stage 2 or both; writes checkpoints and loss logs");
  add_common(train, common);
  train->add_option("--stage", stage, "1, 2 or all")->check(CLI::IsMember({"1", "2", "all"}));
  train->add_option("--data", data, "dataset root written by datagen")->required();
  train->add_option("--checkpoint", checkpoint, "stage-1 checkpoint (required for --stage 2)");

  auto* recon = app.add_subcommand("reconstruct", "reconstruct a mesh (OBJ) from one image");
  add_common(recon, common);
  recon->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  recon->add_option("--image", image, "PNG image (RGBA, standard camera)");
  recon->add_option("--data", data, "dataset root, with --record");
  recon->add_option("--record", record, "record id such as test/0003");
  recon->add_option("--resolution", resolution, "grid resolution per axis");

  auto* evaluate = app.add_subcommand("evaluate", "reconstruct and score a dataset split; writes metrics.tsv");
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", data, "dataset root")->required();
  evaluate->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  evaluate->add_option("--resolution", resolution, "grid resolution per axis");
  evaluate->add_flag("--oracle", oracle, "score the ground-truth meshes against themselves");

  auto* ablate = app.add_subcommand("ablate", "train geometry-only, pixel-only and fused variants and compare them");
  add_common(ablate, common);
  ablate->add_option("--data", data, "dataset root")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    return kExitUsage;
  }

  if (common.deterministic) Eigen::setNbThreads(1);
  const std::uint64_t seed = common.seed.value_or(0);
  CLI::App* cmd = app.get_subcommands().front();
  Manifest manifest(cmd->get_name(), common);
  std::string outdir = common.out;
  try {
    TrainingConfig config = load_config(common, manifest);
    if (cmd == datagen) {
      const fs::path root = require_out(common);
      const std::uint64_t data_seed = common.seed ? seed : config.data_seed;
      manifest.set("seed", data_seed);
      build_dataset(root, config.n_train, config.n_test, data_seed);
      manifest.output(root / "manifest.tsv");
      out << "wrote " << config.n_train << " train and " << config.n_test << " test records to " << root.string()
          << "\n";
    } else if (cmd == train) {
      const fs::path dir = require_out(common);
      const auto records = load_split(require_dataset(data, manifest), "train");
      Model<float> model(config.model_config());
      TrainOptions opt;
      opt.seed = seed;
      if (stage == "1" || stage == "all") {
        model.init(seed);
        std::vector<LossLogRow> log;
        opt.on_epoch = [&](int e, double l) { out << "stage 1 epoch " << e << " loss_geo " << l << std::endl; };
        train_stage1(model, records, config, log, opt);
        save_checkpoint(dir / "stage1.ckpt", model, 1, config.stage1_epochs);
        write_loss_log(dir / "loss_stage1.tsv", log);
        manifest.output(dir / "stage1.ckpt");
        manifest.output(dir / "loss_stage1.tsv");
      }
      if (stage == "2" || stage == "all") {
        if (stage == "2") {
          if (checkpoint.empty()) throw Error(ErrorKind::invalid_argument, "--stage 2 needs --checkpoint");
          if (!fs::exists(checkpoint)) throw Error(ErrorKind::io, "checkpoint not found: " + checkpoint);
          load_checkpoint_into(checkpoint, model);
          manifest.input(checkpoint);
        }
        std::vector<LossLogRow> log;
        opt.on_epoch = [&](int e, double l) { out << "stage 2 epoch " << e << " loss_query " << l << std::endl; };
        train_stage2(model, records, config, log, opt);
        save_checkpoint(dir / "model.ckpt", model, 2, config.stage2_end_epoch, false);
        write_loss_log(dir / "loss_stage2.tsv", log);
        manifest.output(dir / "model.ckpt");
        manifest.output(dir / "loss_stage2.tsv");
      }
    } else if (cmd == recon) {
      const fs::path dir = require_out(common);
      const Model<float> model = load_checkpoint(checkpoint);
      manifest.input(checkpoint);
      ImageSample img;
      WeakPerspectiveCamera camera = WeakPerspectiveCamera::standard();
      if (!image.empty()) {
        if (!fs::exists(image)) throw Error(ErrorKind::io, "image not found: " + image);
        img = read_png(image);
        manifest.input(image);
      } else if (!data.empty() && !record.empty()) {
        const auto slash = record.find('/');
        if (slash == std::string::npos) throw Error(ErrorKind::invalid_argument, "record id must look like test/0003");
        const fs::path rdir = fs::path(data) / record;
        if (!fs::exists(rdir)) throw Error(ErrorKind::io, "record not found: " + rdir.string());
        const DatasetRecord r = read_record(rdir, record);
        img = r.image;
        camera = r.camera;
        manifest.input(rdir / "image.png");
      } else {
        throw Error(ErrorKind::invalid_argument, "give --image, or --data with --record");
      }
      const int res = resolution > 0 ? resolution : config.resolution;
      manifest.set("resolution", res);
      FieldOptions fo;
      fo.batch_size = config.field_batch;
      const TriMesh mesh = reconstruct(model, img, camera, res, fo);
      if (mesh.empty()) {
        manifest.write(dir, "empty_reconstruction");
        err << "warning: the predicted occupancy never crosses 0.5; no mesh written\n";
        err << "error: empty_reconstruction: no surface at resolution " << res << "\n";
        return kExitEmpty;
      }
      write_obj(dir / "mesh.obj", mesh);
      manifest.output(dir / "mesh.obj");
      out << "wrote " << mesh.num_faces() << " faces to " << (dir / "mesh.obj").string() << "\n";
    } else if (cmd == evaluate) {
      const fs::path dir = require_out(common);
      const auto records = load_split(require_dataset(data, manifest), split);
      const Model<float> model = load_checkpoint(checkpoint);
      manifest.input(checkpoint);
      EvaluateOptions eo;
      eo.resolution = resolution > 0 ? resolution : config.resolution;
      eo.n_samples = config.eval_samples;
      eo.seed = seed;
      eo.oracle = oracle;
      eo.field.batch_size = config.field_batch;
      eo.on_record = [&](const MetricReport& r) {
        if (r.failed) out << r.record_id << " failed: " << r.failure << "\n";
        else out << r.record_id << " CD " << r.cd_x1e4 << " PSD " << r.psd_x1e4 << "\n";
      };
      const auto rows = evaluate_dataset(model, records, eo);
      write_text_file(dir / "metrics.tsv", report_tsv(rows));
      manifest.output(dir / "metrics.tsv");
      print_mean(out, "mean", mean_report(rows));
    } else if (cmd == ablate) {
      const fs::path dir = require_out(common);
      const fs::path root = require_dataset(data, manifest);
      const auto train_set = load_split(root, "train");
      const auto test_set = load_split(root, "test");
      const AblationResult r = run_ablation(config, train_set, test_set, seed, dir, out);
      manifest.output(dir / "comparison.tsv");
      for (const auto& v : r.variants) manifest.output(dir / v.name / "model.ckpt");
      out << r.table;
    }
    if (!outdir.empty()) manifest.write(outdir, "ok");
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    if (!outdir.empty() && fs::is_directory(outdir)) manifest.write(outdir, std::string(to_string(e.kind())));
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace voxpix::cli
