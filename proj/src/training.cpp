#include "voxpix/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "voxpix/io.hpp"

namespace voxpix {

// ---- configuration ----

namespace {

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw Error(ErrorKind::invalid_argument, "config key " + key + ": bad number '" + v + "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw Error(ErrorKind::invalid_argument, "config key " + key + ": bad integer '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw Error(ErrorKind::invalid_argument, "config key " + key + ": expected true/false, got '" + v + "'");
}

std::vector<int> parse_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream s(v);
  std::string item;
  while (std::getline(s, item, ',')) out.push_back(int(parse_int(key, item)));
  return out;
}

struct Field {
  ConfigKeyInfo info;
  std::function<std::string(const TrainingConfig&)> get;
  std::function<void(TrainingConfig&, const std::string&)> set;
};

#define VOXPIX_NUM(name, prov, help)                                                              \
  Field {                                                                                         \
    {#name, "", prov, help}, [](const TrainingConfig& c) { return fmt(double(c.name)); },         \
        [](TrainingConfig& c, const std::string& v) {                                             \
          using F = decltype(c.name);                                                             \
          if constexpr (std::is_floating_point_v<F>) c.name = parse_double(#name, v);             \
          else c.name = F(parse_int(#name, v));                                                   \
        }                                                                                         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({{"preset", "", "chosen", "model size preset: tiny, small or paper"},
                 [](const TrainingConfig& c) { return c.preset; },
                 [](TrainingConfig& c, const std::string& v) { c.preset = v; }});
    f.push_back({{"fusion", "", "published", "feature fusion: early_3d, late_3d or late_both"},
                 [](const TrainingConfig& c) { return to_string(c.fusion); },
                 [](TrainingConfig& c, const std::string& v) { c.fusion = fusion_mode_from(v); }});
    f.push_back({{"mask", "", "published", "encoding parts used: fused, geometry_only or pixel_only"},
                 [](const TrainingConfig& c) { return to_string(c.mask); },
                 [](TrainingConfig& c, const std::string& v) { c.mask = feature_mask_from(v); }});
    f.push_back(VOXPIX_NUM(offset_step, "published", "geometry sampling offset step in canonical units"));
    f.push_back({{"offset_negative", "", "chosen", "sample negative offsets too (13 points instead of 7)"},
                 [](const TrainingConfig& c) { return std::string(c.offset_negative ? "true" : "false"); },
                 [](TrainingConfig& c, const std::string& v) { c.offset_negative = parse_bool("offset_negative", v); }});
    f.push_back(VOXPIX_NUM(gamma, "published", "loss_geo balance between occupied and empty cells"));
    f.push_back(VOXPIX_NUM(q_per_image, "published", "query points sampled per image per step"));
    f.push_back(VOXPIX_NUM(noise_sigma, "chosen", "std of the Gaussian displacement of surface samples"));
    f.push_back(VOXPIX_NUM(uniform_ratio, "chosen", "fraction of queries drawn uniformly in the box"));
    f.push_back(VOXPIX_NUM(lr, "published", "initial learning rate of stage 1"));
    f.push_back(VOXPIX_NUM(lr_stage2, "published", "initial learning rate of stage 2"));
    f.push_back({{"lr_drop_epochs", "", "published", "epochs at which the learning rate drops"},
                 [](const TrainingConfig& c) { return join_ints(c.lr_drop_epochs); },
                 [](TrainingConfig& c, const std::string& v) { c.lr_drop_epochs = parse_ints("lr_drop_epochs", v); }});
    f.push_back(VOXPIX_NUM(lr_drop_factor, "published", "divisor applied at each drop epoch"));
    f.push_back(VOXPIX_NUM(stage1_epochs, "published", "last epoch of stage 1"));
    f.push_back(VOXPIX_NUM(stage2_end_epoch, "published", "last epoch of stage 2"));
    f.push_back(VOXPIX_NUM(batch_stage1, "published", "images per optimizer step in stage 1"));
    f.push_back(VOXPIX_NUM(batch_stage2, "published", "images per optimizer step in stage 2"));
    f.push_back({{"freeze_voxel_encoder_stage2", "", "chosen", "keep the voxel encoder fixed during stage 2"},
                 [](const TrainingConfig& c) { return std::string(c.freeze_voxel_encoder_stage2 ? "true" : "false"); },
                 [](TrainingConfig& c, const std::string& v) {
                   c.freeze_voxel_encoder_stage2 = parse_bool("freeze_voxel_encoder_stage2", v);
                 }});
    f.push_back(VOXPIX_NUM(rms_alpha, "chosen", "RMSprop squared-gradient decay"));
    f.push_back(VOXPIX_NUM(rms_eps, "chosen", "RMSprop denominator epsilon"));
    f.push_back(VOXPIX_NUM(n_train, "chosen", "procedural training records"));
    f.push_back(VOXPIX_NUM(n_test, "chosen", "procedural test records"));
    f.push_back(VOXPIX_NUM(data_seed, "chosen", "root seed of the procedural dataset"));
    f.push_back(VOXPIX_NUM(resolution, "chosen", "reconstruction grid resolution per axis"));
    f.push_back(VOXPIX_NUM(eval_samples, "chosen", "surface samples per mesh for CD and PSD"));
    f.push_back(VOXPIX_NUM(field_batch, "chosen", "query points per field-evaluation batch"));
    const TrainingConfig defaults;
    for (auto& field : f) field.info.default_value = field.get(defaults);
    return f;
  }();
  return table;
}

#undef VOXPIX_NUM

}  // namespace

std::vector<ConfigKeyInfo> training_config_keys() {
  std::vector<ConfigKeyInfo> out;
  for (const auto& f : fields()) out.push_back(f.info);
  return out;
}

std::string TrainingConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.info.key + "=" + f.get(*this) + "\n";
  return out;
}

TrainingConfig TrainingConfig::from_text(const std::string& text) {
  TrainingConfig c;
  std::stringstream s(text);
  std::string line;
  while (std::getline(s, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::invalid_argument, "config line without '=': " + line);
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r"), e = v.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return f.info.key == key; });
    if (it == fields().end()) throw Error(ErrorKind::invalid_argument, "unknown config key '" + key + "'");
    it->set(c, value);
  }
  c.validate();
  return c;
}

TrainingConfig TrainingConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::io, "config file not found: " + path.string());
  return from_text(read_text_file(path));
}

void TrainingConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::invalid_argument, msg); };
  if (!(gamma > 0 && gamma < 1)) fail("gamma must lie in (0, 1), got " + fmt(gamma));
  if (q_per_image < 1) fail("q_per_image must be at least 1");
  if (noise_sigma < 0) fail("noise_sigma must be non-negative");
  if (uniform_ratio < 0 || uniform_ratio > 1) fail("uniform_ratio must lie in [0, 1]");
  if (lr < 0 || lr_stage2 < 0) fail("learning rates must be non-negative");
  if (lr_drop_factor <= 0) fail("lr_drop_factor must be positive");
  if (stage1_epochs < 0 || stage1_epochs >= stage2_end_epoch) fail("need 0 <= stage1_epochs < stage2_end_epoch");
  if (batch_stage1 < 1 || batch_stage2 < 1) fail("batch sizes must be positive");
  if (n_train < 0 || n_test < 0) fail("dataset sizes must be non-negative");
  if (resolution < 2) fail("resolution must be at least 2");
  if (eval_samples < 1 || field_batch < 1) fail("eval_samples and field_batch must be positive");
  model_preset(preset);
}

ModelConfig TrainingConfig::model_config() const {
  ModelConfig m = model_preset(preset);
  m.fusion = fusion;
  m.mask = mask;
  m.offsets.step = offset_step;
  m.offsets.include_negative = offset_negative;
  return m;
}

// ---- schedule ----

int stage_first_epoch(const TrainingConfig& config, int stage) { return stage == 1 ? 1 : config.stage1_epochs + 1; }
int stage_last_epoch(const TrainingConfig& config, int stage) {
  return stage == 1 ? config.stage1_epochs : config.stage2_end_epoch;
}

double learning_rate(const TrainingConfig& config, int stage, int epoch) {
  const int first = stage_first_epoch(config, stage);
  double lr = stage == 1 ? config.lr : config.lr_stage2;
  for (int drop : config.lr_drop_epochs)
    if (drop >= first && drop <= epoch) lr /= config.lr_drop_factor;
  return lr;
}

// ---- losses ----

template <class T>
double loss_geo(std::span<const T> pred, std::span<const float> target, double gamma, T* grad) {
  if (pred.size() != target.size() || pred.empty()) {
    throw Error(ErrorKind::shape_mismatch, "loss_geo: " + std::to_string(pred.size()) + " predictions vs " +
                                               std::to_string(target.size()) + " labels");
  }
  const double n = double(pred.size());
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = double(pred[i]), v = double(target[i]);
    if (!(p > 0.0 && p < 1.0)) {
      throw Error(ErrorKind::non_finite, "loss_geo: prediction " + fmt(p) + " at cell " + std::to_string(i) +
                                             " is not strictly inside (0, 1)");
    }
    sum += gamma * v * std::log(p) + (1 - gamma) * (1 - v) * std::log1p(-p);
    if (grad) grad[i] = T(-(gamma * v / p - (1 - gamma) * (1 - v) / (1 - p)) / n);
  }
  return -sum / n;
}

template <class T>
double loss_query(std::span<const T> pred, std::span<const float> target, T* grad) {
  if (pred.empty()) throw Error(ErrorKind::invalid_argument, "loss_query: empty batch");
  if (pred.size() != target.size()) {
    throw Error(ErrorKind::shape_mismatch, "loss_query: " + std::to_string(pred.size()) + " predictions vs " +
                                               std::to_string(target.size()) + " labels");
  }
  const double n = double(pred.size());
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = double(pred[i]) - double(target[i]);
    sum += d * d;
    if (grad) grad[i] = T(2 * d / n);
  }
  return sum / n;
}

template double loss_geo<float>(std::span<const float>, std::span<const float>, double, float*);
template double loss_geo<double>(std::span<const double>, std::span<const float>, double, double*);
template double loss_query<float>(std::span<const float>, std::span<const float>, float*);
template double loss_query<double>(std::span<const double>, std::span<const float>, double*);

// ---- queries ----

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<QuerySample> sample_training_queries(const DatasetRecord& record, const TrainingConfig& config,
                                                 std::uint64_t seed) {
  const int n_uniform = int(std::lround(config.q_per_image * config.uniform_ratio));
  const int n_surface = config.q_per_image - n_uniform;
  std::vector<Vector3d> points;
  points.reserve(std::size_t(config.q_per_image));
  std::mt19937_64 rng(mix(seed, 0x5157ull));
  if (n_surface > 0) {
    const SurfaceSamples s = sample_surface(record.mesh, n_surface, mix(seed, 1));
    std::normal_distribution<double> noise(0.0, config.noise_sigma);
    for (const Vector3d& p : s.points) {
      points.push_back(config.noise_sigma > 0 ? Vector3d(p + Vector3d(noise(rng), noise(rng), noise(rng))) : p);
    }
  }
  std::uniform_real_distribution<double> box(-1.0, 1.0);
  for (int i = 0; i < n_uniform; ++i) points.emplace_back(box(rng), box(rng), box(rng));
  const auto inside = point_in_mesh(record.mesh, std::span<const Vector3d>(points));
  std::vector<QuerySample> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = {points[i], inside[i] ? 1.0f : 0.0f};
  return out;
}

// ---- loss log ----

void write_loss_log(const std::filesystem::path& path, std::span<const LossLogRow> rows) {
  std::ostringstream s;
  s << "epoch\tstep\tloss_name\tvalue\tlr\n";
  s.precision(9);
  for (const auto& r : rows) s << r.epoch << '\t' << r.step << '\t' << r.loss_name << '\t' << r.value << '\t' << r.lr << '\n';
  write_text_file(path, s.str());
}

std::vector<LossLogRow> read_loss_log(const std::filesystem::path& path) {
  std::stringstream s(read_text_file(path));
  std::string line;
  std::getline(s, line);
  std::vector<LossLogRow> out;
  while (std::getline(s, line)) {
    if (line.empty()) continue;
    std::istringstream l(line);
    LossLogRow r;
    if (!(l >> r.epoch >> r.step >> r.loss_name >> r.value >> r.lr)) {
      throw Error(ErrorKind::io, "bad loss log row in " + path.string() + ": " + line);
    }
    out.push_back(r);
  }
  return out;
}

// ---- stages ----

namespace {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch, std::uint64_t seed, int stage, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix(mix(seed, std::uint64_t(stage)), std::uint64_t(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += std::size_t(batch)) {
    out.emplace_back(order.begin() + std::ptrdiff_t(b), order.begin() + std::ptrdiff_t(std::min(n, b + std::size_t(batch))));
  }
  return out;
}

std::string batch_ids(std::span<const DatasetRecord> data, const std::vector<std::size_t>& batch) {
  std::string out;
  for (std::size_t i = 0; i < batch.size(); ++i) out += (i ? "," : "") + data[batch[i]].id;
  return out;
}

void require_data(std::span<const DatasetRecord> data, const char* stage) {
  if (data.empty()) throw Error(ErrorKind::invalid_argument, std::string(stage) + ": dataset is empty");
}

void check_finite(double loss, int stage, int epoch, std::size_t batch, std::span<const DatasetRecord> data,
                  const std::vector<std::size_t>& members, const char* name) {
  if (!std::isfinite(loss)) {
    throw Error(ErrorKind::non_finite, "stage " + std::to_string(stage) + " epoch " + std::to_string(epoch) + " batch " +
                                           std::to_string(batch) + " (" + batch_ids(data, members) + "): " + name +
                                           " is " + fmt(loss));
  }
}

template <class T>
void scale_params(nn::ParamList<T>& params, T s) {
  for (auto* p : params) p->grad *= s;
}

}  // namespace

double train_stage1(Model<float>& model, std::span<const DatasetRecord> data, const TrainingConfig& config,
                    std::vector<LossLogRow>& log, const TrainOptions& options) {
  require_data(data, "stage 1");
  nn::ParamList<float> params = model.voxel_encoder.params();
  for (auto* p : model.coarse_decoder.params()) params.push_back(p);
  nn::RmsProp<float> opt(params, {config.lr, config.rms_alpha, config.rms_eps});
  const EncoderConfig& ec = model.config().encoder;

  std::vector<nn::Tensor<float>> inputs;
  for (const auto& r : data) {
    if (r.coarse_volume.shape != ec.voxel_shape) {
      throw Error(ErrorKind::shape_mismatch, "record " + r.id + " has a coarse volume of a different shape than the model");
    }
    inputs.push_back(voxel_input<float>(r.image, r.camera, ec));
  }

  double last = 0;
  int step = 0;
  for (int epoch = stage_first_epoch(config, 1); epoch <= stage_last_epoch(config, 1); ++epoch) {
    const double lr = learning_rate(config, 1, epoch);
    opt.set_lr(lr);
    double epoch_sum = 0;
    std::size_t epoch_count = 0;
    const auto batches = epoch_batches(data.size(), config.batch_stage1, options.seed, 1, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b, ++step) {
      opt.zero_grad();
      double sum = 0;
      for (std::size_t idx : batches[b]) {
        VoxelEncoder<float>::Cache vc;
        CoarseDecoder<float>::Cache dc;
        const auto grid = model.voxel_encoder.forward(inputs[idx], &vc);
        const auto prob = model.coarse_decoder.forward(grid, &dc);
        nn::Tensor<float> g(prob.c, prob.d, prob.h, prob.w);
        const double l = loss_geo<float>(std::span<const float>(prob.data.data(), std::size_t(prob.data.size())),
                                         data[idx].coarse_volume.values, config.gamma, g.data.data());
        check_finite(l, 1, epoch, b, data, batches[b], "loss_geo");
        model.voxel_encoder.backward(vc, model.coarse_decoder.backward(dc, g));
        sum += l;
      }
      scale_params(params, 1.0f / float(batches[b].size()));
      opt.step();
      const double mean = sum / double(batches[b].size());
      log.push_back({epoch, step, "loss_geo", mean, lr});
      epoch_sum += sum;
      epoch_count += batches[b].size();
    }
    last = epoch_sum / double(epoch_count);
    log.push_back({epoch, step - 1, "loss_geo_epoch", last, lr});
    if (options.on_epoch) options.on_epoch(epoch, last);
  }
  return last;
}

double train_stage2(Model<float>& model, std::span<const DatasetRecord> data, const TrainingConfig& config,
                    std::vector<LossLogRow>& log, const TrainOptions& options) {
  require_data(data, "stage 2");
  const ModelConfig& mc = model.config();
  const bool frozen = config.freeze_voxel_encoder_stage2;
  const bool use_voxels = mc.mask != FeatureMask::pixel_only;
  const bool use_pixels = mc.mask != FeatureMask::geometry_only;
  const bool train_voxels = !frozen && use_voxels;

  nn::ParamList<float> params = model.head.params();
  if (use_pixels)
    for (auto* p : model.pixel_encoder.params()) params.push_back(p);
  if (train_voxels)
    for (auto* p : model.voxel_encoder.params()) params.push_back(p);
  nn::RmsProp<float> opt(params, {config.lr_stage2, config.rms_alpha, config.rms_eps});

  // Inputs, and the voxel grids themselves while the voxel encoder is frozen.
  std::vector<nn::Tensor<float>> vin, pin;
  std::vector<LatentVoxelGrid<float>> grids;
  LatentPixelGrid<float> masked_pixels;
  for (const auto& r : data) {
    // encode() skips masked branches; with pixels in use only the voxel grid is kept.
    ImageFeatures<float> f = model.encode(r.image, r.camera);
    grids.push_back(train_voxels ? LatentVoxelGrid<float>() : std::move(f.voxels));
    if (!use_pixels && masked_pixels.features.data.size() == 0) masked_pixels = std::move(f.pixels);
    vin.push_back(train_voxels ? voxel_input<float>(r.image, r.camera, mc.encoder) : nn::Tensor<float>());
    pin.push_back(use_pixels ? pixel_input<float>(r.image, mc.encoder) : nn::Tensor<float>());
  }
  const EncodingLayout layout = mc.layout();
  double last = 0;
  int step = 0;
  for (int epoch = stage_first_epoch(config, 2); epoch <= stage_last_epoch(config, 2); ++epoch) {
    const double lr = learning_rate(config, 2, epoch);
    opt.set_lr(lr);
    double epoch_sum = 0;
    std::size_t epoch_count = 0;
    const auto batches = epoch_batches(data.size(), config.batch_stage2, options.seed, 2, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b, ++step) {
      opt.zero_grad();
      double sum = 0;
      for (std::size_t idx : batches[b]) {
        const DatasetRecord& r = data[idx];
        VoxelEncoder<float>::Cache vc;
        PixelEncoder<float>::Cache pc;
        ImageFeatures<float> f;
        f.voxels = train_voxels ? model.voxel_encoder.forward(vin[idx], &vc) : grids[idx];
        f.pixels = use_pixels ? model.pixel_encoder.forward(pin[idx], &pc) : masked_pixels;

        const auto queries =
            sample_training_queries(r, config, mix(mix(options.seed, std::uint64_t(epoch)), std::uint64_t(idx)));
        std::vector<Vector3d> points(queries.size());
        std::vector<float> labels(queries.size());
        for (std::size_t i = 0; i < queries.size(); ++i) {
          points[i] = queries[i].position;
          labels[i] = queries[i].occupancy;
        }
        const auto enc = build_encoding(f.voxels, f.pixels, r.camera, std::span<const Vector3d>(points), mc.offsets);
        ImplicitHead<float>::Cache hc;
        const nn::Vec<float> prob = model.head.forward(enc, &hc);
        nn::Vec<float> gp(prob.size());
        const double l = loss_query<float>(std::span<const float>(prob.data(), std::size_t(prob.size())), labels,
                                           gp.data());
        check_finite(l, 2, epoch, b, data, batches[b], "loss_query");
        const FeatureRows<float> genc = model.head.backward(hc, gp);

        LatentVoxelGrid<float> gv;
        LatentPixelGrid<float> gpix;
        if (train_voxels) gv = LatentVoxelGrid<float>(f.voxels.c, f.voxels.d, f.voxels.h, f.voxels.w);
        if (use_pixels) {
          gpix.stride = f.pixels.stride;
          gpix.features = nn::Tensor<float>(f.pixels.features.c, 1, f.pixels.features.h, f.pixels.features.w);
        }
        build_encoding_backward<float>(r.camera, std::span<const Vector3d>(points), mc.offsets, layout, genc,
                                       train_voxels ? &gv : nullptr, use_pixels ? &gpix : nullptr);
        if (use_pixels) model.pixel_encoder.backward(pc, gpix.features);
        if (train_voxels) model.voxel_encoder.backward(vc, gv);
        sum += l;
      }
      scale_params(params, 1.0f / float(batches[b].size()));
      opt.step();
      log.push_back({epoch, step, "loss_query", sum / double(batches[b].size()), lr});
      epoch_sum += sum;
      epoch_count += batches[b].size();
    }
    last = epoch_sum / double(epoch_count);
    log.push_back({epoch, step - 1, "loss_query_epoch", last, lr});
    if (options.on_epoch) options.on_epoch(epoch, last);
  }
  return last;
}

}  // namespace voxpix
