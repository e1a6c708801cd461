#include "voxpix/implicit.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "voxpix/io.hpp"

namespace voxpix {

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::early_3d: return "early_3d";
    case FusionMode::late_3d: return "late_3d";
    case FusionMode::late_both: return "late_both";
  }
  return "early_3d";
}

std::string to_string(FeatureMask mask) {
  switch (mask) {
    case FeatureMask::fused: return "fused";
    case FeatureMask::geometry_only: return "geometry_only";
    case FeatureMask::pixel_only: return "pixel_only";
  }
  return "fused";
}

FusionMode fusion_mode_from(const std::string& s) {
  for (FusionMode m : {FusionMode::early_3d, FusionMode::late_3d, FusionMode::late_both})
    if (to_string(m) == s) return m;
  throw Error(ErrorKind::invalid_argument, "unknown fusion mode '" + s + "' (early_3d, late_3d, late_both)");
}

FeatureMask feature_mask_from(const std::string& s) {
  for (FeatureMask m : {FeatureMask::fused, FeatureMask::geometry_only, FeatureMask::pixel_only})
    if (to_string(m) == s) return m;
  throw Error(ErrorKind::invalid_argument, "unknown feature mask '" + s + "' (fused, geometry_only, pixel_only)");
}

// ---- configuration text ----

namespace {

template <class Range>
std::string join(const Range& values) {
  std::ostringstream s;
  bool first = true;
  for (const auto& v : values) {
    if (!first) s << ',';
    s << v;
    first = false;
  }
  return s.str();
}

std::vector<int> int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::invalid_argument, "config key " + key + ": bad integer '" + item + "'");
    }
  }
  return out;
}

template <std::size_t N>
std::array<int, N> int_array(const std::string& key, const std::string& text) {
  const auto v = int_list(key, text);
  if (v.size() != N) {
    throw Error(ErrorKind::invalid_argument,
                "config key " + key + ": expected " + std::to_string(N) + " values, got " + std::to_string(v.size()));
  }
  std::array<int, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

std::string ModelConfig::to_text() const {
  const EncoderConfig& e = encoder;
  std::ostringstream s;
  s << "preset=" << preset << '\n'
    << "image_width=" << e.image_width << '\n'
    << "image_height=" << e.image_height << '\n'
    << "voxel_shape=" << e.voxel_shape.depth << ',' << e.voxel_shape.height << ',' << e.voxel_shape.width << '\n'
    << "voxel_stem=" << join(e.voxel_stem) << '\n'
    << "lift_channels=" << e.lift_channels << '\n'
    << "unet_channels=" << e.unet_channels << '\n'
    << "unet_bottleneck=" << e.unet_bottleneck << '\n'
    << "voxel_channels=" << e.voxel_channels << '\n'
    << "decoder_channels=" << e.decoder_channels << '\n'
    << "pixel_widths=" << join(e.pixel_widths) << '\n'
    << "pixel_stride=" << e.pixel_stride << '\n'
    << "pixel_channels=" << e.pixel_channels << '\n'
    << "offset_step=" << format_double(offsets.step) << '\n'
    << "offset_scales=" << join(offsets.scales) << '\n'
    << "offset_negative=" << (offsets.include_negative ? 1 : 0) << '\n'
    << "head_hidden=" << join(head.hidden) << '\n'
    << "tower_width=" << head.tower_width << '\n'
    << "depth_scale=" << format_double(head.depth_scale) << '\n'
    << "fusion=" << to_string(fusion) << '\n'
    << "mask=" << to_string(mask) << '\n';
  return s.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream s(text);
  std::string line;
  while (std::getline(s, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::invalid_argument, "model config line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ModelConfig c = kv.count("preset") ? model_preset(kv["preset"]) : ModelConfig{};
  EncoderConfig& e = c.encoder;
  for (const auto& [key, value] : kv) {
    auto as_int = [&] { return int_array<1>(key, value)[0]; };
    if (key == "preset") continue;
    else if (key == "image_width") e.image_width = as_int();
    else if (key == "image_height") e.image_height = as_int();
    else if (key == "voxel_shape") {
      const auto v = int_array<3>(key, value);
      e.voxel_shape = {v[0], v[1], v[2]};
    } else if (key == "voxel_stem") e.voxel_stem = int_array<2>(key, value);
    else if (key == "lift_channels") e.lift_channels = as_int();
    else if (key == "unet_channels") e.unet_channels = as_int();
    else if (key == "unet_bottleneck") e.unet_bottleneck = as_int();
    else if (key == "voxel_channels") e.voxel_channels = as_int();
    else if (key == "decoder_channels") e.decoder_channels = as_int();
    else if (key == "pixel_widths") e.pixel_widths = int_array<5>(key, value);
    else if (key == "pixel_stride") e.pixel_stride = as_int();
    else if (key == "pixel_channels") e.pixel_channels = as_int();
    else if (key == "offset_step") c.offsets.step = std::stod(value);
    else if (key == "offset_scales") c.offsets.scales = int_list(key, value);
    else if (key == "offset_negative") c.offsets.include_negative = as_int() != 0;
    else if (key == "head_hidden") c.head.hidden = int_list(key, value);
    else if (key == "tower_width") c.head.tower_width = as_int();
    else if (key == "depth_scale") c.head.depth_scale = std::stod(value);
    else if (key == "fusion") c.fusion = fusion_mode_from(value);
    else if (key == "mask") c.mask = feature_mask_from(value);
    else throw Error(ErrorKind::invalid_argument, "unknown model config key '" + key + "'");
  }
  c.preset = kv.count("preset") ? kv["preset"] : c.preset;
  return c;
}

std::string ModelConfig::hash() const { return sha256_hex(to_text()); }

ModelConfig model_preset(const std::string& name) {
  ModelConfig c;
  c.preset = name;
  EncoderConfig& e = c.encoder;
  if (name == "paper") return c;
  if (name == "tiny") {
    e.voxel_stem = {8, 16};
    e.lift_channels = 4;
    e.unet_channels = 8;
    e.unet_bottleneck = 16;
    e.voxel_channels = 4;
    e.decoder_channels = 8;
    e.pixel_widths = {8, 16, 32, 32, 32};
    e.pixel_stride = 2;
    e.pixel_channels = 64;
    c.head.hidden = {128, 128, 64};
    c.head.tower_width = 64;
    return c;
  }
  if (name == "small") {
    e.voxel_stem = {16, 32};
    e.lift_channels = 4;
    e.unet_channels = 16;
    e.unet_bottleneck = 32;
    e.voxel_channels = 8;
    e.decoder_channels = 16;
    e.pixel_widths = {16, 32, 64, 64, 64};
    e.pixel_stride = 2;
    e.pixel_channels = 64;
    c.head.hidden = {256, 256, 128};
    c.head.tower_width = 128;
    return c;
  }
  throw Error(ErrorKind::invalid_argument, "unknown preset '" + name + "' (tiny, small, paper)");
}

std::vector<std::string> model_preset_names() { return {"tiny", "small", "paper"}; }

// ---- residual tower ----

template <class T>
ResidualTower<T>::ResidualTower(const std::string& name, int width, int hidden)
    : in_(name + ".in", width, hidden), out_(name + ".out", hidden, width) {}

template <class T>
nn::Mat<T> ResidualTower<T>::forward(const nn::Mat<T>& x, Cache* cache) const {
  nn::Mat<T> hidden = in_.forward(x);
  nn::leaky_inplace(hidden);
  nn::Mat<T> y = x + out_.forward(hidden);
  if (cache) {
    cache->input = x;
    cache->hidden = std::move(hidden);
  }
  return y;
}

template <class T>
nn::Mat<T> ResidualTower<T>::backward(const Cache& cache, const nn::Mat<T>& grad) {
  nn::Mat<T> gh = out_.backward(cache.hidden, grad);
  nn::leaky_backward(cache.hidden, gh);
  return grad + in_.backward(cache.input, gh);
}

template <class T>
void ResidualTower<T>::init(std::mt19937_64& rng) {
  in_.init(rng);
  out_.weight.value.setZero();
  out_.bias.value.setZero();
}

template <class T>
void ResidualTower<T>::collect(nn::ParamList<T>& out) {
  in_.collect(out);
  out_.collect(out);
}

// ---- head ----

template <class T>
ImplicitHead<T>::ImplicitHead(const HeadConfig& head, const EncodingLayout& layout, FusionMode mode,
                              FeatureMask mask)
    : head_(head), layout_(layout), mode_(mode), mask_(mask) {
  if (head.hidden.empty()) throw Error(ErrorKind::invalid_argument, "implicit head needs at least one hidden layer");
  if (mode != FusionMode::early_3d) geo_tower_ = ResidualTower<T>("head.geo_tower", layout.geometry_width(), head.tower_width);
  if (mode == FusionMode::late_both) pix_tower_ = ResidualTower<T>("head.pix_tower", layout.pixel_channels, head.tower_width);
  int in = layout.total();
  for (std::size_t i = 0; i < head.hidden.size(); ++i) {
    layers_.emplace_back("head.fc" + std::to_string(i), in, head.hidden[i]);
    in = head.hidden[i];
  }
  layers_.emplace_back("head.fc" + std::to_string(head.hidden.size()), in, 1);
}

template <class T>
nn::Vec<T> ImplicitHead<T>::forward(const FeatureRows<T>& encoding, Cache* cache) const {
  if (encoding.cols() != layout_.total()) {
    throw Error(ErrorKind::shape_mismatch, "encoding width " + std::to_string(encoding.cols()) + " does not match layout " +
                                               layout_.descriptor() + " for fusion " + to_string(mode_));
  }
  if (cache) return forward_rows(encoding, *cache);
  // Fixed-size zero-padded chunks keep the GEMM kernels, and so every row's
  // rounding, independent of how callers batch their queries.
  nn::Vec<T> out(encoding.rows());
  Cache k;
  FeatureRows<T> chunk(kEvalChunk, encoding.cols());
  for (Eigen::Index begin = 0; begin < encoding.rows(); begin += kEvalChunk) {
    const Eigen::Index n = std::min<Eigen::Index>(kEvalChunk, encoding.rows() - begin);
    chunk.topRows(n) = encoding.middleRows(begin, n);
    chunk.bottomRows(kEvalChunk - n).setZero();
    out.segment(begin, n) = forward_rows(chunk, k).head(n);
  }
  return out;
}

template <class T>
nn::Vec<T> ImplicitHead<T>::forward_rows(const FeatureRows<T>& encoding, Cache& k) const {
  const int gw = layout_.geometry_width(), pb = layout_.pixel_begin(), pc = layout_.pixel_channels;
  k.masked = encoding;
  if (mask_ == FeatureMask::geometry_only) k.masked.middleCols(pb, pc).setZero();
  if (mask_ == FeatureMask::pixel_only) k.masked.leftCols(gw).setZero();
  k.masked.col(layout_.depth_column()) *= T(head_.depth_scale);

  nn::Mat<T> x = k.masked;
  if (mode_ != FusionMode::early_3d) x.leftCols(gw) = geo_tower_.forward(k.masked.leftCols(gw), &k.geo);
  if (mode_ == FusionMode::late_both) x.middleCols(pb, pc) = pix_tower_.forward(k.masked.middleCols(pb, pc), &k.pix);

  k.activations.clear();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    nn::Mat<T> y = layers_[i].forward(x);
    if (i + 1 < layers_.size()) nn::leaky_inplace(y);
    k.activations.push_back(std::move(x));
    x = std::move(y);
  }
  const T lo = T(kProbabilityFloor), hi = T(1) - T(kProbabilityFloor);
  k.prob = x.col(0).unaryExpr([&](T v) { return std::clamp(nn::sigmoid(v), lo, hi); });
  return k.prob;
}

template <class T>
FeatureRows<T> ImplicitHead<T>::backward(const Cache& k, const nn::Vec<T>& grad_prob) {
  // The clamped value stands in for p so saturated outputs keep a small gradient.
  nn::Mat<T> g(grad_prob.size(), 1);
  for (Eigen::Index i = 0; i < grad_prob.size(); ++i) {
    const T p = k.prob[i];
    g(i, 0) = grad_prob[i] * p * (T(1) - p);
  }
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 < layers_.size()) nn::leaky_backward(k.activations[i + 1], g);
    g = layers_[i].backward(k.activations[i], g);
  }
  const int gw = layout_.geometry_width(), pb = layout_.pixel_begin(), pc = layout_.pixel_channels;
  if (mode_ != FusionMode::early_3d) g.leftCols(gw) = geo_tower_.backward(k.geo, g.leftCols(gw));
  if (mode_ == FusionMode::late_both) g.middleCols(pb, pc) = pix_tower_.backward(k.pix, g.middleCols(pb, pc));
  if (mask_ == FeatureMask::geometry_only) g.middleCols(pb, pc).setZero();
  if (mask_ == FeatureMask::pixel_only) g.leftCols(gw).setZero();
  g.col(layout_.depth_column()) *= T(head_.depth_scale);
  return g;
}

template <class T>
void ImplicitHead<T>::init(std::mt19937_64& rng) {
  if (mode_ != FusionMode::early_3d) geo_tower_.init(rng);
  if (mode_ == FusionMode::late_both) pix_tower_.init(rng);
  for (auto& l : layers_) l.init(rng);
}

template <class T>
nn::ParamList<T> ImplicitHead<T>::params() {
  nn::ParamList<T> out;
  if (mode_ != FusionMode::early_3d) geo_tower_.collect(out);
  if (mode_ == FusionMode::late_both) pix_tower_.collect(out);
  for (auto& l : layers_) l.collect(out);
  return out;
}

// ---- model ----

template <class T>
Model<T>::Model(const ModelConfig& config)
    : voxel_encoder(config.encoder),
      coarse_decoder(config.encoder),
      pixel_encoder(config.encoder),
      head(config.head, config.layout(), config.fusion, config.mask),
      config_(config) {}

template <class T>
void Model<T>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  voxel_encoder.init(rng);
  coarse_decoder.init(rng);
  pixel_encoder.init(rng);
  head.init(rng);
}

template <class T>
ImageFeatures<T> Model<T>::encode(const ImageSample& image, const WeakPerspectiveCamera& camera) const {
  // A masked-out branch never reaches the head, so it is left as zeros.
  const EncoderConfig& e = config_.encoder;
  ImageFeatures<T> f;
  if (config_.mask == FeatureMask::pixel_only) {
    f.voxels = LatentVoxelGrid<T>(e.voxel_channels, e.voxel_shape.depth, e.voxel_shape.height, e.voxel_shape.width);
  } else {
    f.voxels = voxel_encoder.forward(voxel_input<T>(image, camera, e));
  }
  if (config_.mask == FeatureMask::geometry_only) {
    f.pixels.stride = e.pixel_stride;
    f.pixels.features =
        nn::Tensor<T>(e.pixel_channels, 1, e.image_height / e.pixel_stride, e.image_width / e.pixel_stride);
  } else {
    f.pixels = pixel_encoder.forward(pixel_input<T>(image, e));
  }
  return f;
}

template <class T>
nn::Vec<T> Model<T>::predict(const ImageFeatures<T>& features, const WeakPerspectiveCamera& camera,
                             std::span<const Vector3d> points) const {
  return head.forward(build_encoding(features.voxels, features.pixels, camera, points, config_.offsets));
}

template <class T>
std::vector<std::pair<std::string, nn::ParamList<T>>> Model<T>::submodules() {
  return {{"voxel_encoder", voxel_encoder.params()},
          {"coarse_decoder", coarse_decoder.params()},
          {"pixel_encoder", pixel_encoder.params()},
          {"implicit_head", head.params()}};
}

template <class T>
std::vector<SubmoduleCount> Model<T>::parameter_report() {
  std::vector<SubmoduleCount> out;
  for (auto& [name, params] : submodules()) out.push_back({name, nn::parameter_count(params)});
  return out;
}

// ---- field evaluation ----

std::size_t field_memory_bytes(const ModelConfig& config, const GridShape& shape, int batch_size) {
  const EncodingLayout layout = config.layout();
  std::size_t per_row = std::size_t(layout.total()) + 1;
  for (int h : config.head.hidden) per_row += std::size_t(h);
  if (config.fusion != FusionMode::early_3d) per_row += std::size_t(layout.geometry_width() + config.head.tower_width);
  if (config.fusion == FusionMode::late_both) per_row += std::size_t(layout.pixel_channels + config.head.tower_width);
  // Rows are held as floats twice (layer input and output live together); points take 3 doubles.
  return shape.size() * sizeof(float) + std::size_t(batch_size) * (2 * per_row * sizeof(float) + 3 * sizeof(double));
}

template <class T>
DenseFieldGrid evaluate_field(const Model<T>& model, const ImageFeatures<T>& features,
                              const WeakPerspectiveCamera& camera, const GridShape& shape,
                              const FieldOptions& options) {
  if (options.batch_size < 1) throw Error(ErrorKind::invalid_argument, "field batch size must be positive");
  const std::size_t need = field_memory_bytes(model.config(), shape, options.batch_size);
  if (need > options.memory_budget_bytes) {
    std::ostringstream s;
    s << "field " << shape.depth << 'x' << shape.height << 'x' << shape.width << " needs " << need
      << " bytes (" << shape.size() << " cells x 4 B output + batch " << options.batch_size
      << " x per-row working set) but the budget is " << options.memory_budget_bytes << " bytes";
    throw Error(ErrorKind::budget, s.str());
  }
  DenseFieldGrid grid;
  grid.shape = shape;
  grid.values.resize(shape.size());
  std::vector<Vector3d> points;
  points.reserve(std::size_t(options.batch_size));
  std::size_t begin = 0;
  auto flush = [&] {
    const nn::Vec<T> p = model.predict(features, camera, std::span<const Vector3d>(points));
    for (std::size_t i = 0; i < points.size(); ++i) grid.values[begin + i] = float(p[Eigen::Index(i)]);
    begin += points.size();
    points.clear();
  };
  for (int d = 0; d < shape.depth; ++d)
    for (int h = 0; h < shape.height; ++h)
      for (int w = 0; w < shape.width; ++w) {
        points.push_back(shape.cell_center(d, h, w));
        if (int(points.size()) == options.batch_size) flush();
      }
  if (!points.empty()) flush();
  return grid;
}

template <class T>
DenseFieldGrid evaluate_field(const Model<T>& model, const ImageSample& image, const WeakPerspectiveCamera& camera,
                              const GridShape& shape, const FieldOptions& options) {
  return evaluate_field(model, model.encode(image, camera), camera, shape, options);
}

template <class T>
TriMesh reconstruct(const Model<T>& model, const ImageSample& image, const WeakPerspectiveCamera& camera,
                    int resolution, const FieldOptions& options) {
  if (resolution < 2) throw Error(ErrorKind::invalid_argument, "resolution must be at least 2");
  return marching_cubes(evaluate_field(model, image, camera, GridShape{resolution, resolution, resolution}, options),
                        0.5);
}

#define VOXPIX_IMPLICIT_INSTANTIATE(T)                                                                     \
  template class ResidualTower<T>;                                                                         \
  template class ImplicitHead<T>;                                                                          \
  template class Model<T>;                                                                                 \
  template DenseFieldGrid evaluate_field<T>(const Model<T>&, const ImageFeatures<T>&,                      \
                                            const WeakPerspectiveCamera&, const GridShape&, const FieldOptions&); \
  template DenseFieldGrid evaluate_field<T>(const Model<T>&, const ImageSample&, const WeakPerspectiveCamera&, \
                                            const GridShape&, const FieldOptions&);                        \
  template TriMesh reconstruct<T>(const Model<T>&, const ImageSample&, const WeakPerspectiveCamera&, int,  \
                                  const FieldOptions&);

VOXPIX_IMPLICIT_INSTANTIATE(float)
VOXPIX_IMPLICIT_INSTANTIATE(double)

}  // namespace voxpix
