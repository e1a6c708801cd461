#include "voxpix/encoders.hpp"

#include <algorithm>
#include <cmath>

namespace voxpix {

using nn::Conv;
using nn::Tensor;

namespace {

std::string dims_string(int c, int d, int h, int w) {
  return "[" + std::to_string(c) + ", " + std::to_string(d) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + "]";
}

void require_shape(const char* what, const ImageSample& image, const EncoderConfig& config) {
  if (image.width != config.image_width || image.height != config.image_height) {
    throw Error(ErrorKind::shape_mismatch,
                std::string(what) + ": expected a " + std::to_string(config.image_width) + "x" +
                    std::to_string(config.image_height) + " image, got " + std::to_string(image.width) +
                    "x" + std::to_string(image.height));
  }
}

template <class T>
void require_tensor(const char* what, const Tensor<T>& x, int c, int d, int h, int w) {
  if (x.c != c || x.d != d || x.h != h || x.w != w) {
    throw Error(ErrorKind::shape_mismatch,
                std::string(what) + ": expected input " + dims_string(c, d, h, w) + ", got " + x.shape_string());
  }
}

// Bilinear image lookup with pixel centers at +0.5 and border clamping.
float sample_channel(const ImageSample& image, int channel, double px, double py) {
  const double fx = std::clamp(px - 0.5, 0.0, double(image.width - 1));
  const double fy = std::clamp(py - 0.5, 0.0, double(image.height - 1));
  const int x0 = std::min(int(fx), std::max(image.width - 2, 0));
  const int y0 = std::min(int(fy), std::max(image.height - 2, 0));
  const int x1 = std::min(x0 + 1, image.width - 1), y1 = std::min(y0 + 1, image.height - 1);
  const double tx = fx - x0, ty = fy - y0;
  auto v = [&](int r, int c) -> double {
    return channel < 3 ? image.at(channel, r, c) : double(image.mask_at(r, c) != 0);
  };
  return float((1 - ty) * ((1 - tx) * v(y0, x0) + tx * v(y0, x1)) + ty * ((1 - tx) * v(y1, x0) + tx * v(y1, x1)));
}

template <class T>
void leaky(Tensor<T>& x) {
  nn::leaky_inplace(x.data);
}

template <class T>
void leaky_back(const Tensor<T>& out, Tensor<T>& grad) {
  nn::leaky_backward(out.data, grad.data);
}

}  // namespace

template <class T>
Tensor<T> voxel_input(const ImageSample& image, const WeakPerspectiveCamera& camera,
                      const EncoderConfig& config) {
  require_shape("voxel encoder", image, config);
  const int rows = 4 * config.voxel_shape.height, cols = 4 * config.voxel_shape.width;
  Tensor<T> x(4, 1, rows, cols);
  for (int r = 0; r < rows; ++r) {
    const double y = -1.0 + (r + 0.5) * 2.0 / rows;
    for (int q = 0; q < cols; ++q) {
      const double xc = -1.0 + (q + 0.5) * 2.0 / cols;
      const Vector2d px = project(camera, Vector3d(xc, y, 0.0)).pixel;
      for (int ch = 0; ch < 4; ++ch) x.at(ch, 0, r, q) = T(2.0 * sample_channel(image, ch, px.x(), px.y()) - 1.0);
    }
  }
  return x;
}

template <class T>
Tensor<T> pixel_input(const ImageSample& image, const EncoderConfig& config) {
  require_shape("pixel encoder", image, config);
  Tensor<T> x(4, 1, image.height, image.width);
  for (int r = 0; r < image.height; ++r) {
    for (int q = 0; q < image.width; ++q) {
      for (int ch = 0; ch < 3; ++ch) x.at(ch, 0, r, q) = T(2.0 * image.at(ch, r, q) - 1.0);
      x.at(3, 0, r, q) = image.mask_at(r, q) ? T(1) : T(-1);
    }
  }
  return x;
}

// ---- voxel encoder ----

template <class T>
VoxelEncoder<T>::VoxelEncoder(const EncoderConfig& config)
    : config_(config),
      stem1_(Conv<T>::conv2d("voxel.stem1", 4, config.voxel_stem[0], 3, 2)),
      stem2_(Conv<T>::conv2d("voxel.stem2", config.voxel_stem[0], config.voxel_stem[1], 3, 2)),
      lift_(Conv<T>::conv2d("voxel.lift", config.voxel_stem[1], config.lift_channels * config.voxel_shape.depth, 3)),
      enc_(Conv<T>::conv3d("voxel.enc", config.lift_channels, config.unet_channels, 3)),
      down_(Conv<T>::conv3d("voxel.down", config.unet_channels, config.unet_bottleneck, 3, 2)),
      mid_(Conv<T>::conv3d("voxel.mid", config.unet_bottleneck, config.unet_bottleneck, 3)),
      up_(Conv<T>::conv3d("voxel.up", config.unet_channels + config.unet_bottleneck, config.unet_channels, 3)),
      out_(Conv<T>::conv3d("voxel.out", config.unet_channels, config.voxel_channels, 1)) {}

template <class T>
LatentVoxelGrid<T> VoxelEncoder<T>::forward(const Tensor<T>& input, Cache* cache) const {
  const GridShape& g = config_.voxel_shape;
  require_tensor("voxel encoder", input, 4, 1, 4 * g.height, 4 * g.width);
  Tensor<T> a1 = stem1_.forward(input);
  leaky(a1);
  Tensor<T> a2 = stem2_.forward(a1);
  leaky(a2);
  Tensor<T> a3 = lift_.forward(a2);
  leaky(a3);
  // Channels (lift_channels x depth) become a 3D grid; the memory layout is unchanged.
  a3.c = config_.lift_channels;
  a3.d = g.depth;
  Tensor<T> e1 = enc_.forward(a3);
  leaky(e1);
  Tensor<T> e2 = down_.forward(e1);
  leaky(e2);
  Tensor<T> m = mid_.forward(e2);
  leaky(m);
  Tensor<T> y = up_.forward(nn::concat_channels(e1, nn::upsample(m, {2, 2, 2})));
  leaky(y);
  LatentVoxelGrid<T> out = out_.forward(y);
  if (cache) {
    cache->input = input;
    cache->a1 = std::move(a1);
    cache->a2 = std::move(a2);
    cache->a3 = std::move(a3);
    cache->e1 = std::move(e1);
    cache->e2 = std::move(e2);
    cache->m = std::move(m);
    cache->y = std::move(y);
  }
  return out;
}

template <class T>
void VoxelEncoder<T>::backward(const Cache& c, const LatentVoxelGrid<T>& grad) {
  Tensor<T> gy = out_.backward(c.y, grad);
  leaky_back(c.y, gy);
  const Tensor<T> cat = nn::concat_channels(c.e1, nn::upsample(c.m, {2, 2, 2}));
  auto [ge1, gup] = nn::split_channels(up_.backward(cat, gy), c.e1.c);
  Tensor<T> gm = nn::upsample_backward(gup, {2, 2, 2});
  leaky_back(c.m, gm);
  Tensor<T> ge2 = mid_.backward(c.e2, gm);
  leaky_back(c.e2, ge2);
  ge1.data += down_.backward(c.e1, ge2).data;
  leaky_back(c.e1, ge1);
  Tensor<T> ga3 = enc_.backward(c.a3, ge1);
  leaky_back(c.a3, ga3);
  ga3.c = c.a3.c * c.a3.d;
  ga3.d = 1;
  Tensor<T> ga2 = lift_.backward(c.a2, ga3);
  leaky_back(c.a2, ga2);
  Tensor<T> ga1 = stem2_.backward(c.a1, ga2);
  leaky_back(c.a1, ga1);
  stem1_.backward(c.input, ga1);
}

template <class T>
void VoxelEncoder<T>::init(std::mt19937_64& rng) {
  for (Conv<T>* conv : {&stem1_, &stem2_, &lift_, &enc_, &down_, &mid_, &up_, &out_}) conv->init(rng);
}

template <class T>
nn::ParamList<T> VoxelEncoder<T>::params() {
  nn::ParamList<T> out;
  for (Conv<T>* conv : {&stem1_, &stem2_, &lift_, &enc_, &down_, &mid_, &up_, &out_}) conv->collect(out);
  return out;
}

// ---- coarse decoder ----

template <class T>
CoarseDecoder<T>::CoarseDecoder(const EncoderConfig& config)
    : hidden_(Conv<T>::conv3d("decoder.hidden", config.voxel_channels, config.decoder_channels, 3)),
      out_(Conv<T>::conv3d("decoder.out", config.decoder_channels, 1, 1)) {}

template <class T>
Tensor<T> CoarseDecoder<T>::forward(const LatentVoxelGrid<T>& grid, Cache* cache) const {
  Tensor<T> hidden = hidden_.forward(grid);
  leaky(hidden);
  Tensor<T> prob = out_.forward(hidden);
  const T lo = T(kProbabilityFloor), hi = T(1) - T(kProbabilityFloor);
  for (auto& v : prob.data) v = std::clamp(nn::sigmoid(v), lo, hi);
  if (cache) {
    cache->grid = grid;
    cache->hidden = std::move(hidden);
    cache->prob = prob;
  }
  return prob;
}

template <class T>
LatentVoxelGrid<T> CoarseDecoder<T>::backward(const Cache& c, const Tensor<T>& grad_prob) {
  // The clamped value stands in for p so saturated outputs keep a small gradient.
  Tensor<T> glogit = grad_prob;
  for (Eigen::Index i = 0; i < glogit.data.size(); ++i) {
    const T p = c.prob.data[i];
    glogit.data[i] = grad_prob.data[i] * p * (T(1) - p);
  }
  Tensor<T> gh = out_.backward(c.hidden, glogit);
  leaky_back(c.hidden, gh);
  return hidden_.backward(c.grid, gh);
}

template <class T>
void CoarseDecoder<T>::init(std::mt19937_64& rng) {
  hidden_.init(rng);
  out_.init(rng);
}

template <class T>
nn::ParamList<T> CoarseDecoder<T>::params() {
  nn::ParamList<T> out;
  hidden_.collect(out);
  out_.collect(out);
  return out;
}

// ---- pixel encoder ----

template <class T>
PixelEncoder<T>::PixelEncoder(const EncoderConfig& config) : config_(config) {
  const auto& c = config.pixel_widths;
  switch (config.pixel_stride) {
    case 1: stop_level_ = 0; break;
    case 2: stop_level_ = 1; break;
    case 4: stop_level_ = 2; break;
    case 8: stop_level_ = 3; break;
    default:
      throw Error(ErrorKind::invalid_argument,
                  "pixel_stride must be 1, 2, 4 or 8, got " + std::to_string(config.pixel_stride));
  }
  first_ = Conv<T>::conv2d("pixel.first", 4, c[0], 3);
  for (int i = 1; i < 5; ++i) {
    down_[i] = Conv<T>::conv2d("pixel.down" + std::to_string(i), c[i - 1], c[i], 3, 2);
    conv_[i] = Conv<T>::conv2d("pixel.conv" + std::to_string(i), c[i], c[i], 3);
  }
  for (int i = stop_level_; i < 4; ++i) {
    dec_[i] = Conv<T>::conv2d("pixel.dec" + std::to_string(i), c[i] + c[i + 1], c[i], 3);
  }
  out_ = Conv<T>::conv2d("pixel.out", c[stop_level_], config.pixel_channels, 1);
}

template <class T>
LatentPixelGrid<T> PixelEncoder<T>::forward(const Tensor<T>& input, Cache* cache) const {
  require_tensor("pixel encoder", input, 4, 1, config_.image_height, config_.image_width);
  if (config_.image_height % 16 != 0 || config_.image_width % 16 != 0) {
    throw Error(ErrorKind::shape_mismatch, "pixel encoder: image dims must be multiples of 16");
  }
  Cache local;
  Cache& k = cache ? *cache : local;
  k.input = input;
  k.x[0] = first_.forward(input);
  leaky(k.x[0]);
  for (int i = 1; i < 5; ++i) {
    k.down[i] = down_[i].forward(k.x[i - 1]);
    leaky(k.down[i]);
    k.x[i] = conv_[i].forward(k.down[i]);
    leaky(k.x[i]);
  }
  const Tensor<T>* cur = &k.x[4];
  for (int i = 3; i >= stop_level_; --i) {
    k.dec[i] = dec_[i].forward(nn::concat_channels(k.x[i], nn::upsample(*cur, {1, 2, 2})));
    leaky(k.dec[i]);
    cur = &k.dec[i];
  }
  LatentPixelGrid<T> out;
  out.features = out_.forward(*cur);
  out.stride = config_.pixel_stride;
  return out;
}

template <class T>
void PixelEncoder<T>::backward(const Cache& k, const Tensor<T>& grad) {
  std::array<Tensor<T>, 5> gx;
  for (int i = 0; i < 5; ++i) gx[i] = Tensor<T>(k.x[i].c, k.x[i].d, k.x[i].h, k.x[i].w);
  const auto level_output = [&](int i) -> const Tensor<T>& { return i == 4 ? k.x[4] : k.dec[i]; };
  Tensor<T> g = out_.backward(level_output(stop_level_), grad);
  for (int i = stop_level_; i < 4; ++i) {
    leaky_back(k.dec[i], g);
    const Tensor<T>& below = level_output(i + 1);
    const Tensor<T> cat = nn::concat_channels(k.x[i], nn::upsample(below, {1, 2, 2}));
    auto [gskip, gup] = nn::split_channels(dec_[i].backward(cat, g), k.x[i].c);
    gx[i].data += gskip.data;
    g = nn::upsample_backward(gup, {1, 2, 2});
  }
  gx[4].data += g.data;
  for (int i = 4; i >= 1; --i) {
    leaky_back(k.x[i], gx[i]);
    Tensor<T> gd = conv_[i].backward(k.down[i], gx[i]);
    leaky_back(k.down[i], gd);
    gx[i - 1].data += down_[i].backward(k.x[i - 1], gd).data;
  }
  leaky_back(k.x[0], gx[0]);
  first_.backward(k.input, gx[0]);
}

template <class T>
void PixelEncoder<T>::init(std::mt19937_64& rng) {
  first_.init(rng);
  for (int i = 1; i < 5; ++i) {
    down_[i].init(rng);
    conv_[i].init(rng);
  }
  for (int i = stop_level_; i < 4; ++i) dec_[i].init(rng);
  out_.init(rng);
}

template <class T>
nn::ParamList<T> PixelEncoder<T>::params() {
  nn::ParamList<T> out;
  first_.collect(out);
  for (int i = 1; i < 5; ++i) {
    down_[i].collect(out);
    conv_[i].collect(out);
  }
  for (int i = stop_level_; i < 4; ++i) dec_[i].collect(out);
  out_.collect(out);
  return out;
}

template class VoxelEncoder<float>;
template class VoxelEncoder<double>;
template class CoarseDecoder<float>;
template class CoarseDecoder<double>;
template class PixelEncoder<float>;
template class PixelEncoder<double>;
template Tensor<float> voxel_input<float>(const ImageSample&, const WeakPerspectiveCamera&, const EncoderConfig&);
template Tensor<double> voxel_input<double>(const ImageSample&, const WeakPerspectiveCamera&, const EncoderConfig&);
template Tensor<float> pixel_input<float>(const ImageSample&, const EncoderConfig&);
template Tensor<double> pixel_input<double>(const ImageSample&, const EncoderConfig&);

}  // namespace voxpix
