#pragma once

// The learned feature extractors: the voxel encoder that lifts the image into a
// latent 3D grid, the training-only coarse occupancy decoder, and the pixel
// encoder.

#include <array>
#include <string>

#include "voxpix/fieldcore.hpp"
#include "voxpix/geometry.hpp"
#include "voxpix/nn.hpp"
#include "voxpix/sampler.hpp"

namespace voxpix {

struct EncoderConfig {
  int image_width = 128;
  int image_height = 192;

  // Voxel encoder: two stride-2 image convolutions, a lifting convolution
  // whose channels reshape into (lift_channels x depth), then a two-level 3D U-Net.
  GridShape voxel_shape = kCoarseShape;
  std::array<int, 2> voxel_stem{32, 64};
  int lift_channels = 8;
  int unet_channels = 32;
  int unet_bottleneck = 64;
  int voxel_channels = 8;
  int decoder_channels = 32;

  // Pixel encoder: 2D U-Net with four downsamplings, decoded to `pixel_stride`.
  std::array<int, 5> pixel_widths{64, 128, 256, 256, 256};
  int pixel_stride = 1;
  int pixel_channels = 256;

  bool operator==(const EncoderConfig&) const = default;
};

// The voxel encoder sees the canonical window [-1,1]^2 resampled to four times
// the voxel grid's height x width, rows ordered by increasing y so feature rows
// line up with voxel rows. Channels: RGB and mask, scaled to [-1, 1].
template <class T>
nn::Tensor<T> voxel_input(const ImageSample& image, const WeakPerspectiveCamera& camera,
                          const EncoderConfig& config);
// The pixel encoder sees the image as is.
template <class T>
nn::Tensor<T> pixel_input(const ImageSample& image, const EncoderConfig& config);

template <class T>
class VoxelEncoder {
 public:
  struct Cache {
    nn::Tensor<T> input, a1, a2, a3, e1, e2, m, y;
  };

  VoxelEncoder() = default;
  explicit VoxelEncoder(const EncoderConfig& config);

  // Pass a cache to record the activations backward() needs.
  LatentVoxelGrid<T> forward(const nn::Tensor<T>& input, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const LatentVoxelGrid<T>& grad);

  void init(std::mt19937_64& rng);
  nn::ParamList<T> params();
  nn::Conv<T>& output_layer() { return out_; }

 private:
  EncoderConfig config_;
  nn::Conv<T> stem1_, stem2_, lift_, enc_, down_, mid_, up_, out_;
};

// Probabilities are clamped into [kProbabilityFloor, 1 - kProbabilityFloor]
// so a saturated float sigmoid never reaches exactly 0 or 1. Backward uses
// p (1 - p) of the clamped value, so saturation never fully stops learning.
constexpr double kProbabilityFloor = 1e-6;

template <class T>
class CoarseDecoder {
 public:
  struct Cache {
    LatentVoxelGrid<T> grid;
    nn::Tensor<T> hidden, prob;
  };

  CoarseDecoder() = default;
  explicit CoarseDecoder(const EncoderConfig& config);

  // [1, D, H, W] probabilities.
  nn::Tensor<T> forward(const LatentVoxelGrid<T>& grid, Cache* cache = nullptr) const;
  // Takes d loss / d probability; returns d loss / d grid.
  LatentVoxelGrid<T> backward(const Cache& cache, const nn::Tensor<T>& grad_prob);

  void init(std::mt19937_64& rng);
  nn::ParamList<T> params();
  nn::Conv<T>& output_layer() { return out_; }

 private:
  nn::Conv<T> hidden_, out_;
};

template <class T>
class PixelEncoder {
 public:
  struct Cache {
    nn::Tensor<T> input;
    std::array<nn::Tensor<T>, 5> x, down, dec;
  };

  PixelEncoder() = default;
  explicit PixelEncoder(const EncoderConfig& config);

  LatentPixelGrid<T> forward(const nn::Tensor<T>& input, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const nn::Tensor<T>& grad);

  void init(std::mt19937_64& rng);
  nn::ParamList<T> params();
  nn::Conv<T>& output_layer() { return out_; }
  int stop_level() const { return stop_level_; }

 private:
  EncoderConfig config_;
  int stop_level_ = 0;
  nn::Conv<T> first_;
  std::array<nn::Conv<T>, 5> down_, conv_;  // index 1..4 used
  std::array<nn::Conv<T>, 4> dec_;          // dec_[i] fuses level i with the upsampled level i + 1
  nn::Conv<T> out_;
};

}  // namespace voxpix
