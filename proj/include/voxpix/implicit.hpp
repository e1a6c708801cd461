#pragma once

// The implicit occupancy head, the model bundle (encoders + decoder + head),
// its configuration presets, dense field evaluation and reconstruction.

#include <cstdint>
#include <string>
#include <vector>

#include "voxpix/encoders.hpp"
#include "voxpix/geometry.hpp"
#include "voxpix/sampler.hpp"

namespace voxpix {

enum class FusionMode { early_3d, late_3d, late_both };
// Which encoding parts reach the head; the others are zeroed at matching width.
enum class FeatureMask { fused, geometry_only, pixel_only };

std::string to_string(FusionMode mode);
std::string to_string(FeatureMask mask);
FusionMode fusion_mode_from(const std::string& s);
FeatureMask feature_mask_from(const std::string& s);

struct HeadConfig {
  std::vector<int> hidden{512, 512, 512, 512, 512};
  int tower_width = 256;
  // Multiplies the raw depth column before the head; 1 feeds raw canonical z.
  double depth_scale = 1.0;
  bool operator==(const HeadConfig&) const = default;
};

struct ModelConfig {
  std::string preset = "paper";
  EncoderConfig encoder;
  OffsetSet offsets;
  HeadConfig head;
  FusionMode fusion = FusionMode::early_3d;
  FeatureMask mask = FeatureMask::fused;

  EncodingLayout layout() const {
    return {offsets.size(), encoder.voxel_channels, encoder.pixel_channels};
  }
  // Flat key=value lines in a fixed order; the hash is taken over this text.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  std::string hash() const;
};

// "tiny" (unit tests, single-record overfit), "small" (ablation runs) and
// "paper" (the default, full-width encoders and a 5 x 512 head).
ModelConfig model_preset(const std::string& name);
std::vector<std::string> model_preset_names();

// Two-layer residual tower, g + W2 leaky(W1 g + b1) + b2. W2 and b2 start at
// zero, so a fresh tower is the identity.
template <class T>
class ResidualTower {
 public:
  struct Cache {
    nn::Mat<T> input, hidden;
  };
  ResidualTower() = default;
  ResidualTower(const std::string& name, int width, int hidden);

  nn::Mat<T> forward(const nn::Mat<T>& x, Cache* cache) const;
  nn::Mat<T> backward(const Cache& cache, const nn::Mat<T>& grad);
  void init(std::mt19937_64& rng);
  void collect(nn::ParamList<T>& out);

 private:
  nn::Linear<T> in_, out_;
};

template <class T>
class ImplicitHead {
 public:
  struct Cache {
    nn::Mat<T> masked;
    typename ResidualTower<T>::Cache geo, pix;
    std::vector<nn::Mat<T>> activations;  // input to each linear layer
    nn::Vec<T> prob;
  };

  ImplicitHead() = default;
  ImplicitHead(const HeadConfig& head, const EncodingLayout& layout, FusionMode mode, FeatureMask mask);

  // Occupancy probabilities in (0, 1), one per encoding row. Without a cache
  // each row's result is bit-identical however the rows are batched.
  nn::Vec<T> forward(const FeatureRows<T>& encoding, Cache* cache = nullptr) const;
  // Takes d loss / d probability; returns d loss / d encoding.
  FeatureRows<T> backward(const Cache& cache, const nn::Vec<T>& grad_prob);

  void init(std::mt19937_64& rng);
  nn::ParamList<T> params();
  std::vector<nn::Linear<T>>& layers() { return layers_; }

 private:
  static constexpr Eigen::Index kEvalChunk = 256;
  nn::Vec<T> forward_rows(const FeatureRows<T>& encoding, Cache& cache) const;

  HeadConfig head_;
  EncodingLayout layout_;
  FusionMode mode_ = FusionMode::early_3d;
  FeatureMask mask_ = FeatureMask::fused;
  ResidualTower<T> geo_tower_, pix_tower_;
  std::vector<nn::Linear<T>> layers_;
};

template <class T>
struct ImageFeatures {
  LatentVoxelGrid<T> voxels;
  LatentPixelGrid<T> pixels;
};

struct SubmoduleCount {
  std::string name;
  std::size_t parameters;
};

template <class T>
class Model {
 public:
  Model() = default;
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  void init(std::uint64_t seed);

  ImageFeatures<T> encode(const ImageSample& image, const WeakPerspectiveCamera& camera) const;
  nn::Vec<T> predict(const ImageFeatures<T>& features, const WeakPerspectiveCamera& camera,
                     std::span<const Vector3d> points) const;

  VoxelEncoder<T> voxel_encoder;
  CoarseDecoder<T> coarse_decoder;
  PixelEncoder<T> pixel_encoder;
  ImplicitHead<T> head;

  // Submodules in checkpoint order: voxel_encoder, coarse_decoder, pixel_encoder, implicit_head.
  std::vector<std::pair<std::string, nn::ParamList<T>>> submodules();
  std::vector<SubmoduleCount> parameter_report();

 private:
  ModelConfig config_;
};

// Published total of the reference implementation.
constexpr std::size_t kReferenceParameterBudget = 30616954;

struct FieldOptions {
  int batch_size = 4096;
  std::size_t memory_budget_bytes = std::size_t(2) << 30;
};

// Working-set estimate for evaluate_field; exceeding the budget is an error.
std::size_t field_memory_bytes(const ModelConfig& config, const GridShape& shape, int batch_size);

// Occupancy at every cell center of `shape`, batched; the result does not
// depend on the batch size.
template <class T>
DenseFieldGrid evaluate_field(const Model<T>& model, const ImageFeatures<T>& features,
                              const WeakPerspectiveCamera& camera, const GridShape& shape,
                              const FieldOptions& options = {});
template <class T>
DenseFieldGrid evaluate_field(const Model<T>& model, const ImageSample& image,
                              const WeakPerspectiveCamera& camera, const GridShape& shape,
                              const FieldOptions& options = {});

// evaluate_field, then marching cubes at 0.5.
template <class T>
TriMesh reconstruct(const Model<T>& model, const ImageSample& image, const WeakPerspectiveCamera& camera,
                    int resolution, const FieldOptions& options = {});

}  // namespace voxpix
