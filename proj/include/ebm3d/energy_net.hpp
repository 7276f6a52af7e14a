#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "ebm3d/feature_grid.hpp"
#include "ebm3d/geometry.hpp"
#include "ebm3d/pooling.hpp"

namespace ebm3d {

struct DenseShape {
  int in = 0;
  int out = 0;
  std::size_t weight_count() const { return static_cast<std::size_t>(in) * out; }
};

// Layer sizes of f(x, y). The defaults reproduce the car configuration with a
// 256-channel backbone map: h4 = 4*7*256 = 7168, h5 = 7200.
struct EnergyNetDims {
  PoolConfig pool;
  int channels = 256;
  int enc_dim = 16;
  int hidden = 1024;

  int h4_size() const { return pool.points() * channels; }
  int h5_size() const { return h4_size() + 2 * enc_dim; }
  // Declaration order: enc_cz.0, enc_cz.1, enc_h.0, enc_h.1, head.0, head.1, head.2.
  std::vector<DenseShape> layers() const;
  void validate() const;
  bool operator==(const EnergyNetDims& o) const {
    return pool.grid_w == o.pool.grid_w && pool.grid_l == o.pool.grid_l && channels == o.channels &&
           enc_dim == o.enc_dim && hidden == o.hidden;
  }
};

// Vectorized reductions choose their summation order from the buffer address,
// so every tensor is kept at a fixed alignment to make results independent of
// where the parameters happen to live.
inline constexpr std::size_t kTensorAlign = 64;

template <class T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kTensorAlign))); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t(kTensorAlign)); }
  bool operator==(const AlignedAllocator&) const { return true; }
};

enum NetLayer : int { kEncCz0 = 0, kEncCz1, kEncH0, kEncH1, kHead0, kHead1, kHead2, kNumLayers };

// Flat parameter vector: for each layer in declaration order, the row-major
// (out x in) weight followed by the bias. Each tensor starts on a 64-byte
// boundary; the zero padding between tensors has zero gradient. Gradients use
// the same layout.
class EnergyNetParams {
 public:
  explicit EnergyNetParams(const EnergyNetDims& dims);

  const EnergyNetDims& dims() const { return dims_; }
  const std::vector<DenseShape>& shapes() const { return shapes_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::size_t weight_offset(int layer) const { return offsets_[layer]; }
  std::size_t bias_offset(int layer) const { return bias_offsets_[layer]; }
  std::span<double> weight(int layer) { return {values_.data() + weight_offset(layer), shapes_[layer].weight_count()}; }
  std::span<const double> weight(int layer) const {
    return {values_.data() + weight_offset(layer), shapes_[layer].weight_count()};
  }
  std::span<double> bias(int layer) { return {values_.data() + bias_offset(layer), std::size_t(shapes_[layer].out)}; }
  std::span<const double> bias(int layer) const {
    return {values_.data() + bias_offset(layer), std::size_t(shapes_[layer].out)};
  }

  static std::string layer_name(int layer);

  bool operator==(const EnergyNetParams& o) const { return dims_ == o.dims_ && values_ == o.values_; }

 private:
  EnergyNetDims dims_;
  std::vector<DenseShape> shapes_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> bias_offsets_;
  std::vector<double, AlignedAllocator<double>> values_;
};

// He fan-in normal weights, zero biases.
EnergyNetParams init_params(std::uint64_t seed, const EnergyNetDims& dims);

struct EnergyEval {
  double value = 0.0;
  // d f / d y in box order (cx, cy, cz, h, w, l, phi).
  std::array<double, Box3D::kDims> grad_box{};
  std::vector<double> grad_params;
};

EnergyEval forward(const EnergyNetParams& params, const FeatureGrid& grid, const Box3D& box);
EnergyEval backward_box(const EnergyNetParams& params, const FeatureGrid& grid, const Box3D& box);
EnergyEval backward_params(const EnergyNetParams& params, const FeatureGrid& grid, const Box3D& box);
// Box and parameter gradients from one backward pass.
EnergyEval backward_all(const EnergyNetParams& params, const FeatureGrid& grid, const Box3D& box);

// Batched evaluation of many boxes over one grid.
std::vector<double> forward_batch(const EnergyNetParams& params, const FeatureGrid& grid, std::span<const Box3D> boxes);

// One forward pass over a batch of boxes on the same grid, keeping the
// activations for any number of backward passes.
class BatchPass {
 public:
  BatchPass(const EnergyNetParams& params, const FeatureGrid& grid, std::span<const Box3D> boxes, bool with_box_grad);
  ~BatchPass();
  BatchPass(BatchPass&&) noexcept;
  BatchPass& operator=(BatchPass&&) noexcept;

  const std::vector<double>& values() const;
  // Backpropagates upstream d loss / d f_b. Either output may be empty.
  void backward(std::span<const double> upstream, std::span<double> grad_params_accum,
                std::span<std::array<double, Box3D::kDims>> grad_boxes);

 private:
  struct State;
  const EnergyNetParams* params_;
  std::unique_ptr<State> state_;
};

// Checkpoint: magic, format version, layer-dimension table, then named
// tensors in declaration order as little-endian float64.
void save_checkpoint(const EnergyNetParams& params, const std::string& path);
EnergyNetParams load_checkpoint(const std::string& path);
std::vector<std::uint8_t> encode_checkpoint(const EnergyNetParams& params);
EnergyNetParams decode_checkpoint(std::vector<std::uint8_t> bytes);

}  // namespace ebm3d
