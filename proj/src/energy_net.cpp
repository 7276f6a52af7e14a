#include "ebm3d/energy_net.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>

#include "ebm3d/binary_io.hpp"
#include "ebm3d/error.hpp"

namespace ebm3d {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

constexpr char kCheckpointMagic[] = "EBM3DNET";
constexpr std::uint32_t kCheckpointVersion = 1;

ConstMatrixMap weight_map(const EnergyNetParams& p, int layer) {
  const DenseShape& s = p.shapes()[layer];
  return ConstMatrixMap(p.weight(layer).data(), s.out, s.in);
}

ConstVectorMap bias_map(const EnergyNetParams& p, int layer) {
  return ConstVectorMap(p.bias(layer).data(), p.shapes()[layer].out);
}

// Gradient products are formed in aligned temporaries and then added
// elementwise, since the caller's buffer may sit at any address.
void add_layer_grad(const EnergyNetParams& p, std::span<double> grad, int layer, const RowMatrix& d_pre,
                    const RowMatrix& input) {
  const DenseShape& s = p.shapes()[layer];
  const RowMatrix dw = d_pre.transpose() * input;
  const RowMatrix db = d_pre.colwise().sum();
  MatrixMap(grad.data() + p.weight_offset(layer), s.out, s.in) += dw;
  VectorMap(grad.data() + p.bias_offset(layer), s.out) += db.transpose();
}

void check_layer(const RowMatrix& m, int layer) {
  if (!m.allFinite()) {
    throw Error(ErrorCategory::Numeric, "non-finite activation in layer " + EnergyNetParams::layer_name(layer),
                layer);
  }
}

RowMatrix dense(const RowMatrix& input, const EnergyNetParams& p, int layer) {
  RowMatrix out = input * weight_map(p, layer).transpose();
  out.rowwise() += bias_map(p, layer).transpose();
  check_layer(out, layer);
  return out;
}

RowMatrix relu(const RowMatrix& m) { return m.cwiseMax(0.0); }

RowMatrix relu_backward(const RowMatrix& upstream, const RowMatrix& pre) {
  return (pre.array() > 0.0).select(upstream, 0.0);
}

}  // namespace

std::vector<DenseShape> EnergyNetDims::layers() const {
  return {{1, enc_dim}, {enc_dim, enc_dim}, {1, enc_dim}, {enc_dim, enc_dim},
          {h5_size(), hidden}, {hidden, hidden}, {hidden, 1}};
}

void EnergyNetDims::validate() const {
  pool.validate();
  if (channels < 1 || enc_dim < 1 || hidden < 1) {
    throw Error(ErrorCategory::Config, "energy network dimensions must be positive");
  }
}

EnergyNetParams::EnergyNetParams(const EnergyNetDims& dims) : dims_(dims), shapes_(dims.layers()) {
  dims_.validate();
  constexpr std::size_t kStride = kTensorAlign / sizeof(double);
  const auto pad = [](std::size_t n) { return (n + kStride - 1) / kStride * kStride; };
  std::size_t offset = 0;
  for (const DenseShape& s : shapes_) {
    offsets_.push_back(offset);
    offset += pad(s.weight_count());
    bias_offsets_.push_back(offset);
    offset += pad(s.out);
  }
  values_.assign(offset, 0.0);
}

std::string EnergyNetParams::layer_name(int layer) {
  static const char* const kNames[kNumLayers] = {"enc_cz.0", "enc_cz.1", "enc_h.0", "enc_h.1",
                                                 "head.0",   "head.1",   "head.2"};
  if (layer < 0 || layer >= kNumLayers) return "input";
  return kNames[layer];
}

EnergyNetParams init_params(std::uint64_t seed, const EnergyNetDims& dims) {
  EnergyNetParams params(dims);
  std::mt19937_64 rng(seed);
  for (int layer = 0; layer < kNumLayers; ++layer) {
    const DenseShape& s = params.shapes()[layer];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / s.in));
    for (double& w : params.weight(layer)) w = normal(rng);
  }
  return params;
}

struct BatchPass::State {
  int batch = 0;
  bool with_box_grad = false;
  std::vector<PooledFeature> pooled;
  RowMatrix h5;
  RowMatrix cz_in, h_in;
  RowMatrix cz_pre0, cz_act0, cz_pre1;
  RowMatrix h_pre0, h_act0, h_pre1;
  RowMatrix a1, r1, a2, r2;
  std::vector<double> values;
};

BatchPass::BatchPass(const EnergyNetParams& params, const FeatureGrid& grid, std::span<const Box3D> boxes,
                     bool with_box_grad)
    : params_(&params), state_(std::make_unique<State>()) {
  const EnergyNetDims& dims = params.dims();
  if (grid.channels() != dims.channels) {
    throw Error(ErrorCategory::Config, "feature grid has " + std::to_string(grid.channels()) +
                                           " channels, network expects " + std::to_string(dims.channels));
  }
  State& st = *state_;
  st.batch = static_cast<int>(boxes.size());
  st.with_box_grad = with_box_grad;
  const int h4 = dims.h4_size();
  const int enc = dims.enc_dim;
  st.h5.resize(st.batch, dims.h5_size());
  st.cz_in.resize(st.batch, 1);
  st.h_in.resize(st.batch, 1);
  if (with_box_grad) st.pooled.reserve(boxes.size());
  for (int b = 0; b < st.batch; ++b) {
    const Box3D& box = boxes[b];
    for (double v : box.to_array()) {
      if (!std::isfinite(v)) throw Error(ErrorCategory::Numeric, "non-finite box coordinate", -1);
    }
    PooledFeature pooled = pool_bev(grid, to_bev(box), dims.pool, with_box_grad);
    std::copy(pooled.h4.begin(), pooled.h4.end(), st.h5.row(b).data());
    if (with_box_grad) st.pooled.push_back(std::move(pooled));
    st.cz_in(b, 0) = box.cz;
    st.h_in(b, 0) = box.h;
  }

  st.cz_pre0 = dense(st.cz_in, params, kEncCz0);
  st.cz_act0 = relu(st.cz_pre0);
  st.cz_pre1 = dense(st.cz_act0, params, kEncCz1);
  st.h_pre0 = dense(st.h_in, params, kEncH0);
  st.h_act0 = relu(st.h_pre0);
  st.h_pre1 = dense(st.h_act0, params, kEncH1);
  st.h5.middleCols(h4, enc) = relu(st.cz_pre1);
  st.h5.rightCols(enc) = relu(st.h_pre1);

  st.a1 = dense(st.h5, params, kHead0);
  st.r1 = relu(st.a1);
  st.a2 = dense(st.r1, params, kHead1);
  st.r2 = relu(st.a2);
  const RowMatrix out = dense(st.r2, params, kHead2);
  st.values.assign(out.data(), out.data() + st.batch);
}

BatchPass::~BatchPass() = default;
BatchPass::BatchPass(BatchPass&&) noexcept = default;
BatchPass& BatchPass::operator=(BatchPass&&) noexcept = default;

const std::vector<double>& BatchPass::values() const { return state_->values; }

void BatchPass::backward(std::span<const double> upstream, std::span<double> grad_params,
                         std::span<std::array<double, Box3D::kDims>> grad_boxes) {
  const State& st = *state_;
  const EnergyNetParams& p = *params_;
  const EnergyNetDims& dims = p.dims();
  const bool want_params = !grad_params.empty();
  const bool want_boxes = !grad_boxes.empty();
  if (upstream.size() != static_cast<std::size_t>(st.batch)) {
    throw Error(ErrorCategory::Config, "upstream gradient length does not match batch size");
  }
  if (want_params && grad_params.size() != p.size()) {
    throw Error(ErrorCategory::Config, "parameter gradient buffer has the wrong size");
  }
  if (want_boxes && (!st.with_box_grad || grad_boxes.size() != upstream.size())) {
    throw Error(ErrorCategory::Config, "box gradients were not prepared for this batch");
  }
  const int h4 = dims.h4_size();
  const int enc = dims.enc_dim;
  const RowMatrix d_out = ConstMatrixMap(upstream.data(), st.batch, 1);

  if (want_params) add_layer_grad(p, grad_params, kHead2, d_out, st.r2);
  const RowMatrix d_a2 = relu_backward(d_out * weight_map(p, kHead2), st.a2);
  if (want_params) add_layer_grad(p, grad_params, kHead1, d_a2, st.r1);
  const RowMatrix d_a1 = relu_backward(d_a2 * weight_map(p, kHead1), st.a1);
  if (want_params) add_layer_grad(p, grad_params, kHead0, d_a1, st.h5);

  // Only the encoder slice of d h5 is needed unless box gradients are wanted.
  RowMatrix d_h5;
  if (want_boxes) {
    d_h5 = d_a1 * weight_map(p, kHead0);
  } else {
    d_h5.resize(st.batch, dims.h5_size());
    d_h5.rightCols(2 * enc) = d_a1 * weight_map(p, kHead0).rightCols(2 * enc);
  }

  auto encoder_backward = [&](const RowMatrix& d_g, const RowMatrix& pre1, const RowMatrix& act0,
                              const RowMatrix& pre0, const RowMatrix& input, int layer0) -> RowMatrix {
    const RowMatrix d_pre1 = relu_backward(d_g, pre1);
    if (want_params) add_layer_grad(p, grad_params, layer0 + 1, d_pre1, act0);
    const RowMatrix d_pre0 = relu_backward(d_pre1 * weight_map(p, layer0 + 1), pre0);
    if (want_params) add_layer_grad(p, grad_params, layer0, d_pre0, input);
    return d_pre0 * weight_map(p, layer0);
  };
  const RowMatrix d_cz = encoder_backward(d_h5.middleCols(h4, enc), st.cz_pre1, st.cz_act0, st.cz_pre0, st.cz_in,
                                          kEncCz0);
  const RowMatrix d_h = encoder_backward(d_h5.rightCols(enc), st.h_pre1, st.h_act0, st.h_pre0, st.h_in, kEncH0);

  if (!want_boxes) return;
  for (int b = 0; b < st.batch; ++b) {
    std::array<double, BoxBEV::kDims> g_bev{};
    const PooledFeature& pooled = st.pooled[b];
    const double* d_row = d_h5.row(b).data();
    for (int k = 0; k < h4; ++k) {
      const double d = d_row[k];
      if (d == 0.0) continue;
      const std::span<const double> jac = pooled.grad_row(k);
      for (int m = 0; m < BoxBEV::kDims; ++m) g_bev[m] += d * jac[m];
    }
    // BEV order (cx, cy, w, l, phi) -> box order (cx, cy, cz, h, w, l, phi).
    grad_boxes[b] = {g_bev[0], g_bev[1], d_cz(b, 0), d_h(b, 0), g_bev[2], g_bev[3], g_bev[4]};
    for (double v : grad_boxes[b]) {
      if (!std::isfinite(v)) throw Error(ErrorCategory::Numeric, "non-finite box gradient", -1);
    }
  }
}

namespace {

EnergyEval evaluate_single(const EnergyNetParams& params, const FeatureGrid& grid, const Box3D& box,
                           bool want_box, bool want_params) {
  BatchPass pass(params, grid, std::span<const Box3D>(&box, 1), want_box);
  EnergyEval eval;
  eval.value = pass.values()[0];
  if (!want_box && !want_params) return eval;
  const double one = 1.0;
  if (want_params) eval.grad_params.assign(params.size(), 0.0);
  std::span<std::array<double, Box3D::kDims>> box_out;
  if (want_box) box_out = std::span<std::array<double, Box3D::kDims>>(&eval.grad_box, 1);
  pass.backward(std::span<const double>(&one, 1), eval.grad_params, box_out);
  return eval;
}

}  // namespace

EnergyEval forward(const EnergyNetParams& params, const FeatureGrid& grid, const Box3D& box) {
  return evaluate_single(params, grid, box, false, false);
}

EnergyEval backward_box(const EnergyNetParams& params, const FeatureGrid& grid, const Box3D& box) {
  return evaluate_single(params, grid, box, true, false);
}

EnergyEval backward_params(const EnergyNetParams& params, const FeatureGrid& grid, const Box3D& box) {
  return evaluate_single(params, grid, box, false, true);
}

EnergyEval backward_all(const EnergyNetParams& params, const FeatureGrid& grid, const Box3D& box) {
  return evaluate_single(params, grid, box, true, true);
}

std::vector<double> forward_batch(const EnergyNetParams& params, const FeatureGrid& grid,
                                  std::span<const Box3D> boxes) {
  if (boxes.empty()) return {};
  return BatchPass(params, grid, boxes, false).values();
}

std::vector<std::uint8_t> encode_checkpoint(const EnergyNetParams& params) {
  const EnergyNetDims& d = params.dims();
  BinaryWriter w;
  w.put_raw(std::string_view(kCheckpointMagic, 8));
  w.put_u32(kCheckpointVersion);
  w.put_u32(d.pool.grid_w);
  w.put_u32(d.pool.grid_l);
  w.put_u32(d.channels);
  w.put_u32(d.enc_dim);
  w.put_u32(d.hidden);
  w.put_u32(kNumLayers);
  for (int layer = 0; layer < kNumLayers; ++layer) {
    w.put_string(EnergyNetParams::layer_name(layer));
    w.put_u32(params.shapes()[layer].in);
    w.put_u32(params.shapes()[layer].out);
  }
  w.put_u32(2 * kNumLayers);
  for (int layer = 0; layer < kNumLayers; ++layer) {
    w.put_string(EnergyNetParams::layer_name(layer) + ".weight");
    w.put_u64(params.weight(layer).size());
    w.put_f64s(params.weight(layer));
    w.put_string(EnergyNetParams::layer_name(layer) + ".bias");
    w.put_u64(params.bias(layer).size());
    w.put_f64s(params.bias(layer));
  }
  return w.bytes();
}

EnergyNetParams decode_checkpoint(std::vector<std::uint8_t> bytes) {
  BinaryReader r(std::move(bytes));
  if (r.get_raw(8) != std::string_view(kCheckpointMagic, 8)) {
    throw Error(ErrorCategory::Parse, "not an energy network checkpoint (bad magic)");
  }
  const std::uint32_t version = r.get_u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCategory::Parse, "unsupported checkpoint version " + std::to_string(version));
  }
  EnergyNetDims dims;
  dims.pool.grid_w = static_cast<int>(r.get_u32());
  dims.pool.grid_l = static_cast<int>(r.get_u32());
  dims.channels = static_cast<int>(r.get_u32());
  dims.enc_dim = static_cast<int>(r.get_u32());
  dims.hidden = static_cast<int>(r.get_u32());
  EnergyNetParams params(dims);
  if (r.get_u32() != kNumLayers) throw Error(ErrorCategory::Parse, "checkpoint layer count mismatch");
  for (int layer = 0; layer < kNumLayers; ++layer) {
    const std::string name = r.get_string();
    const int in = static_cast<int>(r.get_u32());
    const int out = static_cast<int>(r.get_u32());
    const DenseShape& s = params.shapes()[layer];
    if (name != EnergyNetParams::layer_name(layer) || in != s.in || out != s.out) {
      throw Error(ErrorCategory::Parse, "checkpoint layer table inconsistent at " + name, layer);
    }
  }
  if (r.get_u32() != 2 * kNumLayers) throw Error(ErrorCategory::Parse, "checkpoint tensor count mismatch");
  auto read_tensor = [&](const std::string& expected, std::span<double> out) {
    const std::string name = r.get_string();
    const std::uint64_t count = r.get_u64();
    if (name != expected || count != out.size()) {
      throw Error(ErrorCategory::Parse, "checkpoint tensor " + name + " does not match " + expected);
    }
    r.get_f64s(out);
  };
  for (int layer = 0; layer < kNumLayers; ++layer) {
    read_tensor(EnergyNetParams::layer_name(layer) + ".weight", params.weight(layer));
    read_tensor(EnergyNetParams::layer_name(layer) + ".bias", params.bias(layer));
  }
  if (!r.at_end()) throw Error(ErrorCategory::Parse, "trailing bytes after checkpoint tensors");
  for (double v : params.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCategory::Numeric, "checkpoint contains non-finite parameters");
  }
  return params;
}

void save_checkpoint(const EnergyNetParams& params, const std::string& path) {
  write_file_bytes(path, encode_checkpoint(params));
}

EnergyNetParams load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace ebm3d
