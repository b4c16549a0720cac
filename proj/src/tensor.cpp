#include "add/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace add {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    throw DimensionError("tensor data length does not match shape");
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return data_[i * shape_[1] + j];
}
double Tensor::at(std::size_t i, std::size_t j) const {
  return data_[i * shape_[1] + j];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (shape_product(shape) != data_.size()) {
    throw DimensionError("reshape changes element count");
  }
  return Tensor(std::move(shape), data_);
}

std::size_t MlpParams::input_dim() const {
  if (layers.empty()) throw DimensionError("empty MLP");
  return layers.front().weight.extent(0);
}

std::size_t MlpParams::output_dim() const {
  if (layers.empty()) throw DimensionError("empty MLP");
  return layers.back().weight.extent(1);
}

void MlpParams::validate() const {
  if (layers.empty()) throw DimensionError("empty MLP");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const MlpLayer& lay = layers[l];
    if (lay.weight.rank() != 2 || lay.bias.rank() != 1) {
      throw DimensionError("MLP layer must have matrix weight and vector bias");
    }
    if (lay.bias.extent(0) != lay.weight.extent(1)) {
      throw DimensionError("MLP bias length does not match weight columns");
    }
    if (l > 0 && layers[l - 1].weight.extent(1) != lay.weight.extent(0)) {
      throw DimensionError("MLP layer dimensions do not chain");
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul needs rank-2 tensors");
  if (a.extent(1) != b.extent(0)) throw DimensionError("matmul inner extents disagree");
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;  // fixed ascending-k order
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("softmax_rows needs a rank-2 tensor");
  const std::size_t m = x.extent(0), n = x.extent(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out.at(i, j) = std::exp(x.at(i, j) - mx);
      sum += out.at(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= sum;
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor mlp_apply(const MlpParams& params, const Tensor& x) {
  params.validate();
  if (x.rank() != 2) throw DimensionError("mlp_apply needs a rank-2 input");
  if (x.extent(1) != params.input_dim()) {
    throw DimensionError("mlp_apply input width does not match first layer");
  }
  Tensor cur = x;
  for (const MlpLayer& lay : params.layers) {
    Tensor y = matmul(cur, lay.weight);
    const std::size_t m = y.extent(0), n = y.extent(1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) y.at(i, j) += lay.bias[j];
    }
    if (lay.act == Activation::Relu) y = relu(y);
    cur = std::move(y);
  }
  return cur;
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 3) throw DimensionError("bilinear_resize needs an HxWxC tensor");
  if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize output extent is zero");
  const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  if (h == 0 || w == 0) throw DimensionError("bilinear_resize input extent is zero");
  Tensor out({out_h, out_w, c});
  auto axis = [](std::size_t i, std::size_t in, std::size_t outn, std::size_t& lo,
                 std::size_t& hi, double& frac) {
    double src = (static_cast<double>(i) + 0.5) * static_cast<double>(in) /
                     static_cast<double>(outn) -
                 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    lo = static_cast<std::size_t>(std::floor(src));
    hi = std::min(lo + 1, in - 1);
    frac = src - static_cast<double>(lo);
  };
  for (std::size_t i = 0; i < out_h; ++i) {
    std::size_t r0, r1;
    double fr;
    axis(i, h, out_h, r0, r1, fr);
    for (std::size_t j = 0; j < out_w; ++j) {
      std::size_t c0, c1;
      double fc;
      axis(j, w, out_w, c0, c1, fc);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double top = x.at(r0, c0, ch) * (1.0 - fc) + x.at(r0, c1, ch) * fc;
        double bot = x.at(r1, c0, ch) * (1.0 - fc) + x.at(r1, c1, ch) * fc;
        out.at(i, j, ch) = top * (1.0 - fr) + bot * fr;
      }
    }
  }
  return out;
}

IndexMap channel_argmax(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("channel_argmax needs an HxWxC tensor");
  const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  if (c == 0) throw DimensionError("channel_argmax needs at least one channel");
  IndexMap out;
  out.h = h;
  out.w = w;
  out.idx.resize(h * w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      std::size_t best = 0;
      double bv = x.at(i, j, 0);
      for (std::size_t ch = 1; ch < c; ++ch) {
        if (x.at(i, j, ch) > bv) {  // strict: ties resolve to lowest index
          bv = x.at(i, j, ch);
          best = ch;
        }
      }
      out.idx[i * w + j] = best;
    }
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, const IndexMap& idx) {
  if (table.rank() != 2) throw DimensionError("embedding table must be rank 2");
  const std::size_t rows = table.extent(0), dim = table.extent(1);
  Tensor out({idx.h, idx.w, dim});
  for (std::size_t p = 0; p < idx.idx.size(); ++p) {
    const std::size_t r = idx.idx[p];
    if (r >= rows) throw DomainError("embedding index out of range");
    for (std::size_t d = 0; d < dim; ++d) out[p * dim + d] = table.at(r, d);
  }
  return out;
}

}  // namespace add
