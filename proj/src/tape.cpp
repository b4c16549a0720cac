#include "add/tape.hpp"

#include <algorithm>
#include <cmath>

namespace add {

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::input(Tensor v) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(v);
  n.needs_grad = true;
  return push(std::move(n));
}

Tape::Id Tape::constant(Tensor v) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(v);
  n.needs_grad = false;
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  Node n;
  n.op = Op::Matmul;
  n.value = add::matmul(nodes_[a].value, nodes_[b].value);
  n.parents = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& va = nodes_[a].value;
  const Tensor& vb = nodes_[b].value;
  if (!va.same_shape(vb)) throw DimensionError("add shape mismatch");
  Node n;
  n.op = Op::Add;
  n.value = va;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += vb[i];
  n.parents = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  const Tensor& va = nodes_[a].value;
  const Tensor& vb = nodes_[b].value;
  if (!va.same_shape(vb)) throw DimensionError("sub shape mismatch");
  Node n;
  n.op = Op::Sub;
  n.value = va;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] -= vb[i];
  n.parents = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& va = nodes_[a].value;
  const Tensor& vb = nodes_[b].value;
  if (!va.same_shape(vb)) throw DimensionError("mul shape mismatch");
  Node n;
  n.op = Op::Mul;
  n.value = va;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= vb[i];
  n.parents = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::add_bias(Id x, Id bias) {
  const Tensor& vx = nodes_[x].value;
  const Tensor& vb = nodes_[bias].value;
  if (vx.rank() != 2 || vb.rank() != 1 || vb.extent(0) != vx.extent(1)) {
    throw DimensionError("add_bias shape mismatch");
  }
  Node n;
  n.op = Op::AddBias;
  n.value = vx;
  const std::size_t m = vx.extent(0), c = vx.extent(1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < c; ++j) n.value.at(i, j) += vb[j];
  }
  n.parents = {x, bias};
  n.needs_grad = nodes_[x].needs_grad || nodes_[bias].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double s) {
  Node n;
  n.op = Op::Scale;
  n.value = nodes_[a].value;
  for (double& v : n.value.data()) v *= s;
  n.parents = {a};
  n.aux = s;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::relu(Id a) {
  Node n;
  n.op = Op::Relu;
  n.value = add::relu(nodes_[a].value);
  n.parents = {a};
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::softmax_rows(Id a) {
  Node n;
  n.op = Op::Softmax;
  n.value = add::softmax_rows(nodes_[a].value);
  n.parents = {a};
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::transpose(Id a) {
  const Tensor& v = nodes_[a].value;
  if (v.rank() != 2) throw DimensionError("transpose needs rank 2");
  Node n;
  n.op = Op::Transpose;
  n.value = Tensor({v.extent(1), v.extent(0)});
  for (std::size_t i = 0; i < v.extent(0); ++i) {
    for (std::size_t j = 0; j < v.extent(1); ++j) n.value.at(j, i) = v.at(i, j);
  }
  n.parents = {a};
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::slice_cols(Id a, std::size_t c0, std::size_t c1) {
  const Tensor& v = nodes_[a].value;
  if (v.rank() != 2 || c0 >= c1 || c1 > v.extent(1)) {
    throw DimensionError("slice_cols bad range");
  }
  Node n;
  n.op = Op::SliceCols;
  n.value = Tensor({v.extent(0), c1 - c0});
  for (std::size_t i = 0; i < v.extent(0); ++i) {
    for (std::size_t j = c0; j < c1; ++j) n.value.at(i, j - c0) = v.at(i, j);
  }
  n.parents = {a};
  n.dims = {c0, c1};
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols needs parts");
  const std::size_t m = nodes_[parts[0]].value.extent(0);
  std::size_t total = 0;
  for (Id p : parts) {
    const Tensor& v = nodes_[p].value;
    if (v.rank() != 2 || v.extent(0) != m) throw DimensionError("concat_cols row mismatch");
    total += v.extent(1);
  }
  Node n;
  n.op = Op::ConcatCols;
  n.value = Tensor({m, total});
  std::size_t off = 0;
  for (Id p : parts) {
    const Tensor& v = nodes_[p].value;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < v.extent(1); ++j) n.value.at(i, off + j) = v.at(i, j);
    }
    n.dims.push_back(off);
    off += v.extent(1);
    n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  }
  n.parents = parts;
  return push(std::move(n));
}

Tape::Id Tape::reshape(Id a, std::vector<std::size_t> shape) {
  Node n;
  n.op = Op::Reshape;
  n.value = nodes_[a].value.reshaped(std::move(shape));
  n.parents = {a};
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::bilinear_resize(Id a, std::size_t out_h, std::size_t out_w) {
  Node n;
  n.op = Op::Bilinear;
  n.value = add::bilinear_resize(nodes_[a].value, out_h, out_w);
  n.parents = {a};
  n.dims = {out_h, out_w};
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::embedding_lookup(Id table, IndexMap idx) {
  Node n;
  n.op = Op::Lookup;
  n.value = add::embedding_lookup(nodes_[table].value, idx);
  n.parents = {table};
  n.idx = std::move(idx);
  n.needs_grad = nodes_[table].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::sum_squares(Id a) {
  Node n;
  n.op = Op::SumSquares;
  double acc = 0.0;
  for (double v : nodes_[a].value.data()) acc += v * v;
  n.value = Tensor({1}, {acc});
  n.parents = {a};
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::mlp(Id x, const std::vector<std::pair<Id, Id>>& layers,
                   const std::vector<Activation>& acts) {
  if (layers.size() != acts.size()) throw DimensionError("mlp layer/activation mismatch");
  Id cur = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    cur = add_bias(matmul(cur, layers[l].first), layers[l].second);
    if (acts[l] == Activation::Relu) cur = relu(cur);
  }
  return cur;
}

Tensor& Tape::ensure_grad(Id id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() > 0) n.grad = Tensor(n.value.shape());
  if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::accumulate(Id id, const Tensor& g) {
  if (!nodes_[id].needs_grad) return;
  Tensor& dst = ensure_grad(id);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

const Tensor& Tape::grad(Id id) const {
  static const Tensor empty;
  if (nodes_[id].grad.size() == 0 && nodes_[id].value.size() != 0) {
    // never touched by backward: all-zero gradient of matching shape
    const_cast<Tape*>(this)->nodes_[id].grad = Tensor(nodes_[id].value.shape());
  }
  return nodes_[id].grad;
}

void Tape::backward(Id root) { backward(root, Tensor({1}, {1.0})); }

void Tape::backward(Id root, const Tensor& seed) {
  if (!seed.same_shape(nodes_[root].value)) {
    throw DimensionError("backward seed shape mismatch");
  }
  if (!nodes_[root].needs_grad) return;
  ensure_grad(root);
  Tensor& g = nodes_[root].grad;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (Id id = root; id >= 0; --id) {
    if (!nodes_[id].needs_grad || nodes_[id].grad.size() == 0) continue;
    backprop_node(id);
  }
}

void Tape::backprop_node(Id id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Matmul: {
      const Tensor& a = nodes_[n.parents[0]].value;
      const Tensor& b = nodes_[n.parents[1]].value;
      const std::size_t m = a.extent(0), k = a.extent(1), c = b.extent(1);
      if (nodes_[n.parents[0]].needs_grad) {
        Tensor& da = ensure_grad(n.parents[0]);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += g.at(i, j) * b.at(p, j);
            da.at(i, p) += acc;
          }
        }
      }
      if (nodes_[n.parents[1]].needs_grad) {
        Tensor& db = ensure_grad(n.parents[1]);
        for (std::size_t p = 0; p < k; ++p) {
          for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += a.at(i, p) * g.at(i, j);
            db.at(p, j) += acc;
          }
        }
      }
      break;
    }
    case Op::Add:
      accumulate(n.parents[0], g);
      accumulate(n.parents[1], g);
      break;
    case Op::Sub: {
      accumulate(n.parents[0], g);
      if (nodes_[n.parents[1]].needs_grad) {
        Tensor neg = g;
        for (double& v : neg.data()) v = -v;
        accumulate(n.parents[1], neg);
      }
      break;
    }
    case Op::Mul: {
      if (nodes_[n.parents[0]].needs_grad) {
        Tensor da = g;
        const Tensor& b = nodes_[n.parents[1]].value;
        for (std::size_t i = 0; i < da.size(); ++i) da[i] *= b[i];
        accumulate(n.parents[0], da);
      }
      if (nodes_[n.parents[1]].needs_grad) {
        Tensor db = g;
        const Tensor& a = nodes_[n.parents[0]].value;
        for (std::size_t i = 0; i < db.size(); ++i) db[i] *= a[i];
        accumulate(n.parents[1], db);
      }
      break;
    }
    case Op::AddBias: {
      accumulate(n.parents[0], g);
      if (nodes_[n.parents[1]].needs_grad) {
        Tensor& db = ensure_grad(n.parents[1]);
        const std::size_t m = g.extent(0), c = g.extent(1);
        for (std::size_t j = 0; j < c; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += g.at(i, j);
          db[j] += acc;
        }
      }
      break;
    }
    case Op::Scale: {
      Tensor da = g;
      for (double& v : da.data()) v *= n.aux;
      accumulate(n.parents[0], da);
      break;
    }
    case Op::Relu: {
      Tensor da = g;
      const Tensor& x = nodes_[n.parents[0]].value;
      for (std::size_t i = 0; i < da.size(); ++i) {
        if (x[i] <= 0.0) da[i] = 0.0;
      }
      accumulate(n.parents[0], da);
      break;
    }
    case Op::Softmax: {
      // dx_ij = y_ij * (g_ij - sum_k g_ik y_ik)
      const Tensor& y = n.value;
      Tensor da(y.shape());
      const std::size_t m = y.extent(0), c = y.extent(1);
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
        for (std::size_t j = 0; j < c; ++j) {
          da.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
        }
      }
      accumulate(n.parents[0], da);
      break;
    }
    case Op::Transpose: {
      const Tensor& v = nodes_[n.parents[0]].value;
      Tensor da(v.shape());
      for (std::size_t i = 0; i < v.extent(0); ++i) {
        for (std::size_t j = 0; j < v.extent(1); ++j) da.at(i, j) = g.at(j, i);
      }
      accumulate(n.parents[0], da);
      break;
    }
    case Op::SliceCols: {
      const Tensor& v = nodes_[n.parents[0]].value;
      Tensor da(v.shape());
      const std::size_t c0 = n.dims[0], c1 = n.dims[1];
      for (std::size_t i = 0; i < v.extent(0); ++i) {
        for (std::size_t j = c0; j < c1; ++j) da.at(i, j) = g.at(i, j - c0);
      }
      accumulate(n.parents[0], da);
      break;
    }
    case Op::ConcatCols: {
      for (std::size_t p = 0; p < n.parents.size(); ++p) {
        if (!nodes_[n.parents[p]].needs_grad) continue;
        const Tensor& v = nodes_[n.parents[p]].value;
        Tensor da(v.shape());
        const std::size_t off = n.dims[p];
        for (std::size_t i = 0; i < v.extent(0); ++i) {
          for (std::size_t j = 0; j < v.extent(1); ++j) da.at(i, j) = g.at(i, off + j);
        }
        accumulate(n.parents[p], da);
      }
      break;
    }
    case Op::Reshape: {
      accumulate(n.parents[0], g.reshaped(nodes_[n.parents[0]].value.shape()));
      break;
    }
    case Op::Bilinear: {
      const Tensor& x = nodes_[n.parents[0]].value;
      const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
      const std::size_t oh = n.dims[0], ow = n.dims[1];
      Tensor da(x.shape());
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
      for (std::size_t i = 0; i < oh; ++i) {
        std::size_t r0, r1;
        double fr;
        axis(i, h, oh, r0, r1, fr);
        for (std::size_t j = 0; j < ow; ++j) {
          std::size_t c0, c1;
          double fc;
          axis(j, w, ow, c0, c1, fc);
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double gg = g.at(i, j, ch);
            da.at(r0, c0, ch) += gg * (1.0 - fr) * (1.0 - fc);
            da.at(r0, c1, ch) += gg * (1.0 - fr) * fc;
            da.at(r1, c0, ch) += gg * fr * (1.0 - fc);
            da.at(r1, c1, ch) += gg * fr * fc;
          }
        }
      }
      accumulate(n.parents[0], da);
      break;
    }
    case Op::Lookup: {
      const Tensor& table = nodes_[n.parents[0]].value;
      Tensor da(table.shape());
      const std::size_t dim = table.extent(1);
      for (std::size_t p = 0; p < n.idx.idx.size(); ++p) {
        const std::size_t r = n.idx.idx[p];
        for (std::size_t d = 0; d < dim; ++d) da.at(r, d) += g[p * dim + d];
      }
      accumulate(n.parents[0], da);
      break;
    }
    case Op::SumSquares: {
      const Tensor& x = nodes_[n.parents[0]].value;
      Tensor da(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) da[i] = 2.0 * x[i] * g[0];
      accumulate(n.parents[0], da);
      break;
    }
  }
}

double vjp_check(
    const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build,
    const std::vector<Tensor>& inputs, const Tensor& seed, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw DomainError("vjp_check eps out of range");
  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t;
    std::vector<Tape::Id> ids;
    ids.reserve(xs.size());
    for (const Tensor& x : xs) ids.push_back(t.input(x));
    Tape::Id out = build(t, ids);
    if (!t.value(out).all_finite()) throw NumericError("vjp_check non-finite forward");
    return std::pair<Tape, Tape::Id>(std::move(t), out);
  };

  auto [tape, out] = eval(inputs);
  tape.backward(out, seed);
  std::vector<Tensor> analytic;
  {
    Tape::Id id = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k, ++id) analytic.push_back(tape.grad(id));
  }

  auto seeded_value = [&](const std::vector<Tensor>& xs) {
    auto [t, o] = eval(xs);
    const Tensor& v = t.value(o);
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * seed[i];
    if (!std::isfinite(acc)) throw NumericError("vjp_check non-finite value");
    return acc;
  };

  double max_err = 0.0;
  std::vector<Tensor> xs = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = xs[k][i];
      xs[k][i] = orig + eps;
      const double fp = seeded_value(xs);
      xs[k][i] = orig - eps;
      const double fm = seeded_value(xs);
      xs[k][i] = orig;
      const double num = (fp - fm) / (2.0 * eps);
      const double err = std::abs(analytic[k][i] - num) / (std::abs(num) + 1e-8);
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace add
