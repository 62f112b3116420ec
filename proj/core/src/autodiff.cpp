#include "bayatt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bayatt/error.hpp"

namespace bayatt {

namespace {

// 0.5 * (1 + erf(x / sqrt(2)))
double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

const Tensor& Value::tensor() const {
  require_contract(tape != nullptr, "Value: detached handle");
  return tape->value_of(id);
}

const Tensor& Tape::value_of(std::size_t id) const {
  require_contract(id < nodes_.size(), "Tape: node id out of range");
  return nodes_[id].value;
}

Value Tape::emplace(Tensor value, std::vector<std::size_t> inputs,
                    std::function<void(Tape&, std::span<const double>)> back, bool is_leaf) {
  const std::size_t id = nodes_.size();
  for (std::size_t in : inputs)
    require(in < id, ErrorCode::internal, "Tape: input does not precede node (cycle)");
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(back), is_leaf});
  if (is_leaf) leaves_.push_back(id);
  return Value{id, this};
}

Value Tape::leaf(Tensor t) { return emplace(std::move(t), {}, nullptr, true); }

Value Tape::constant(Tensor t) { return emplace(std::move(t), {}, nullptr, false); }

std::vector<double>& Tape::adjoint(std::size_t id) {
  if (adj_[id].empty()) adj_[id].assign(nodes_[id].value.size(), 0.0);
  return adj_[id];
}

Tape::GradMap Tape::backward(const Value& loss) {
  require_contract(loss.tape == this, "backward: loss from another tape");
  require_contract(loss.tensor().size() == 1, "backward: loss must be scalar");
  adj_.assign(nodes_.size(), {});
  adjoint(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (adj_[id].empty()) continue;  // not reachable from the loss
    if (nodes_[id].back) nodes_[id].back(*this, adj_[id]);
  }
  GradMap grads;
  for (std::size_t id : leaves_) {
    if (adj_[id].empty()) {
      grads.emplace(id, Tensor::zeros(nodes_[id].value.shape()));
    } else {
      grads.emplace(id, Tensor::unchecked(nodes_[id].value.shape(), std::move(adj_[id])));
    }
  }
  adj_.clear();
  return grads;
}

Value Tape::add(Value a, Value b) {
  require_contract(same_shape(a.tensor(), b.tensor()), "add: shape mismatch");
  auto da = a.tensor().data(), db = b.tensor().data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return emplace(Tensor::unchecked(a.tensor().shape(), std::move(out)), {a.id, b.id},
                 [ia = a.id, ib = b.id](Tape& t, std::span<const double> g) {
                   auto& ga = t.adjoint(ia);
                   auto& gb = t.adjoint(ib);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     ga[i] += g[i];
                     gb[i] += g[i];
                   }
                 });
}

Value Tape::sub(Value a, Value b) {
  require_contract(same_shape(a.tensor(), b.tensor()), "sub: shape mismatch");
  auto da = a.tensor().data(), db = b.tensor().data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  return emplace(Tensor::unchecked(a.tensor().shape(), std::move(out)), {a.id, b.id},
                 [ia = a.id, ib = b.id](Tape& t, std::span<const double> g) {
                   auto& ga = t.adjoint(ia);
                   auto& gb = t.adjoint(ib);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     ga[i] += g[i];
                     gb[i] -= g[i];
                   }
                 });
}

Value Tape::mul(Value a, Value b) {
  require_contract(same_shape(a.tensor(), b.tensor()), "mul: shape mismatch");
  Tensor ta = a.tensor(), tb = b.tensor();
  auto da = ta.data(), db = tb.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  return emplace(Tensor::unchecked(ta.shape(), std::move(out)), {a.id, b.id},
                 [ia = a.id, ib = b.id, ta, tb](Tape& t, std::span<const double> g) {
                   auto& ga = t.adjoint(ia);
                   auto& gb = t.adjoint(ib);
                   auto va = ta.data(), vb = tb.data();
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     ga[i] += g[i] * vb[i];
                     gb[i] += g[i] * va[i];
                   }
                 });
}

Value Tape::scale(Value a, double s) {
  require_contract(std::isfinite(s), "scale: non-finite factor");
  auto da = a.tensor().data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * s;
  return emplace(Tensor::unchecked(a.tensor().shape(), std::move(out)), {a.id},
                 [ia = a.id, s](Tape& t, std::span<const double> g) {
                   auto& ga = t.adjoint(ia);
                   for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
                 });
}

Value Tape::add_scalar(Value a, double s) {
  require_contract(std::isfinite(s), "add_scalar: non-finite addend");
  auto da = a.tensor().data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + s;
  return emplace(Tensor::unchecked(a.tensor().shape(), std::move(out)), {a.id},
                 [ia = a.id](Tape& t, std::span<const double> g) {
                   auto& ga = t.adjoint(ia);
                   for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                 });
}

Value Tape::add_rowvec(Value a, Value row) {
  const Tensor& ta = a.tensor();
  const Tensor& tr = row.tensor();
  require_contract(ta.rank() == 2 && tr.rank() == 1 && ta.shape()[1] == tr.shape()[0],
                   "add_rowvec: expected [n,m] + [m]");
  const std::size_t n = ta.shape()[0], m = ta.shape()[1];
  auto da = ta.data(), dr = tr.data();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = da[i * m + j] + dr[j];
  return emplace(Tensor::unchecked(ta.shape(), std::move(out)), {a.id, row.id},
                 [ia = a.id, ir = row.id, n, m](Tape& t, std::span<const double> g) {
                   auto& ga = t.adjoint(ia);
                   auto& gr = t.adjoint(ir);
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t j = 0; j < m; ++j) {
                       ga[i * m + j] += g[i * m + j];
                       gr[j] += g[i * m + j];
                     }
                 });
}

Value Tape::matmul(Value a, Value b) {
  const Tensor& ta = a.tensor();
  const Tensor& tb = b.tensor();
  require_contract(ta.rank() == 2 && tb.rank() == 2 && ta.shape()[1] == tb.shape()[0],
                   "matmul: incompatible shapes");
  const std::size_t n = ta.shape()[0], k = ta.shape()[1], m = tb.shape()[1];
  auto da = ta.data(), db = tb.data();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double av = da[i * k + l];
      const double* brow = &db[l * m];
      double* crow = &out[i * m];
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  return emplace(
      Tensor::unchecked({n, m}, std::move(out)), {a.id, b.id},
      [ia = a.id, ib = b.id, ta, tb, n, k, m](Tape& t, std::span<const double> g) {
        auto& ga = t.adjoint(ia);
        auto& gb = t.adjoint(ib);
        auto va = ta.data(), vb = tb.data();
        // dA = g . B^T
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            double acc = 0.0;
            const double* grow = &g[i * m];
            const double* brow = &vb[l * m];
            for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
            ga[i * k + l] += acc;
          }
        // dB = A^T . g
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            const double av = va[i * k + l];
            const double* grow = &g[i * m];
            double* gbrow = &gb[l * m];
            for (std::size_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
          }
      });
}

Value Tape::relu(Value a) {
  Tensor ta = a.tensor();
  auto da = ta.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] > 0.0 ? da[i] : 0.0;
  return emplace(Tensor::unchecked(ta.shape(), std::move(out)), {a.id},
                 [ia = a.id, ta](Tape& t, std::span<const double> g) {
                   auto& ga = t.adjoint(ia);
                   auto va = ta.data();
                   for (std::size_t i = 0; i < g.size(); ++i)
                     if (va[i] > 0.0) ga[i] += g[i];
                 });
}

Value Tape::gelu(Value a) {
  Tensor ta = a.tensor();
  auto da = ta.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * norm_cdf(da[i]);
  return emplace(Tensor::unchecked(ta.shape(), std::move(out)), {a.id},
                 [ia = a.id, ta](Tape& t, std::span<const double> g) {
                   auto& ga = t.adjoint(ia);
                   auto va = ta.data();
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const double x = va[i];
                     ga[i] += g[i] * (norm_cdf(x) + x * norm_pdf(x));
                   }
                 });
}

Value Tape::conv2d(Value x, Value w, Value b, std::size_t stride) {
  const Tensor& tx = x.tensor();
  const Tensor& tw = w.tensor();
  const Tensor& tb = b.tensor();
  require_contract(stride >= 1, "conv2d: stride must be >= 1");
  require_contract(tx.rank() == 4 && tw.rank() == 4 && tb.rank() == 1,
                   "conv2d: expected x[n,ic,h,w], w[oc,ic,kh,kw], b[oc]");
  const std::size_t n = tx.shape()[0], ic = tx.shape()[1], h = tx.shape()[2], wd = tx.shape()[3];
  const std::size_t oc = tw.shape()[0], kh = tw.shape()[2], kw = tw.shape()[3];
  require_contract(tw.shape()[1] == ic && tb.shape()[0] == oc, "conv2d: channel mismatch");
  require_contract(h >= kh && wd >= kw, "conv2d: kernel larger than input");
  const std::size_t oh = (h - kh) / stride + 1;
  const std::size_t ow = (wd - kw) / stride + 1;

  auto dx = tx.data(), dw = tw.data(), dbias = tb.data();
  std::vector<double> out(n * oc * oh * ow, 0.0);
  auto xat = [&](std::size_t ni, std::size_t ci, std::size_t yi, std::size_t xi) {
    return dx[((ni * ic + ci) * h + yi) * wd + xi];
  };
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t co = 0; co < oc; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = dbias[co];
          for (std::size_t ci = 0; ci < ic; ++ci)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx)
                acc += xat(ni, ci, oy * stride + ky, ox * stride + kx) *
                       dw[((co * ic + ci) * kh + ky) * kw + kx];
          out[((ni * oc + co) * oh + oy) * ow + ox] = acc;
        }

  Tensor tx_cap = tx, tw_cap = tw;
  return emplace(
      Tensor::unchecked({n, oc, oh, ow}, std::move(out)), {x.id, w.id, b.id},
      [ix = x.id, iw = w.id, ib = b.id, tx_cap, tw_cap, n, ic, h, wd, oc, kh, kw, oh, ow,
       stride](Tape& t, std::span<const double> g) {
        auto& gx = t.adjoint(ix);
        auto& gw = t.adjoint(iw);
        auto& gb = t.adjoint(ib);
        auto vx = tx_cap.data(), vw = tw_cap.data();
        for (std::size_t ni = 0; ni < n; ++ni)
          for (std::size_t co = 0; co < oc; ++co)
            for (std::size_t oy = 0; oy < oh; ++oy)
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const double go = g[((ni * oc + co) * oh + oy) * ow + ox];
                gb[co] += go;
                for (std::size_t ci = 0; ci < ic; ++ci)
                  for (std::size_t ky = 0; ky < kh; ++ky)
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                      const std::size_t yy = oy * stride + ky, xx = ox * stride + kx;
                      const std::size_t xoff = ((ni * ic + ci) * h + yy) * wd + xx;
                      const std::size_t woff = ((co * ic + ci) * kh + ky) * kw + kx;
                      gx[xoff] += go * vw[woff];
                      gw[woff] += go * vx[xoff];
                    }
              }
      });
}

Value Tape::reshape(Value a, Tensor::Shape shape) {
  Tensor out = a.tensor().reshaped(std::move(shape));
  return emplace(std::move(out), {a.id}, [ia = a.id](Tape& t, std::span<const double> g) {
    auto& ga = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Value Tape::sum_all(Value a) {
  auto da = a.tensor().data();
  double s = 0.0;
  for (double v : da) s += v;
  const std::size_t n = da.size();
  return emplace(Tensor::unchecked({}, {s}), {a.id},
                 [ia = a.id, n](Tape& t, std::span<const double> g) {
                   auto& ga = t.adjoint(ia);
                   for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
                 });
}

Value Tape::mean_all(Value a) {
  auto da = a.tensor().data();
  require_contract(!da.empty(), "mean_all: empty tensor");
  double s = 0.0;
  for (double v : da) s += v;
  const std::size_t n = da.size();
  const double inv = 1.0 / static_cast<double>(n);
  return emplace(Tensor::unchecked({}, {s * inv}), {a.id},
                 [ia = a.id, n, inv](Tape& t, std::span<const double> g) {
                   auto& ga = t.adjoint(ia);
                   for (std::size_t i = 0; i < n; ++i) ga[i] += g[0] * inv;
                 });
}

Value Tape::channel_affine(Value x, std::vector<double> scale, std::vector<double> shift) {
  const Tensor& tx = x.tensor();
  require_contract(tx.rank() >= 2, "channel_affine: expected batched input");
  const std::size_t c = tx.shape()[1];
  require_contract(scale.size() == c && shift.size() == c, "channel_affine: channel mismatch");
  std::size_t inner = 1;
  for (std::size_t d = 2; d < tx.rank(); ++d) inner *= tx.shape()[d];
  const std::size_t n = tx.shape()[0];
  auto dx = tx.data();
  std::vector<double> out(dx.size());
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t ci = 0; ci < c; ++ci) {
      const std::size_t base = (ni * c + ci) * inner;
      for (std::size_t k = 0; k < inner; ++k) out[base + k] = dx[base + k] * scale[ci] + shift[ci];
    }
  return emplace(Tensor::unchecked(tx.shape(), std::move(out)), {x.id},
                 [ix = x.id, sc = std::move(scale), n, c, inner](Tape& t,
                                                                 std::span<const double> g) {
                   auto& gx = t.adjoint(ix);
                   for (std::size_t ni = 0; ni < n; ++ni)
                     for (std::size_t ci = 0; ci < c; ++ci) {
                       const std::size_t base = (ni * c + ci) * inner;
                       for (std::size_t k = 0; k < inner; ++k) gx[base + k] += g[base + k] * sc[ci];
                     }
                 });
}

Value Tape::softmax_cross_entropy(Value logits, std::vector<int> labels) {
  const Tensor& tl = logits.tensor();
  require_contract(tl.rank() == 2, "softmax_cross_entropy: logits must be [n,classes]");
  const std::size_t n = tl.shape()[0], c = tl.shape()[1];
  require_contract(labels.size() == n, "softmax_cross_entropy: label count mismatch");
  for (int y : labels)
    require_contract(y >= 0 && static_cast<std::size_t>(y) < c,
                     "softmax_cross_entropy: label out of range");
  auto dl = tl.data();
  std::vector<double> probs(n * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &dl[i * c];
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    const double log_denom = std::log(denom);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - mx) / denom;
    loss -= (row[static_cast<std::size_t>(labels[i])] - mx - log_denom);
  }
  loss /= static_cast<double>(n);
  return emplace(Tensor::unchecked({}, {loss}), {logits.id},
                 [il = logits.id, probs = std::move(probs), labels = std::move(labels), n,
                  c](Tape& t, std::span<const double> g) {
                   auto& gl = t.adjoint(il);
                   const double inv_n = 1.0 / static_cast<double>(n);
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t j = 0; j < c; ++j) {
                       double p = probs[i * c + j];
                       if (j == static_cast<std::size_t>(labels[i])) p -= 1.0;
                       gl[i * c + j] += g[0] * p * inv_n;
                     }
                 });
}

}  // namespace bayatt
