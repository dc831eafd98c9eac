#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jigen/tensor.hpp"

namespace jigen {

// A named trainable tensor. gradient and velocity always mirror value's
// shape; both start at zero so a parameter never exposes stale gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor velocity;  // SGD momentum state

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.shape),
        velocity(value.shape) {}

  void zero_grad() { grad.fill(0.0f); }
};

// v <- momentum * v + g;  theta <- theta - lr * v;  g <- 0.
void sgd_step(const std::vector<Parameter*>& params, float lr, float momentum);

// Reverse-mode tape. Operations evaluate eagerly at record time, so node
// order is already topological; backward walks it in reverse. One tape per
// forward pass; parameter gradients accumulate across tapes until a step
// zeroes them.
template <typename T>
class TapeT {
 public:
  struct ValueRef {
    int id = -1;
  };

  using BackFn = std::function<void(TapeT&, int)>;

  // ---- leaves ------------------------------------------------------------

  ValueRef input(TensorT<T> t) { return ValueRef{push(std::move(t), {}, {})}; }

  ValueRef input_of(const Tensor& t) {
    if constexpr (std::is_same_v<T, float>) {
      return input(t);
    } else {
      return input(tensor_cast<T>(t));
    }
  }

  ValueRef param(Parameter& p) {
    TensorT<T> val;
    auto it = overrides_.find(&p);
    if (it != overrides_.end()) {
      val = it->second;
    } else {
      val = tensor_cast<T>(p.value);
    }
    const int id = push(std::move(val), {},
                        [pp = &p](TapeT& t, int self) {
                          auto& g = t.node(self).grad;
                          for (size_t i = 0; i < g.v.size(); ++i) {
                            pp->grad.v[i] += static_cast<float>(g.v[i]);
                          }
                        });
    return ValueRef{id};
  }

  // Shadow values consulted by param(); lets the finite-difference checker
  // perturb coordinates in full double precision.
  void override_param(const Parameter* p, TensorT<T> value) {
    overrides_[p] = std::move(value);
  }

  // ---- ops ---------------------------------------------------------------

  // Cross-correlation, NCHW input, OIHW weights, no bias.
  ValueRef conv2d(ValueRef x, ValueRef w, int stride, int padding) {
    const auto& xt = value(x);
    const auto& wt = value(w);
    if (xt.rank() != 4 || wt.rank() != 4) {
      throw std::invalid_argument("conv2d: expects NCHW input and OIHW weights");
    }
    const int n = xt.dim(0), cin = xt.dim(1), h = xt.dim(2), wd = xt.dim(3);
    const int cout = wt.dim(0), kh = wt.dim(2), kw = wt.dim(3);
    if (wt.dim(1) != cin) {
      throw std::invalid_argument("conv2d: channel mismatch, input " +
                                  std::to_string(cin) + " vs weights " +
                                  std::to_string(wt.dim(1)));
    }
    if (stride < 1 || padding < 0) {
      throw std::invalid_argument("conv2d: bad stride/padding");
    }
    const int oh = (h + 2 * padding - kh) / stride + 1;
    const int ow = (wd + 2 * padding - kw) / stride + 1;
    if (h + 2 * padding < kh || wd + 2 * padding < kw || oh < 1 || ow < 1) {
      throw std::invalid_argument("conv2d: kernel does not fit input");
    }

    const int64_t ncols = static_cast<int64_t>(n) * oh * ow;
    const int krows = cin * kh * kw;
    auto cols = std::make_shared<std::vector<T>>();
    im2col(xt, kh, kw, stride, padding, oh, ow, *cols);

    std::vector<T> buf(static_cast<size_t>(cout) * ncols);
    {
      CMap wm(wt.v.data(), cout, krows);
      CMap cm(cols->data(), krows, ncols);
      Map om(buf.data(), cout, ncols);
      om.noalias() = wm * cm;
    }
    TensorT<T> out({n, cout, oh, ow});
    const int64_t ohw = static_cast<int64_t>(oh) * ow;
    for (int in = 0; in < n; ++in) {
      for (int co = 0; co < cout; ++co) {
        std::copy_n(buf.data() + static_cast<size_t>(co) * ncols + in * ohw,
                    ohw,
                    out.v.data() + (static_cast<size_t>(in) * cout + co) * ohw);
      }
    }

    const int id = push(
        std::move(out), {x.id, w.id},
        [=](TapeT& t, int self) {
          const auto& g = t.node(self).grad;
          const auto& xt2 = t.node(t.node(self).in[0]).out;
          const auto& wt2 = t.node(t.node(self).in[1]).out;
          // regroup dOut as [cout, ncols]
          std::vector<T> gbuf(static_cast<size_t>(cout) * ncols);
          for (int in = 0; in < n; ++in) {
            for (int co = 0; co < cout; ++co) {
              std::copy_n(
                  g.v.data() + (static_cast<size_t>(in) * cout + co) * ohw, ohw,
                  gbuf.data() + static_cast<size_t>(co) * ncols + in * ohw);
            }
          }
          CMap gm(gbuf.data(), cout, ncols);
          {  // dW += dOut * cols^T
            auto& gw = t.grad_buf(t.node(self).in[1]);
            CMap cm(cols->data(), krows, ncols);
            Map gwm(gw.v.data(), cout, krows);
            gwm.noalias() += gm * cm.transpose();
          }
          {  // dX += col2im(W^T * dOut)
            std::vector<T> dcols(static_cast<size_t>(krows) * ncols);
            CMap wm(wt2.v.data(), cout, krows);
            Map dcm(dcols.data(), krows, ncols);
            dcm.noalias() = wm.transpose() * gm;
            auto& gx = t.grad_buf(t.node(self).in[0]);
            col2im(dcols, xt2.shape, kh, kw, stride, padding, oh, ow, gx);
          }
        });
    return ValueRef{id};
  }

  // Backward routes gradient to the first maximal element of each window.
  ValueRef maxpool2d(ValueRef x, int window, int stride) {
    const auto& xt = value(x);
    if (xt.rank() != 4) throw std::invalid_argument("maxpool2d: expects NCHW");
    const int n = xt.dim(0), c = xt.dim(1), h = xt.dim(2), w = xt.dim(3);
    if (window < 1 || window > h || window > w) {
      throw std::invalid_argument("maxpool2d: window " +
                                  std::to_string(window) +
                                  " larger than input " + shape_str(xt.shape));
    }
    if (stride < 1) throw std::invalid_argument("maxpool2d: bad stride");
    const int oh = (h - window) / stride + 1;
    const int ow = (w - window) / stride + 1;

    TensorT<T> out({n, c, oh, ow});
    auto argmax = std::make_shared<std::vector<int32_t>>(out.v.size());
    size_t o = 0;
    for (int in = 0; in < n; ++in) {
      for (int ic = 0; ic < c; ++ic) {
        const T* plane = &xt.v[(static_cast<size_t>(in) * c + ic) * h * w];
        for (int i = 0; i < oh; ++i) {
          for (int j = 0; j < ow; ++j) {
            int best = (i * stride) * w + (j * stride);
            T bv = plane[best];
            for (int di = 0; di < window; ++di) {
              for (int dj = 0; dj < window; ++dj) {
                const int p = (i * stride + di) * w + (j * stride + dj);
                if (plane[p] > bv) {  // strict: first occurrence wins ties
                  bv = plane[p];
                  best = p;
                }
              }
            }
            out.v[o] = bv;
            (*argmax)[o] = best;
            ++o;
          }
        }
      }
    }

    const int id = push(std::move(out), {x.id},
                        [=](TapeT& t, int self) {
                          const auto& g = t.node(self).grad;
                          auto& gx = t.grad_buf(t.node(self).in[0]);
                          size_t oo = 0;
                          const size_t plane = static_cast<size_t>(h) * w;
                          const size_t per_nc = static_cast<size_t>(oh) * ow;
                          for (int in = 0; in < n; ++in) {
                            for (int ic = 0; ic < c; ++ic) {
                              T* gp = &gx.v[(static_cast<size_t>(in) * c + ic) *
                                            plane];
                              for (size_t k = 0; k < per_nc; ++k, ++oo) {
                                gp[(*argmax)[oo]] += g.v[oo];
                              }
                            }
                          }
                        });
    node(id).kink = *argmax;
    return ValueRef{id};
  }

  // x [B,D] * w [D,K] + b [K].
  ValueRef affine(ValueRef x, ValueRef w, ValueRef b) {
    const auto& xt = value(x);
    const auto& wt = value(w);
    const auto& bt = value(b);
    if (xt.rank() != 2 || wt.rank() != 2 || bt.rank() != 1) {
      throw std::invalid_argument("affine: expects [B,D], [D,K], [K]");
    }
    const int bsz = xt.dim(0), d = xt.dim(1), k = wt.dim(1);
    if (wt.dim(0) != d || bt.dim(0) != k) {
      throw std::invalid_argument("affine: shape mismatch " +
                                  shape_str(xt.shape) + " x " +
                                  shape_str(wt.shape) + " + " +
                                  shape_str(bt.shape));
    }
    TensorT<T> out({bsz, k});
    {
      CMap xm(xt.v.data(), bsz, d);
      CMap wm(wt.v.data(), d, k);
      Map om(out.v.data(), bsz, k);
      om.noalias() = xm * wm;
      for (int r = 0; r < bsz; ++r) {
        for (int j = 0; j < k; ++j) out.at2(r, j) += bt.v[static_cast<size_t>(j)];
      }
    }
    const int id = push(
        std::move(out), {x.id, w.id, b.id},
        [=](TapeT& t, int self) {
          const auto& g = t.node(self).grad;
          const auto& xt2 = t.node(t.node(self).in[0]).out;
          const auto& wt2 = t.node(t.node(self).in[1]).out;
          CMap gm(g.v.data(), bsz, k);
          {
            auto& gx = t.grad_buf(t.node(self).in[0]);
            CMap wm(wt2.v.data(), d, k);
            Map gxm(gx.v.data(), bsz, d);
            gxm.noalias() += gm * wm.transpose();
          }
          {
            auto& gw = t.grad_buf(t.node(self).in[1]);
            CMap xm(xt2.v.data(), bsz, d);
            Map gwm(gw.v.data(), d, k);
            gwm.noalias() += xm.transpose() * gm;
          }
          {
            auto& gb = t.grad_buf(t.node(self).in[2]);
            for (int r = 0; r < bsz; ++r) {
              for (int j = 0; j < k; ++j) gb.v[static_cast<size_t>(j)] += g.at2(r, j);
            }
          }
        });
    return ValueRef{id};
  }

  ValueRef relu(ValueRef x) {
    const auto& xt = value(x);
    TensorT<T> out(xt.shape);
    for (size_t i = 0; i < xt.v.size(); ++i) {
      out.v[i] = xt.v[i] > T(0) ? xt.v[i] : T(0);
    }
    const int id = push(std::move(out), {x.id},
                        [](TapeT& t, int self) {
                          const auto& g = t.node(self).grad;
                          const auto& xin = t.node(t.node(self).in[0]).out;
                          auto& gx = t.grad_buf(t.node(self).in[0]);
                          for (size_t i = 0; i < g.v.size(); ++i) {
                            if (xin.v[i] > T(0)) gx.v[i] += g.v[i];
                          }
                        });
    // Sign pattern, packed; part of the kink signature.
    auto& kw_ = node(id).kink;
    const auto& xin = node(node(id).in[0]).out;
    kw_.assign((xin.v.size() + 31) / 32, 0);
    for (size_t i = 0; i < xin.v.size(); ++i) {
      if (xin.v[i] > T(0)) kw_[i / 32] |= int32_t(1) << (i % 32);
    }
    return ValueRef{id};
  }

  // NCHW -> NC spatial mean.
  ValueRef global_avg_pool(ValueRef x) {
    const auto& xt = value(x);
    if (xt.rank() != 4) {
      throw std::invalid_argument("global_avg_pool: expects NCHW");
    }
    const int n = xt.dim(0), c = xt.dim(1);
    const int64_t hw = static_cast<int64_t>(xt.dim(2)) * xt.dim(3);
    TensorT<T> out({n, c});
    for (int in = 0; in < n; ++in) {
      for (int ic = 0; ic < c; ++ic) {
        const T* p = &xt.v[(static_cast<size_t>(in) * c + ic) * hw];
        double acc = 0.0;
        for (int64_t i = 0; i < hw; ++i) acc += static_cast<double>(p[i]);
        out.at2(in, ic) = static_cast<T>(acc / static_cast<double>(hw));
      }
    }
    const int id = push(std::move(out), {x.id},
                        [n, c, hw](TapeT& t, int self) {
                          const auto& g = t.node(self).grad;
                          auto& gx = t.grad_buf(t.node(self).in[0]);
                          for (int in = 0; in < n; ++in) {
                            for (int ic = 0; ic < c; ++ic) {
                              const T gv = g.at2(in, ic) / static_cast<T>(hw);
                              T* p = &gx.v[(static_cast<size_t>(in) * c + ic) *
                                           hw];
                              for (int64_t i = 0; i < hw; ++i) p[i] += gv;
                            }
                          }
                        });
    return ValueRef{id};
  }

  // Mask-weighted cross entropy: sum_i mask_i * (-log softmax(row_i)[y_i])
  // divided by the number of rows with positive mask. Zero-mask rows
  // contribute nothing to value or gradient; an all-zero mask yields 0.
  ValueRef softmax_cross_entropy(ValueRef logits,
                                 const std::vector<int>& labels,
                                 const std::vector<double>& mask) {
    const auto& lt = value(logits);
    if (lt.rank() != 2) {
      throw std::invalid_argument("softmax_cross_entropy: expects [B,K]");
    }
    const int b = lt.dim(0), k = lt.dim(1);
    if (static_cast<int>(labels.size()) != b ||
        static_cast<int>(mask.size()) != b) {
      throw std::invalid_argument(
          "softmax_cross_entropy: labels/mask length must equal batch size");
    }
    for (int i = 0; i < b; ++i) {
      if (labels[static_cast<size_t>(i)] < 0 ||
          labels[static_cast<size_t>(i)] >= k) {
        throw std::invalid_argument("softmax_cross_entropy: label " +
                                    std::to_string(labels[static_cast<size_t>(i)]) +
                                    " out of range [0," + std::to_string(k) +
                                    ") at row " + std::to_string(i));
      }
      if (mask[static_cast<size_t>(i)] < 0.0) {
        throw std::invalid_argument("softmax_cross_entropy: negative mask");
      }
    }

    auto probs = std::make_shared<std::vector<T>>(lt.v.size());
    int active = 0;
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
      const T* row = &lt.v[static_cast<size_t>(i) * k];
      double m = static_cast<double>(row[0]);
      for (int j = 1; j < k; ++j) m = std::max(m, static_cast<double>(row[j]));
      double se = 0.0;
      for (int j = 0; j < k; ++j) se += std::exp(static_cast<double>(row[j]) - m);
      const double lse = m + std::log(se);
      for (int j = 0; j < k; ++j) {
        (*probs)[static_cast<size_t>(i) * k + j] =
            static_cast<T>(std::exp(static_cast<double>(row[j]) - lse));
      }
      if (mask[static_cast<size_t>(i)] > 0.0) {
        ++active;
        loss += mask[static_cast<size_t>(i)] *
                (lse - static_cast<double>(row[labels[static_cast<size_t>(i)]]));
      }
    }
    const double denom = active > 0 ? static_cast<double>(active) : 1.0;
    TensorT<T> out = TensorT<T>::scalar(static_cast<T>(loss / denom));

    const int id = push(
        std::move(out), {logits.id},
        [probs, labels, mask, b, k, denom](TapeT& t, int self) {
          const T go = t.node(self).grad.v[0];
          auto& gl = t.grad_buf(t.node(self).in[0]);
          for (int i = 0; i < b; ++i) {
            const double mi = mask[static_cast<size_t>(i)];
            if (mi <= 0.0) continue;
            const T scale = go * static_cast<T>(mi / denom);
            for (int j = 0; j < k; ++j) {
              const size_t idx = static_cast<size_t>(i) * k + j;
              T q = (*probs)[idx];
              if (j == labels[static_cast<size_t>(i)]) q -= T(1);
              gl.v[idx] += scale * q;
            }
          }
        });
    return ValueRef{id};
  }

  // Mean over rows of the Shannon entropy of softmax(row); in [0, ln K].
  ValueRef entropy(ValueRef logits) {
    const auto& lt = value(logits);
    if (lt.rank() != 2 || lt.dim(0) < 1) {
      throw std::invalid_argument("entropy: expects [B,K] with B >= 1");
    }
    const int b = lt.dim(0), k = lt.dim(1);
    auto probs = std::make_shared<std::vector<T>>(lt.v.size());
    auto row_h = std::make_shared<std::vector<T>>(static_cast<size_t>(b));
    double total = 0.0;
    for (int i = 0; i < b; ++i) {
      const T* row = &lt.v[static_cast<size_t>(i) * k];
      double m = static_cast<double>(row[0]);
      for (int j = 1; j < k; ++j) m = std::max(m, static_cast<double>(row[j]));
      double se = 0.0;
      for (int j = 0; j < k; ++j) se += std::exp(static_cast<double>(row[j]) - m);
      const double lse = m + std::log(se);
      double h = 0.0;
      for (int j = 0; j < k; ++j) {
        const double q = std::exp(static_cast<double>(row[j]) - lse);
        (*probs)[static_cast<size_t>(i) * k + j] = static_cast<T>(q);
        if (q > 0.0) h -= q * std::log(q);
      }
      (*row_h)[static_cast<size_t>(i)] = static_cast<T>(h);
      total += h;
    }
    TensorT<T> out = TensorT<T>::scalar(static_cast<T>(total / b));

    const int id = push(std::move(out), {logits.id},
                        [probs, row_h, b, k](TapeT& t, int self) {
                          const T go = t.node(self).grad.v[0];
                          auto& gl = t.grad_buf(t.node(self).in[0]);
                          const T inv_b = T(1) / static_cast<T>(b);
                          for (int i = 0; i < b; ++i) {
                            const T h = (*row_h)[static_cast<size_t>(i)];
                            for (int j = 0; j < k; ++j) {
                              const size_t idx = static_cast<size_t>(i) * k + j;
                              const T q = (*probs)[idx];
                              if (q <= T(0)) continue;
                              // dH/dz_j = -q_j (log q_j + H)
                              gl.v[idx] +=
                                  go * inv_b * (-q * (std::log(q) + h));
                            }
                          }
                        });
    return ValueRef{id};
  }

  // Gather rows of a [B, ...] tensor; backward scatters.
  ValueRef select_rows(ValueRef x, std::vector<int> rows) {
    const auto& xt = value(x);
    if (xt.rank() < 1) throw std::invalid_argument("select_rows: rank >= 1");
    const int b = xt.dim(0);
    const int64_t stride = xt.size() / b;
    for (int r : rows) {
      if (r < 0 || r >= b) {
        throw std::invalid_argument("select_rows: row " + std::to_string(r) +
                                    " out of range");
      }
    }
    std::vector<int> oshape = xt.shape;
    oshape[0] = static_cast<int>(rows.size());
    TensorT<T> out(oshape);
    for (size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(xt.v.data() + static_cast<size_t>(rows[i]) * stride, stride,
                  out.v.data() + i * stride);
    }
    const int id = push(std::move(out), {x.id},
                        [rows, stride](TapeT& t, int self) {
                          const auto& g = t.node(self).grad;
                          auto& gx = t.grad_buf(t.node(self).in[0]);
                          for (size_t i = 0; i < rows.size(); ++i) {
                            const T* src = g.v.data() + i * stride;
                            T* dst = gx.v.data() +
                                     static_cast<size_t>(rows[i]) * stride;
                            for (int64_t j = 0; j < stride; ++j) dst[j] += src[j];
                          }
                        });
    return ValueRef{id};
  }

  ValueRef add(ValueRef a, ValueRef b) {
    const auto& at = value(a);
    const auto& bt = value(b);
    if (at.shape != bt.shape) {
      throw std::invalid_argument("add: shape mismatch " + shape_str(at.shape) +
                                  " vs " + shape_str(bt.shape));
    }
    TensorT<T> out(at.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = at.v[i] + bt.v[i];
    const int id = push(std::move(out), {a.id, b.id},
                        [](TapeT& t, int self) {
                          const auto& g = t.node(self).grad;
                          auto& ga = t.grad_buf(t.node(self).in[0]);
                          auto& gb = t.grad_buf(t.node(self).in[1]);
                          for (size_t i = 0; i < g.v.size(); ++i) {
                            ga.v[i] += g.v[i];
                            gb.v[i] += g.v[i];
                          }
                        });
    return ValueRef{id};
  }

  ValueRef scale(ValueRef x, T c) {
    const auto& xt = value(x);
    TensorT<T> out(xt.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = c * xt.v[i];
    const int id = push(std::move(out), {x.id},
                        [c](TapeT& t, int self) {
                          const auto& g = t.node(self).grad;
                          auto& gx = t.grad_buf(t.node(self).in[0]);
                          for (size_t i = 0; i < g.v.size(); ++i) {
                            gx.v[i] += c * g.v[i];
                          }
                        });
    return ValueRef{id};
  }

  // Escape hatch for custom nodes (used by tests to model wrong backward
  // rules); back receives this tape and the node id.
  ValueRef custom(std::vector<ValueRef> ins, TensorT<T> out, BackFn back) {
    std::vector<int> in_ids;
    in_ids.reserve(ins.size());
    for (auto r : ins) in_ids.push_back(r.id);
    return ValueRef{push(std::move(out), std::move(in_ids), std::move(back))};
  }

  // ---- results -----------------------------------------------------------

  const TensorT<T>& value(ValueRef r) const { return nodes_[check(r)].out; }

  T scalar_value(ValueRef r) const { return value(r).item(); }

  // dLoss/d(node); zeros when the node was not reached by backward.
  TensorT<T> grad_of(ValueRef r) const {
    const auto& n = nodes_[check(r)];
    if (n.grad.v.empty()) return TensorT<T>(n.out.shape);
    return n.grad;
  }

  // Accumulates dLoss/dtheta into every reachable Parameter's gradient.
  // Parameters not on the path to loss are untouched (they stay at whatever
  // they held; zero unless a previous backward reached them).
  void backward(ValueRef loss) {
    auto& ln = nodes_[check(loss)];
    if (!ln.out.is_scalar()) {
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  shape_str(ln.out.shape));
    }
    grad_buf(loss.id).v[0] = T(1);
    for (int id = loss.id; id >= 0; --id) {
      auto& n = nodes_[static_cast<size_t>(id)];
      if (n.grad.v.empty() || !n.back) continue;
      n.back(*this, id);
    }
  }

  // Discrete structure of the forward pass: relu sign patterns and maxpool
  // argmax choices. Two evaluations with different signatures straddle a
  // non-differentiable point between them.
  std::vector<int32_t> kink_signature() const {
    std::vector<int32_t> sig;
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].kink.empty()) continue;
      sig.push_back(static_cast<int32_t>(i));
      sig.insert(sig.end(), nodes_[i].kink.begin(), nodes_[i].kink.end());
    }
    return sig;
  }

  void set_check_finite(bool b) { check_finite_ = b; }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    TensorT<T> out;
    TensorT<T> grad;
    std::vector<int> in;
    BackFn back;
    std::vector<int32_t> kink;
  };

  friend struct NodeAccess;

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }

  TensorT<T>& grad_buf(int id) {
    auto& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.v.empty()) n.grad = TensorT<T>(n.out.shape);
    return n.grad;
  }

  int check(ValueRef r) const {
    if (r.id < 0 || static_cast<size_t>(r.id) >= nodes_.size()) {
      throw std::invalid_argument("tape: dangling value reference");
    }
    return r.id;
  }

  int push(TensorT<T> out, std::vector<int> in, BackFn back) {
    if (check_finite_) {
      for (T x : out.v) {
        if (!std::isfinite(static_cast<double>(x))) {
          throw std::runtime_error("tape: non-finite value in forward output");
        }
      }
    }
    nodes_.push_back(Node{std::move(out), {}, std::move(in), std::move(back), {}});
    return static_cast<int>(nodes_.size()) - 1;
  }

  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<Mat>;
  using CMap = Eigen::Map<const Mat>;

  // x [N,C,H,W] -> cols [C*kh*kw, N*oh*ow], zero-padded.
  static void im2col(const TensorT<T>& x, int kh, int kw, int stride, int pad,
                     int oh, int ow, std::vector<T>& cols) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t ncols = static_cast<int64_t>(n) * oh * ow;
    cols.assign(static_cast<size_t>(c) * kh * kw * ncols, T(0));
    for (int in = 0; in < n; ++in) {
      for (int ic = 0; ic < c; ++ic) {
        for (int ki = 0; ki < kh; ++ki) {
          for (int kj = 0; kj < kw; ++kj) {
            const int r = (ic * kh + ki) * kw + kj;
            T* dst = &cols[static_cast<size_t>(r) * ncols +
                           static_cast<size_t>(in) * oh * ow];
            for (int i = 0; i < oh; ++i) {
              const int y = i * stride + ki - pad;
              if (y < 0 || y >= h) {
                dst += ow;
                continue;
              }
              const T* src =
                  &x.v[((static_cast<size_t>(in) * c + ic) * h + y) * w];
              for (int j = 0; j < ow; ++j) {
                const int xc = j * stride + kj - pad;
                *dst++ = (xc >= 0 && xc < w) ? src[xc] : T(0);
              }
            }
          }
        }
      }
    }
  }

  // Scatter-add of dcols back onto the input gradient.
  static void col2im(const std::vector<T>& dcols,
                     const std::vector<int>& xshape, int kh, int kw, int stride,
                     int pad, int oh, int ow, TensorT<T>& gx) {
    const int n = xshape[0], c = xshape[1], h = xshape[2], w = xshape[3];
    const int64_t ncols = static_cast<int64_t>(n) * oh * ow;
    for (int in = 0; in < n; ++in) {
      for (int ic = 0; ic < c; ++ic) {
        for (int ki = 0; ki < kh; ++ki) {
          for (int kj = 0; kj < kw; ++kj) {
            const int r = (ic * kh + ki) * kw + kj;
            const T* src = &dcols[static_cast<size_t>(r) * ncols +
                                  static_cast<size_t>(in) * oh * ow];
            for (int i = 0; i < oh; ++i) {
              const int y = i * stride + ki - pad;
              if (y < 0 || y >= h) {
                src += ow;
                continue;
              }
              T* dst = &gx.v[((static_cast<size_t>(in) * c + ic) * h + y) * w];
              for (int j = 0; j < ow; ++j) {
                const int xc = j * stride + kj - pad;
                if (xc >= 0 && xc < w) dst[xc] += *src;
                ++src;
              }
            }
          }
        }
      }
    }
  }

  std::vector<Node> nodes_;
  std::map<const Parameter*, TensorT<T>> overrides_;
#ifdef NDEBUG
  bool check_finite_ = false;
#else
  bool check_finite_ = true;
#endif
};

using Tape = TapeT<float>;

}  // namespace jigen
