// Reverse-mode tape covering the fixed layer set of the classifier:
// conv 3x3 (pad 1), relu, 2x2 average pool, global average pool, dense,
// cross-entropy with soft labels, and the softmax-entropy boost term.
//
// Convolutions and dense layers lower to GEMM (Eigen) over im2col buffers;
// the naive reference forward used to validate them lives in the test suite.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "mixboost/tensor.hpp"

namespace mixboost {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

class Tape {
 public:
  using NodeId = std::size_t;

  Tape() { tune_allocator_once(); }

  NodeId leaf(Tensor value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, {}, nullptr);
  }

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }

  // Gradient of the last backward() root with respect to node `id`.
  const std::vector<double>& grad(NodeId id) const {
    if (!ran_backward_) throw NumericError("grad() before backward()");
    const Node& n = nodes_.at(id);
    if (!n.requires_grad) throw NumericError("grad() on a node that does not require grad");
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // y[b,f,i,j] = bias[f] + sum_{c,ky,kx} w[f,c,ky,kx] * x[b,c,i+ky-1,j+kx-1]
  // (zero padding). x: (B,C,H,W), w: (F,C,3,3), b: (F).
  NodeId conv3x3(NodeId x, NodeId w, NodeId b) {
    const Tensor& xt = value(x);
    const Tensor& wt = value(w);
    const Tensor& bt = value(b);
    require(xt.shape.size() == 4, "conv3x3: input must be 4-d, got " + shape_str(xt.shape));
    require(wt.shape.size() == 4 && wt.shape[2] == 3 && wt.shape[3] == 3,
            "conv3x3: weight must be (F,C,3,3), got " + shape_str(wt.shape));
    require(wt.shape[1] == xt.shape[1],
            "conv3x3: weight channels " + std::to_string(wt.shape[1]) +
                " do not match input channels " + std::to_string(xt.shape[1]));
    const std::size_t F = wt.shape[0];
    require_shape(bt, {F}, "conv3x3 bias");
    const std::size_t B = xt.shape[0], C = xt.shape[1], H = xt.shape[2], W = xt.shape[3];
    const std::size_t cols = B * H * W, K = C * 9;
    const bool needs_grad = any_grad({x, w, b});

    // the col matrix is retained for the backward pass; inference reuses a
    // scratch buffer instead
    std::shared_ptr<DVec> col_store;
    double* col;
    if (needs_grad) {
      col_store = std::make_shared<DVec>();
      col_store->resize(K * cols);
      col = col_store->data();
    } else {
      col = scratch(0, K * cols);
    }
    im2col(xt, col);

    Tensor out = Tensor::uninit({B, F, H, W});
    {
      double* ymat = scratch(1, F * cols);
      MatMap Y(ymat, static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(cols));
      ConstMatMap Wm(wt.data.data(), static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(K));
      ConstMatMap Cm(col, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(cols));
      Y.noalias() = Wm * Cm;
      // scatter (F, B*H*W) -> (B,F,H,W), fusing the bias add
      const std::size_t plane = H * W;
      for (std::size_t bi = 0; bi < B; ++bi) {
        for (std::size_t f = 0; f < F; ++f) {
          const double* src = ymat + f * cols + bi * plane;
          double* dst = out.data.data() + (bi * F + f) * plane;
          const double bias = bt.data[f];
          for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + bias;
        }
      }
    }

    return push(std::move(out), needs_grad, {x, w, b},
                [col_store, B, C, F, H, W, cols, K](Tape& t, const Node& n) {
                  const std::size_t plane = H * W;
                  double* dymat = t.scratch(1, F * cols);
                  for (std::size_t bi = 0; bi < B; ++bi) {
                    for (std::size_t f = 0; f < F; ++f) {
                      const double* src = n.grad.data() + (bi * F + f) * plane;
                      double* dst = dymat + f * cols + bi * plane;
                      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p];
                    }
                  }
                  ConstMatMap dY(dymat, static_cast<Eigen::Index>(F),
                                 static_cast<Eigen::Index>(cols));
                  Node& xn = t.nodes_[n.parents[0]];
                  Node& wn = t.nodes_[n.parents[1]];
                  Node& bn = t.nodes_[n.parents[2]];
                  if (bn.requires_grad) {
                    for (std::size_t f = 0; f < F; ++f) {
                      double s = 0;
                      const double* row = dymat + f * cols;
                      for (std::size_t p = 0; p < cols; ++p) s += row[p];
                      bn.grad[f] += s;
                    }
                  }
                  if (wn.requires_grad) {
                    ConstMatMap Cm(col_store->data(), static_cast<Eigen::Index>(K),
                                   static_cast<Eigen::Index>(cols));
                    MatMap dW(wn.grad.data(), static_cast<Eigen::Index>(F),
                              static_cast<Eigen::Index>(K));
                    dW.noalias() += dY * Cm.transpose();
                  }
                  if (xn.requires_grad) {
                    double* dcol = t.scratch(0, K * cols);
                    MatMap dC(dcol, static_cast<Eigen::Index>(K),
                              static_cast<Eigen::Index>(cols));
                    ConstMatMap Wm(wn.value.data.data(), static_cast<Eigen::Index>(F),
                                   static_cast<Eigen::Index>(K));
                    dC.noalias() = Wm.transpose() * dY;
                    col2im_add(dcol, xn.value.shape, xn.grad);
                  }
                });
  }

  NodeId relu(NodeId x) {
    const Tensor& xt = value(x);
    Tensor out = Tensor::uninit(xt.shape);
    for (std::size_t i = 0; i < xt.data.size(); ++i) out.data[i] = xt.data[i] > 0 ? xt.data[i] : 0;
    return push(std::move(out), any_grad({x}), {x}, [](Tape& t, const Node& n) {
      Node& xn = t.nodes_[n.parents[0]];
      if (!xn.requires_grad) return;
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        if (xn.value.data[i] > 0) xn.grad[i] += n.grad[i];
      }
    });
  }

  // 2x2 average pooling with stride 2 (the stride-2 downsample stage).
  NodeId avg_pool2(NodeId x) {
    const Tensor& xt = value(x);
    require(xt.shape.size() == 4, "avg_pool2: input must be 4-d");
    const std::size_t B = xt.shape[0], C = xt.shape[1], H = xt.shape[2], W = xt.shape[3];
    require(H % 2 == 0 && W % 2 == 0, "avg_pool2: spatial dims must be even");
    Tensor out = Tensor::uninit({B, C, H / 2, W / 2});
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const double* src = xt.data.data() + bc * H * W;
      double* dst = out.data.data() + bc * (H / 2) * (W / 2);
      for (std::size_t i = 0; i < H / 2; ++i) {
        for (std::size_t j = 0; j < W / 2; ++j) {
          dst[i * (W / 2) + j] = 0.25 * (src[(2 * i) * W + 2 * j] + src[(2 * i) * W + 2 * j + 1] +
                                         src[(2 * i + 1) * W + 2 * j] +
                                         src[(2 * i + 1) * W + 2 * j + 1]);
        }
      }
    }
    return push(std::move(out), any_grad({x}), {x}, [B, C, H, W](Tape& t, const Node& n) {
      Node& xn = t.nodes_[n.parents[0]];
      if (!xn.requires_grad) return;
      for (std::size_t bc = 0; bc < B * C; ++bc) {
        const double* g = n.grad.data() + bc * (H / 2) * (W / 2);
        double* dst = xn.grad.data() + bc * H * W;
        for (std::size_t i = 0; i < H / 2; ++i) {
          for (std::size_t j = 0; j < W / 2; ++j) {
            const double v = 0.25 * g[i * (W / 2) + j];
            dst[(2 * i) * W + 2 * j] += v;
            dst[(2 * i) * W + 2 * j + 1] += v;
            dst[(2 * i + 1) * W + 2 * j] += v;
            dst[(2 * i + 1) * W + 2 * j + 1] += v;
          }
        }
      }
    });
  }

  // (B,C,H,W) -> (B,C), mean over the spatial plane.
  NodeId global_avg_pool(NodeId x) {
    const Tensor& xt = value(x);
    require(xt.shape.size() == 4, "global_avg_pool: input must be 4-d");
    const std::size_t B = xt.shape[0], C = xt.shape[1], plane = xt.shape[2] * xt.shape[3];
    Tensor out = Tensor::uninit({B, C});
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const double* src = xt.data.data() + bc * plane;
      double s = 0;
      for (std::size_t p = 0; p < plane; ++p) s += src[p];
      out.data[bc] = s / static_cast<double>(plane);
    }
    return push(std::move(out), any_grad({x}), {x}, [B, C, plane](Tape& t, const Node& n) {
      Node& xn = t.nodes_[n.parents[0]];
      if (!xn.requires_grad) return;
      for (std::size_t bc = 0; bc < B * C; ++bc) {
        const double v = n.grad[bc] / static_cast<double>(plane);
        double* dst = xn.grad.data() + bc * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] += v;
      }
    });
  }

  // x: (B,Cin), w: (K,Cin), b: (K) -> (B,K)
  NodeId dense(NodeId x, NodeId w, NodeId b) {
    const Tensor& xt = value(x);
    const Tensor& wt = value(w);
    const Tensor& bt = value(b);
    require(xt.shape.size() == 2 && wt.shape.size() == 2, "dense: x and w must be 2-d");
    require(wt.shape[1] == xt.shape[1], "dense: weight in-features " + std::to_string(wt.shape[1]) +
                                            " do not match input " + std::to_string(xt.shape[1]));
    const std::size_t B = xt.shape[0], Cin = xt.shape[1], K = wt.shape[0];
    require_shape(bt, {K}, "dense bias");
    Tensor out = Tensor::uninit({B, K});
    {
      ConstMatMap X(xt.data.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(Cin));
      ConstMatMap Wm(wt.data.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(Cin));
      MatMap Y(out.data.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(K));
      Y.noalias() = X * Wm.transpose();
      for (std::size_t bi = 0; bi < B; ++bi) {
        for (std::size_t k = 0; k < K; ++k) out.data[bi * K + k] += bt.data[k];
      }
    }
    return push(std::move(out), any_grad({x, w, b}), {x, w, b},
                [B, Cin, K](Tape& t, const Node& n) {
                  ConstMatMap dY(n.grad.data(), static_cast<Eigen::Index>(B),
                                 static_cast<Eigen::Index>(K));
                  Node& xn = t.nodes_[n.parents[0]];
                  Node& wn = t.nodes_[n.parents[1]];
                  Node& bn = t.nodes_[n.parents[2]];
                  if (bn.requires_grad) {
                    for (std::size_t bi = 0; bi < B; ++bi) {
                      for (std::size_t k = 0; k < K; ++k) bn.grad[k] += n.grad[bi * K + k];
                    }
                  }
                  if (wn.requires_grad) {
                    ConstMatMap X(xn.value.data.data(), static_cast<Eigen::Index>(B),
                                  static_cast<Eigen::Index>(Cin));
                    MatMap dW(wn.grad.data(), static_cast<Eigen::Index>(K),
                              static_cast<Eigen::Index>(Cin));
                    dW.noalias() += dY.transpose() * X;
                  }
                  if (xn.requires_grad) {
                    ConstMatMap Wm(wn.value.data.data(), static_cast<Eigen::Index>(K),
                                   static_cast<Eigen::Index>(Cin));
                    MatMap dX(xn.grad.data(), static_cast<Eigen::Index>(B),
                              static_cast<Eigen::Index>(Cin));
                    dX.noalias() += dY * Wm;
                  }
                });
  }

  // Elementwise scale * x + shift.
  NodeId affine(NodeId x, double scale, double shift) {
    const Tensor& xt = value(x);
    Tensor out = Tensor::uninit(xt.shape);
    for (std::size_t i = 0; i < xt.data.size(); ++i) out.data[i] = scale * xt.data[i] + shift;
    return push(std::move(out), any_grad({x}), {x}, [scale](Tape& t, const Node& n) {
      Node& xn = t.nodes_[n.parents[0]];
      if (!xn.requires_grad) return;
      for (std::size_t i = 0; i < n.grad.size(); ++i) xn.grad[i] += scale * n.grad[i];
    });
  }

  NodeId sub(NodeId a, NodeId b) {
    const Tensor& at = value(a);
    const Tensor& bt = value(b);
    require(at.shape == bt.shape, "sub: shape mismatch " + shape_str(at.shape) + " vs " +
                                      shape_str(bt.shape));
    Tensor out = Tensor::uninit(at.shape);
    for (std::size_t i = 0; i < at.data.size(); ++i) out.data[i] = at.data[i] - bt.data[i];
    return push(std::move(out), any_grad({a, b}), {a, b}, [](Tape& t, const Node& n) {
      Node& an = t.nodes_[n.parents[0]];
      Node& bn = t.nodes_[n.parents[1]];
      if (an.requires_grad) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) an.grad[i] += n.grad[i];
      }
      if (bn.requires_grad) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) bn.grad[i] -= n.grad[i];
      }
    });
  }

  // Mean over the batch of -sum_k q_k log softmax_k(logits). Soft labels are a
  // row-stochastic (B,K) matrix; one-hot rows reproduce the hard-label loss.
  NodeId cross_entropy(NodeId logits, std::vector<double> soft_labels) {
    const Tensor& zt = value(logits);
    require(zt.shape.size() == 2, "cross_entropy: logits must be (B,K)");
    const std::size_t B = zt.shape[0], K = zt.shape[1];
    require(soft_labels.size() == B * K,
            "cross_entropy: label matrix must have " + std::to_string(B * K) + " entries");
    auto probs = std::make_shared<std::vector<double>>(B * K);
    auto labels = std::make_shared<std::vector<double>>(std::move(soft_labels));
    double loss = 0;
    for (std::size_t bi = 0; bi < B; ++bi) {
      const double* z = zt.data.data() + bi * K;
      double* p = probs->data() + bi * K;
      const double lse = log_sum_exp(z, K);
      for (std::size_t k = 0; k < K; ++k) {
        const double logp = z[k] - lse;
        p[k] = std::exp(logp);
        loss -= (*labels)[bi * K + k] * logp;
      }
    }
    loss /= static_cast<double>(B);
    return push(Tensor::scalar(loss), any_grad({logits}), {logits},
                [probs, labels, B, K](Tape& t, const Node& n) {
                  Node& zn = t.nodes_[n.parents[0]];
                  if (!zn.requires_grad) return;
                  const double g = n.grad[0] / static_cast<double>(B);
                  for (std::size_t i = 0; i < B * K; ++i) {
                    zn.grad[i] += g * ((*probs)[i] - (*labels)[i]);
                  }
                });
  }

  // Mean over the batch of the Shannon entropy of softmax(row), in nats.
  // dH/dz_j = -p_j (log p_j + H).
  NodeId softmax_entropy(NodeId logits) {
    const Tensor& zt = value(logits);
    require(zt.shape.size() == 2, "softmax_entropy: logits must be (B,K)");
    const std::size_t B = zt.shape[0], K = zt.shape[1];
    auto probs = std::make_shared<std::vector<double>>(B * K);
    auto ents = std::make_shared<std::vector<double>>(B);
    double total = 0;
    for (std::size_t bi = 0; bi < B; ++bi) {
      const double* z = zt.data.data() + bi * K;
      double* p = probs->data() + bi * K;
      const double lse = log_sum_exp(z, K);
      double h = 0;
      for (std::size_t k = 0; k < K; ++k) {
        const double logp = z[k] - lse;
        p[k] = std::exp(logp);
        h -= p[k] * logp;
      }
      (*ents)[bi] = h;
      total += h;
    }
    total /= static_cast<double>(B);
    return push(Tensor::scalar(total), any_grad({logits}), {logits},
                [probs, ents, B, K](Tape& t, const Node& n) {
                  Node& zn = t.nodes_[n.parents[0]];
                  if (!zn.requires_grad) return;
                  const double g = n.grad[0] / static_cast<double>(B);
                  for (std::size_t bi = 0; bi < B; ++bi) {
                    const double h = (*ents)[bi];
                    for (std::size_t k = 0; k < K; ++k) {
                      const double p = (*probs)[bi * K + k];
                      const double logp = p > 0 ? std::log(p) : -745.0;
                      zn.grad[bi * K + k] += g * (-p * (logp + h));
                    }
                  }
                });
  }

  // sum(weights * x) -> scalar; the reduction used to drive per-layer
  // gradient checks.
  template <typename Alloc>
  NodeId weighted_sum(NodeId x, const std::vector<double, Alloc>& weights) {
    const Tensor& xt = value(x);
    require(weights.size() == xt.numel(), "weighted_sum: weight count mismatch");
    auto w = std::make_shared<std::vector<double>>(weights.begin(), weights.end());
    double s = 0;
    for (std::size_t i = 0; i < xt.data.size(); ++i) s += (*w)[i] * xt.data[i];
    return push(Tensor::scalar(s), any_grad({x}), {x}, [w](Tape& t, const Node& n) {
      Node& xn = t.nodes_[n.parents[0]];
      if (!xn.requires_grad) return;
      for (std::size_t i = 0; i < xn.grad.size(); ++i) xn.grad[i] += n.grad[0] * (*w)[i];
    });
  }

  // Scalar combination a + beta * b.
  NodeId add_scaled(NodeId a, NodeId b, double beta) {
    const double av = value(a).item();
    const double bv = value(b).item();
    return push(Tensor::scalar(av + beta * bv), any_grad({a, b}), {a, b},
                [beta](Tape& t, const Node& n) {
                  Node& an = t.nodes_[n.parents[0]];
                  Node& bn = t.nodes_[n.parents[1]];
                  if (an.requires_grad) an.grad[0] += n.grad[0];
                  if (bn.requires_grad) bn.grad[0] += beta * n.grad[0];
                });
  }

  // Reverse pass from a scalar root. Node order is creation order, which is
  // a topological order by construction.
  void backward(NodeId root) {
    Node& r = nodes_.at(root);
    if (r.value.numel() != 1) throw ShapeError("backward: root must be a scalar");
    if (!r.requires_grad) {
      throw NumericError("backward: no recorded graph reaches a differentiable leaf");
    }
    for (Node& n : nodes_) {
      if (n.requires_grad) {
        n.grad.assign(n.value.numel(), 0.0);
      }
    }
    r.grad[0] = 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward_fn) n.backward_fn(*this, n);
    }
    ran_backward_ = true;
  }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<NodeId> parents;
    std::function<void(Tape&, const Node&)> backward_fn;
  };

  NodeId push(Tensor value, bool requires_grad, std::vector<NodeId> parents,
              std::function<void(Tape&, const Node&)> backward_fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.parents = std::move(parents);
    n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  bool any_grad(std::initializer_list<NodeId> ids) const {
    for (NodeId id : ids) {
      if (nodes_[id].requires_grad) return true;
    }
    return false;
  }

  static double log_sum_exp(const double* z, std::size_t k) {
    double m = z[0];
    for (std::size_t i = 1; i < k; ++i) m = std::max(m, z[i]);
    double s = 0;
    for (std::size_t i = 0; i < k; ++i) s += std::exp(z[i] - m);
    return m + std::log(s);
  }

  // (B,C,H,W) -> col[(c*9 + ky*3 + kx)][b*H*W + y*W + x], zero padded.
  static void im2col(const Tensor& x, double* col) {
    const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t cols = B * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          double* dst = col + (c * 9 + ky * 3 + kx) * cols;
          for (std::size_t b = 0; b < B; ++b) {
            const double* plane = x.data.data() + (b * C + c) * H * W;
            double* drow = dst + b * H * W;
            for (std::size_t y = 0; y < H; ++y) {
              const std::size_t sy = y + ky;
              if (sy < 1 || sy > H) {
                for (std::size_t xx = 0; xx < W; ++xx) drow[y * W + xx] = 0.0;
                continue;
              }
              const double* srow = plane + (sy - 1) * W;
              for (std::size_t xx = 0; xx < W; ++xx) {
                const std::size_t sx = xx + kx;
                drow[y * W + xx] = (sx < 1 || sx > W) ? 0.0 : srow[sx - 1];
              }
            }
          }
        }
      }
    }
  }

  static void col2im_add(const double* col, const Shape& xshape,
                         std::vector<double>& dx) {
    const std::size_t B = xshape[0], C = xshape[1], H = xshape[2], W = xshape[3];
    const std::size_t cols = B * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double* src = col + (c * 9 + ky * 3 + kx) * cols;
          for (std::size_t b = 0; b < B; ++b) {
            double* plane = dx.data() + (b * C + c) * H * W;
            const double* srow = src + b * H * W;
            for (std::size_t y = 0; y < H; ++y) {
              const std::size_t sy = y + ky;
              if (sy < 1 || sy > H) continue;
              double* drow = plane + (sy - 1) * W;
              for (std::size_t xx = 0; xx < W; ++xx) {
                const std::size_t sx = xx + kx;
                if (sx >= 1 && sx <= W) drow[sx - 1] += srow[y * W + xx];
              }
            }
          }
        }
      }
    }
  }

  // two reusable uninitialized buffers for transient GEMM operands
  double* scratch(int which, std::size_t n) {
    DVec& buf = scratch_[which];
    if (buf.size() < n) buf.resize(n);
    return buf.data();
  }

  std::vector<Node> nodes_;
  DVec scratch_[2];
  bool ran_backward_ = false;
};

}  // namespace mixboost
