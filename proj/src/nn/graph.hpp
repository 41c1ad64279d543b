#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace muze::nn {

// Reverse-mode tape over Mat<T>. Nodes are created in topological order by
// construction; backward() walks them once in reverse. Gradients are
// allocated lazily and accumulated, so a value used by several consumers
// collects all contributions.
template <class T>
class GraphT {
public:
  using M = Mat<T>;

  int input(M v, bool needs_grad = false) {
    return push(std::move(v), needs_grad, {});
  }

  const M& val(int id) const { return nodes_[static_cast<size_t>(id)].val; }

  M& grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) n.grad = M(n.val.rows, n.val.cols);
    return n.grad;
  }

  bool has_grad(int id) const { return !nodes_[static_cast<size_t>(id)].grad.empty(); }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
  size_t node_count() const { return nodes_.size(); }

  int matmul(int a, int b) {
    int out = push(nn::matmul(val(a), val(b)), any_grad({a, b}), [this, a, b](int o) {
      const M& g = grad(o);
      if (needs_grad(a)) matmul_nt_acc(grad(a), g, val(b));
      if (needs_grad(b)) matmul_tn_acc(grad(b), val(a), g);
    });
    return out;
  }

  // A * B^T
  int matmul_nt(int a, int b) {
    int out = push(nn::matmul_nt(val(a), val(b)), any_grad({a, b}), [this, a, b](int o) {
      const M& g = grad(o);
      if (needs_grad(a)) matmul_acc(grad(a), g, val(b));
      if (needs_grad(b)) matmul_tn_acc(grad(b), g, val(a));
    });
    return out;
  }

  int add(int a, int b) {
    detail::shape_check(val(a).same_shape(val(b)), "graph add");
    M v = val(a);
    add_inplace(v, val(b));
    return push(std::move(v), any_grad({a, b}), [this, a, b](int o) {
      const M& g = grad(o);
      if (needs_grad(a)) add_inplace(grad(a), g);
      if (needs_grad(b)) add_inplace(grad(b), g);
    });
  }

  // A (n x w) + row (1 x w) broadcast over rows
  int add_rowvec(int a, int r) {
    const M& av = val(a);
    const M& rv = val(r);
    detail::shape_check(rv.rows == 1 && rv.cols == av.cols, "add_rowvec");
    M v = av;
    for (int i = 0; i < v.rows; ++i) {
      T* row = v.row(i);
      for (int j = 0; j < v.cols; ++j) row[j] += rv(0, j);
    }
    return push(std::move(v), any_grad({a, r}), [this, a, r](int o) {
      const M& g = grad(o);
      if (needs_grad(a)) add_inplace(grad(a), g);
      if (needs_grad(r)) {
        M& gr = grad(r);
        for (int i = 0; i < g.rows; ++i) {
          const T* row = g.row(i);
          for (int j = 0; j < g.cols; ++j) gr(0, j) += row[j];
        }
      }
    });
  }

  int scale(int a, T c) {
    M v = val(a);
    for (auto& x : v.d) x *= c;
    return push(std::move(v), any_grad({a}), [this, a, c](int o) {
      if (needs_grad(a)) axpy(grad(a), c, grad(o));
    });
  }

  int slice_cols(int a, int c0, int c1) {
    const M& av = val(a);
    detail::shape_check(0 <= c0 && c0 < c1 && c1 <= av.cols, "slice_cols");
    M v(av.rows, c1 - c0);
    for (int i = 0; i < av.rows; ++i) {
      for (int j = c0; j < c1; ++j) v(i, j - c0) = av(i, j);
    }
    return push(std::move(v), any_grad({a}), [this, a, c0, c1](int o) {
      if (!needs_grad(a)) return;
      const M& g = grad(o);
      M& ga = grad(a);
      for (int i = 0; i < g.rows; ++i) {
        for (int j = c0; j < c1; ++j) ga(i, j) += g(i, j - c0);
      }
    });
  }

  int concat_cols(const std::vector<int>& parts) {
    int total = 0;
    const int rows = val(parts.front()).rows;
    for (int p : parts) {
      detail::shape_check(val(p).rows == rows, "concat_cols");
      total += val(p).cols;
    }
    M v(rows, total);
    int off = 0;
    for (int p : parts) {
      const M& pv = val(p);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < pv.cols; ++j) v(i, off + j) = pv(i, j);
      }
      off += pv.cols;
    }
    return push(std::move(v), any_grad(parts), [this, parts](int o) {
      const M& g = grad(o);
      int off2 = 0;
      for (int p : parts) {
        const int c = val(p).cols;
        if (needs_grad(p)) {
          M& gp = grad(p);
          for (int i = 0; i < g.rows; ++i) {
            for (int j = 0; j < c; ++j) gp(i, j) += g(i, off2 + j);
          }
        }
        off2 += c;
      }
    });
  }

  // Stacks 1 x w rows into an n x w matrix.
  int stack_rows(const std::vector<int>& rows) {
    const int w = val(rows.front()).cols;
    M v(static_cast<int>(rows.size()), w);
    for (size_t i = 0; i < rows.size(); ++i) {
      const M& rv = val(rows[i]);
      detail::shape_check(rv.rows == 1 && rv.cols == w, "stack_rows");
      for (int j = 0; j < w; ++j) v(static_cast<int>(i), j) = rv(0, j);
    }
    return push(std::move(v), any_grad(rows), [this, rows](int o) {
      const M& g = grad(o);
      for (size_t i = 0; i < rows.size(); ++i) {
        if (!needs_grad(rows[i])) continue;
        M& gr = grad(rows[i]);
        for (int j = 0; j < g.cols; ++j) gr(0, j) += g(static_cast<int>(i), j);
      }
    });
  }

  // out[i] = table[idx[i]]; gradient scatter-adds into the table rows.
  int gather_rows(int table, std::vector<int> idx) {
    const M& tv = val(table);
    M v(static_cast<int>(idx.size()), tv.cols);
    for (size_t i = 0; i < idx.size(); ++i) {
      detail::shape_check(idx[i] >= 0 && idx[i] < tv.rows, "gather_rows");
      for (int j = 0; j < tv.cols; ++j) v(static_cast<int>(i), j) = tv(idx[i], j);
    }
    return push(std::move(v), any_grad({table}), [this, table, idx = std::move(idx)](int o) {
      if (!needs_grad(table)) return;
      const M& g = grad(o);
      M& gt = grad(table);
      for (size_t i = 0; i < idx.size(); ++i) {
        for (int j = 0; j < g.cols; ++j) gt(idx[i], j) += g(static_cast<int>(i), j);
      }
    });
  }

  int layer_norm(int x, int gamma, int beta) {
    auto xhat = std::make_shared<M>();
    auto rstd = std::make_shared<std::vector<T>>();
    M v = layer_norm_forward(val(x), val(gamma), val(beta), xhat.get(), rstd.get());
    return push(std::move(v), any_grad({x, gamma, beta}),
                [this, x, gamma, beta, xhat, rstd](int o) {
                  const M& g = grad(o);
                  const M& gm = val(gamma);
                  const int w = g.cols;
                  if (needs_grad(gamma)) {
                    M& gg = grad(gamma);
                    for (int i = 0; i < g.rows; ++i) {
                      for (int j = 0; j < w; ++j) gg(0, j) += g(i, j) * (*xhat)(i, j);
                    }
                  }
                  if (needs_grad(beta)) {
                    M& gb = grad(beta);
                    for (int i = 0; i < g.rows; ++i) {
                      for (int j = 0; j < w; ++j) gb(0, j) += g(i, j);
                    }
                  }
                  if (needs_grad(x)) {
                    M& gx = grad(x);
                    for (int i = 0; i < g.rows; ++i) {
                      double m1 = 0, m2 = 0;  // mean(dxhat), mean(dxhat*xhat)
                      for (int j = 0; j < w; ++j) {
                        const double dxh = static_cast<double>(g(i, j)) * gm(0, j);
                        m1 += dxh;
                        m2 += dxh * (*xhat)(i, j);
                      }
                      m1 /= w;
                      m2 /= w;
                      const double r = (*rstd)[static_cast<size_t>(i)];
                      for (int j = 0; j < w; ++j) {
                        const double dxh = static_cast<double>(g(i, j)) * gm(0, j);
                        gx(i, j) += static_cast<T>(r * (dxh - m1 - (*xhat)(i, j) * m2));
                      }
                    }
                  }
                });
  }

  int tanh_op(int a) {
    M v = val(a);
    for (auto& x : v.d) x = std::tanh(x);
    return push(std::move(v), any_grad({a}), [this, a](int o) {
      if (!needs_grad(a)) return;
      const M& g = grad(o);
      const M& y = val(o);
      M& ga = grad(a);
      for (size_t i = 0; i < g.size(); ++i) ga.d[i] += g.d[i] * (T(1) - y.d[i] * y.d[i]);
    });
  }

  int gelu(int a) {
    M v = val(a);
    for (auto& x : v.d) x = gelu_scalar(x);
    return push(std::move(v), any_grad({a}), [this, a](int o) {
      if (!needs_grad(a)) return;
      const M& g = grad(o);
      const M& x = val(a);
      M& ga = grad(a);
      for (size_t i = 0; i < g.size(); ++i) ga.d[i] += g.d[i] * gelu_grad_scalar(x.d[i]);
    });
  }

  int softmax_rows(int a) {
    M v = val(a);
    softmax_rows_inplace(v);
    return push(std::move(v), any_grad({a}), [this, a](int o) {
      if (!needs_grad(a)) return;
      const M& g = grad(o);
      const M& y = val(o);
      M& ga = grad(a);
      for (int i = 0; i < g.rows; ++i) {
        double s = 0;
        for (int j = 0; j < g.cols; ++j) s += static_cast<double>(g(i, j)) * y(i, j);
        for (int j = 0; j < g.cols; ++j) {
          ga(i, j) += static_cast<T>(y(i, j) * (static_cast<double>(g(i, j)) - s));
        }
      }
    });
  }

  int l2_normalize_rows_op(int a) {
    const M& x = val(a);
    auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(x.rows));
    M v(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
      const double n = norm2(x.row(i), x.cols);
      if (n < 1e-12) throw ZeroNormError("cannot normalize zero-norm row");
      (*norms)[static_cast<size_t>(i)] = n;
      for (int j = 0; j < x.cols; ++j) v(i, j) = static_cast<T>(x(i, j) / n);
    }
    return push(std::move(v), any_grad({a}), [this, a, norms](int o) {
      if (!needs_grad(a)) return;
      const M& g = grad(o);
      const M& y = val(o);
      M& ga = grad(a);
      for (int i = 0; i < g.rows; ++i) {
        double gy = 0;
        for (int j = 0; j < g.cols; ++j) gy += static_cast<double>(g(i, j)) * y(i, j);
        const double inv = 1.0 / (*norms)[static_cast<size_t>(i)];
        for (int j = 0; j < g.cols; ++j) {
          ga(i, j) += static_cast<T>((static_cast<double>(g(i, j)) - gy * y(i, j)) * inv);
        }
      }
    });
  }

  int transpose(int a) {
    const M& x = val(a);
    M v(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i) {
      for (int j = 0; j < x.cols; ++j) v(j, i) = x(i, j);
    }
    return push(std::move(v), any_grad({a}), [this, a](int o) {
      if (!needs_grad(a)) return;
      const M& g = grad(o);
      M& ga = grad(a);
      for (int i = 0; i < g.rows; ++i) {
        for (int j = 0; j < g.cols; ++j) ga(j, i) += g(i, j);
      }
    });
  }

  // Elementwise product with a 1x1 node (learned scalars such as the logit
  // scale).
  int mul_scalar_node(int a, int s) {
    detail::shape_check(val(s).rows == 1 && val(s).cols == 1, "mul_scalar_node");
    const T sv = val(s)(0, 0);
    M v = val(a);
    for (auto& x : v.d) x *= sv;
    return push(std::move(v), any_grad({a, s}), [this, a, s](int o) {
      const M& g = grad(o);
      const T sv2 = val(s)(0, 0);
      if (needs_grad(a)) axpy(grad(a), sv2, g);
      if (needs_grad(s)) {
        const M& av = val(a);
        double acc = 0;
        for (size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g.d[i]) * av.d[i];
        grad(s)(0, 0) += static_cast<T>(acc);
      }
    });
  }

  int exp_op(int a) {
    M v = val(a);
    for (auto& x : v.d) x = std::exp(x);
    return push(std::move(v), any_grad({a}), [this, a](int o) {
      if (!needs_grad(a)) return;
      const M& g = grad(o);
      const M& y = val(o);
      M& ga = grad(a);
      for (size_t i = 0; i < g.size(); ++i) ga.d[i] += g.d[i] * y.d[i];
    });
  }

  // Inverted dropout; active only when keep_prob < 1.
  int dropout(int a, double keep_prob, Rng& rng) {
    if (keep_prob >= 1.0) return a;
    const M& x = val(a);
    auto mask = std::make_shared<std::vector<T>>(x.size());
    const T scale_up = static_cast<T>(1.0 / keep_prob);
    M v = x;
    for (size_t i = 0; i < v.size(); ++i) {
      const T m = rng.uniform() < keep_prob ? scale_up : T(0);
      (*mask)[i] = m;
      v.d[i] *= m;
    }
    return push(std::move(v), any_grad({a}), [this, a, mask](int o) {
      if (!needs_grad(a)) return;
      const M& g = grad(o);
      M& ga = grad(a);
      for (size_t i = 0; i < g.size(); ++i) ga.d[i] += g.d[i] * (*mask)[i];
    });
  }

  // sum over rows of (1 - cos(pred_row, target_row)); targets are constants.
  int cosine_loss(int pred, M targets) {
    const M& p = val(pred);
    detail::shape_check(p.same_shape(targets), "cosine_loss");
    auto tgt = std::make_shared<M>(std::move(targets));
    M v(1, 1);
    double total = 0;
    for (int i = 0; i < p.rows; ++i) {
      total += 1.0 - cosine_similarity(p.row(i), tgt->row(i), p.cols);
    }
    v(0, 0) = static_cast<T>(total);
    return push(std::move(v), any_grad({pred}), [this, pred, tgt](int o) {
      if (!needs_grad(pred)) return;
      const T go = grad(o)(0, 0);
      const M& p2 = val(pred);
      M& gp = grad(pred);
      const int n = p2.cols;
      for (int i = 0; i < p2.rows; ++i) {
        const T* pr = p2.row(i);
        const T* tr = tgt->row(i);
        const double np = norm2(pr, n);
        const double nt = norm2(tr, n);
        const double c = dot(pr, tr, n) / (np * nt);
        for (int j = 0; j < n; ++j) {
          const double dcos = tr[j] / (np * nt) - c * pr[j] / (np * np);
          gp(i, j) += static_cast<T>(-go * dcos);
        }
      }
    });
  }

  // Symmetric-contrastive building block: mean over rows of
  // (logsumexp(row) - row[diag]).
  int cross_entropy_diag(int logits) {
    const M& l = val(logits);
    detail::shape_check(l.rows == l.cols, "cross_entropy_diag");
    M v(1, 1);
    double total = 0;
    for (int i = 0; i < l.rows; ++i) {
      const T* row = l.row(i);
      double mx = row[0];
      for (int j = 1; j < l.cols; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double lse = 0;
      for (int j = 0; j < l.cols; ++j) lse += std::exp(row[j] - mx);
      total += mx + std::log(lse) - row[i];
    }
    v(0, 0) = static_cast<T>(total / l.rows);
    return push(std::move(v), any_grad({logits}), [this, logits](int o) {
      if (!needs_grad(logits)) return;
      const T go = grad(o)(0, 0);
      const M& l2 = val(logits);
      M probs = l2;
      softmax_rows_inplace(probs);
      M& gl = grad(logits);
      const T inv_n = static_cast<T>(1.0 / l2.rows);
      for (int i = 0; i < l2.rows; ++i) {
        for (int j = 0; j < l2.cols; ++j) {
          T p = probs(i, j);
          if (i == j) p -= T(1);
          gl(i, j) += go * p * inv_n;
        }
      }
    });
  }

  // scalar projection <A, W>; the generic reduction to a loss-shaped node
  int weighted_sum(int a, M weights) {
    detail::shape_check(val(a).same_shape(weights), "weighted_sum");
    auto w = std::make_shared<M>(std::move(weights));
    M v(1, 1);
    double acc = 0;
    const M& av = val(a);
    for (size_t i = 0; i < av.size(); ++i) acc += static_cast<double>(av.d[i]) * w->d[i];
    v(0, 0) = static_cast<T>(acc);
    return push(std::move(v), any_grad({a}), [this, a, w](int o) {
      if (!needs_grad(a)) return;
      const T go = grad(o)(0, 0);
      M& ga = grad(a);
      for (size_t i = 0; i < ga.size(); ++i) ga.d[i] += go * w->d[i];
    });
  }

  int sum_scalars(const std::vector<int>& ids) {
    M v(1, 1);
    double total = 0;
    for (int id : ids) {
      detail::shape_check(val(id).rows == 1 && val(id).cols == 1, "sum_scalars");
      total += val(id)(0, 0);
    }
    v(0, 0) = static_cast<T>(total);
    return push(std::move(v), any_grad(ids), [this, ids](int o) {
      const T go = grad(o)(0, 0);
      for (int id : ids) {
        if (needs_grad(id)) grad(id)(0, 0) += go;
      }
    });
  }

  // Seeds d(loss)/d(loss) = 1 and propagates through the tape in reverse.
  void backward(int loss) {
    detail::shape_check(val(loss).rows == 1 && val(loss).cols == 1, "backward seed");
    grad(loss)(0, 0) = T(1);
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.back && n.needs_grad && !n.grad.empty()) n.back(id);
    }
  }

private:
  struct Node {
    M val;
    M grad;
    bool needs_grad = false;
    std::function<void(int)> back;
  };

  bool any_grad(const std::vector<int>& ids) const {
    for (int id : ids) {
      if (nodes_[static_cast<size_t>(id)].needs_grad) return true;
    }
    return false;
  }

  int push(M v, bool needs_grad, std::function<void(int)> back) {
    nodes_.push_back(Node{std::move(v), M(), needs_grad, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

using Graph = GraphT<float>;

}  // namespace muze::nn
