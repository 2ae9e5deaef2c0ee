#include "aio/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace aio {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
  return n;
}

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// log(p) with log(0) = -inf kept intact; lattices hold probabilities.
double safe_log(double p) { return std::log(p); }

}  // namespace

void backward(const Var& root) {
  require(root.defined() && root.value().numel() == 1,
          "backward: root must be a defined scalar");

  // Post-order DFS; reversed it yields root before its ancestors.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch per backward call; leaves accumulate.
  for (Node* n : order) {
    if (n->backprop && n->grad.defined()) n->grad.fill(0.0);
  }
  root.node()->ensure_grad()[0] = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

void zero_grad(const std::vector<Var>& params) {
  for (const Var& p : params) p.node()->ensure_grad().fill(0.0);
}

// --- elementwise -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor y(a.value().dims());
  const double* pa = a.value().data();
  const double* pb = b.value().data();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = pa[i] + pb[i];
  return Var(make_node(std::move(y), {a.node(), b.node()}, [](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    Tensor& gb = self.parents[1]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      ga[i] += self.grad[i];
      gb[i] += self.grad[i];
    }
  }));
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor y(a.value().dims());
  const double* pa = a.value().data();
  const double* pb = b.value().data();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = pa[i] * pb[i];
  return Var(make_node(std::move(y), {a.node(), b.node()}, [](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    Tensor& gb = self.parents[1]->ensure_grad();
    const Tensor& va = self.parents[0]->value;
    const Tensor& vb = self.parents[1]->value;
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      ga[i] += self.grad[i] * vb[i];
      gb[i] += self.grad[i] * va[i];
    }
  }));
}

Var affine_map(const Var& x, double k, double c) {
  Tensor y(x.value().dims());
  const double* px = x.value().data();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = k * px[i] + c;
  return Var(make_node(std::move(y), {x.node()}, [k](Node& self) {
    Tensor& gx = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      gx[i] += k * self.grad[i];
    }
  }));
}

Var vtanh(const Var& x) {
  Tensor y(x.value().dims());
  const double* px = x.value().data();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::tanh(px[i]);
  return Var(make_node(std::move(y), {x.node()}, [](Node& self) {
    Tensor& gx = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      double t = self.value[i];
      gx[i] += self.grad[i] * (1.0 - t * t);
    }
  }));
}

Var vsigmoid(const Var& x) {
  Tensor y(x.value().dims());
  const double* px = x.value().data();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = kernel::sigmoid(px[i]);
  return Var(make_node(std::move(y), {x.node()}, [](Node& self) {
    Tensor& gx = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      double s = self.value[i];
      gx[i] += self.grad[i] * s * (1.0 - s);
    }
  }));
}

Var activation_node(const Var& x, Activation act) {
  if (act == Activation::kIdentity) return x;
  Tensor y(x.value().dims());
  const double* px = x.value().data();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = kernel::gelu(px[i]);
  return Var(make_node(std::move(y), {x.node()}, [](Node& self) {
    Tensor& gx = self.parents[0]->ensure_grad();
    const Tensor& vx = self.parents[0]->value;
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      gx[i] += self.grad[i] * kernel::gelu_grad(vx[i]);
    }
  }));
}

// --- linear algebra ----------------------------------------------------------

Var linear(const Var& X, const Var& W, const Var& b) {
  const Tensor& vx = X.value();
  const Tensor& vw = W.value();
  require(vx.rank() == 2 && vw.rank() == 2 && vx.dim(1) == vw.dim(1),
          "linear: X [r x n] and W [m x n] required");
  int r = vx.dim(0), n = vx.dim(1), m = vw.dim(0);
  const double* bias = nullptr;
  if (b.defined()) {
    require(b.value().rank() == 1 && b.value().dim(0) == m,
            "linear: bias must be [m]");
    bias = b.value().data();
  }
  Tensor y({r, m});
  for (int i = 0; i < r; ++i) {
    kernel::affine(vw.data(), bias, vx.data() + static_cast<size_t>(i) * n, m,
                   n, y.data() + static_cast<size_t>(i) * m);
  }
  std::vector<NodePtr> parents = {X.node(), W.node()};
  if (b.defined()) parents.push_back(b.node());
  bool has_bias = b.defined();
  return Var(make_node(std::move(y), std::move(parents),
                       [r, n, m, has_bias](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& xv = self.parents[0]->value;
    const Tensor& wv = self.parents[1]->value;
    Tensor& gx = self.parents[0]->ensure_grad();
    Tensor& gw = self.parents[1]->ensure_grad();
    for (int i = 0; i < r; ++i) {
      const double* gi = g.data() + static_cast<size_t>(i) * m;
      const double* xi = xv.data() + static_cast<size_t>(i) * n;
      double* gxi = gx.data() + static_cast<size_t>(i) * n;
      for (int o = 0; o < m; ++o) {
        double go = gi[o];
        if (go == 0.0) continue;
        const double* wo = wv.data() + static_cast<size_t>(o) * n;
        double* gwo = gw.data() + static_cast<size_t>(o) * n;
        for (int k = 0; k < n; ++k) {
          gxi[k] += go * wo[k];
          gwo[k] += go * xi[k];
        }
      }
    }
    if (has_bias) {
      Tensor& gb = self.parents[2]->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const double* gi = g.data() + static_cast<size_t>(i) * m;
        for (int o = 0; o < m; ++o) gb[o] += gi[o];
      }
    }
  }));
}

Var row_layer_norm(const Var& X, const Var& gain, const Var& bias, double eps) {
  const Tensor& vx = X.value();
  require(vx.rank() == 2, "row_layer_norm: X must be a matrix");
  int r = vx.dim(0), n = vx.dim(1);
  require(gain.value().rank() == 1 && gain.value().dim(0) == n &&
              bias.value().rank() == 1 && bias.value().dim(0) == n,
          "row_layer_norm: gain/bias must be [n]");
  Tensor y({r, n});
  for (int i = 0; i < r; ++i) {
    kernel::layer_norm(vx.data() + static_cast<size_t>(i) * n,
                       gain.value().data(), bias.value().data(), eps, n,
                       y.data() + static_cast<size_t>(i) * n);
  }
  return Var(make_node(std::move(y), {X.node(), gain.node(), bias.node()},
                       [r, n, eps](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& xv = self.parents[0]->value;
    const Tensor& gamma = self.parents[1]->value;
    Tensor& gx = self.parents[0]->ensure_grad();
    Tensor& ggamma = self.parents[1]->ensure_grad();
    Tensor& gbeta = self.parents[2]->ensure_grad();
    for (int i = 0; i < r; ++i) {
      const double* x = xv.data() + static_cast<size_t>(i) * n;
      const double* gy = g.data() + static_cast<size_t>(i) * n;
      double* gxi = gx.data() + static_cast<size_t>(i) * n;
      double mean = 0.0;
      for (int k = 0; k < n; ++k) mean += x[k];
      mean /= n;
      double var = 0.0;
      for (int k = 0; k < n; ++k) {
        double d = x[k] - mean;
        var += d * d;
      }
      var /= n;
      double inv = 1.0 / std::sqrt(var + eps);
      // h = gamma .* gy; dx = inv * (h - mean(h) - xhat * mean(h .* xhat))
      double mh = 0.0, mhx = 0.0;
      for (int k = 0; k < n; ++k) {
        double xhat = (x[k] - mean) * inv;
        double h = gamma[k] * gy[k];
        mh += h;
        mhx += h * xhat;
        ggamma[k] += gy[k] * xhat;
        gbeta[k] += gy[k];
      }
      mh /= n;
      mhx /= n;
      for (int k = 0; k < n; ++k) {
        double xhat = (x[k] - mean) * inv;
        gxi[k] += inv * (gamma[k] * gy[k] - mh - xhat * mhx);
      }
    }
  }));
}

Var row_softmax(const Var& X) {
  const Tensor& vx = X.value();
  require(vx.rank() == 2, "row_softmax: X must be a matrix");
  int r = vx.dim(0), n = vx.dim(1);
  Tensor y({r, n});
  for (int i = 0; i < r; ++i) {
    kernel::softmax(vx.data() + static_cast<size_t>(i) * n, n,
                    y.data() + static_cast<size_t>(i) * n);
  }
  return Var(make_node(std::move(y), {X.node()}, [r, n](Node& self) {
    Tensor& gx = self.parents[0]->ensure_grad();
    for (int i = 0; i < r; ++i) {
      const double* p = self.value.data() + static_cast<size_t>(i) * n;
      const double* gy = self.grad.data() + static_cast<size_t>(i) * n;
      double* gxi = gx.data() + static_cast<size_t>(i) * n;
      double dotgp = 0.0;
      for (int k = 0; k < n; ++k) dotgp += gy[k] * p[k];
      for (int k = 0; k < n; ++k) gxi[k] += p[k] * (gy[k] - dotgp);
    }
  }));
}

Var embed_row(const Var& table, int id) {
  const Tensor& tv = table.value();
  require(tv.rank() == 2, "embed_row: table must be [K x E]");
  require(id >= 0 && id < tv.dim(0), "embed_row: label id out of range");
  int e = tv.dim(1);
  Tensor y({1, e});
  for (int k = 0; k < e; ++k) y[k] = tv(id, k);
  return Var(make_node(std::move(y), {table.node()}, [id, e](Node& self) {
    Tensor& gt = self.parents[0]->ensure_grad();
    for (int k = 0; k < e; ++k) gt(id, k) += self.grad[k];
  }));
}

Var stack_rows(const std::vector<Var>& rows) {
  require(!rows.empty(), "stack_rows: no rows");
  int d = rows[0].value().dim(1);
  int nrows = static_cast<int>(rows.size());
  Tensor y({nrows, d});
  std::vector<NodePtr> parents;
  parents.reserve(rows.size());
  for (int i = 0; i < nrows; ++i) {
    require(rows[i].value().rank() == 2 && rows[i].value().dim(0) == 1 &&
                rows[i].value().dim(1) == d,
            "stack_rows: rows must be [1 x d]");
    for (int k = 0; k < d; ++k) y(i, k) = rows[i].value()[k];
    parents.push_back(rows[i].node());
  }
  return Var(make_node(std::move(y), std::move(parents), [d](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      Tensor& gp = self.parents[i]->ensure_grad();
      const double* gi = self.grad.data() + i * d;
      for (int k = 0; k < d; ++k) gp[k] += gi[k];
    }
  }));
}

// --- multi-head attention pieces ----------------------------------------------

Var mh_scores(const Var& K, const Var& Q, int heads) {
  const Tensor& kv = K.value();
  const Tensor& qv = Q.value();
  require(kv.rank() == 2 && qv.rank() == 2 && kv.dim(1) == qv.dim(1),
          "mh_scores: K and Q must share the model dimension");
  int D = kv.dim(1);
  require(heads > 0 && D % heads == 0, "mh_scores: D must divide by heads");
  int nk = kv.dim(0), nq = qv.dim(0), d = D / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor s({nk, nq, heads});
  for (int t = 0; t < nk; ++t) {
    for (int u = 0; u < nq; ++u) {
      for (int h = 0; h < heads; ++h) {
        s(t, u, h) = scale * kernel::dot(kv.data() + static_cast<size_t>(t) * D + h * d,
                                         qv.data() + static_cast<size_t>(u) * D + h * d, d);
      }
    }
  }
  return Var(make_node(std::move(s), {K.node(), Q.node()},
                       [nk, nq, heads, d, D, scale](Node& self) {
    const Tensor& kv = self.parents[0]->value;
    const Tensor& qv = self.parents[1]->value;
    Tensor& gk = self.parents[0]->ensure_grad();
    Tensor& gq = self.parents[1]->ensure_grad();
    for (int t = 0; t < nk; ++t) {
      for (int u = 0; u < nq; ++u) {
        for (int h = 0; h < heads; ++h) {
          double gs = self.grad(t, u, h) * scale;
          if (gs == 0.0) continue;
          const double* krow = kv.data() + static_cast<size_t>(t) * D + h * d;
          const double* qrow = qv.data() + static_cast<size_t>(u) * D + h * d;
          double* gkrow = gk.data() + static_cast<size_t>(t) * D + h * d;
          double* gqrow = gq.data() + static_cast<size_t>(u) * D + h * d;
          for (int j = 0; j < d; ++j) {
            gkrow[j] += gs * qrow[j];
            gqrow[j] += gs * krow[j];
          }
        }
      }
    }
  }));
}

Var mh_masked_softmax(const Var& S, const AttentionMask& mask) {
  const Tensor& sv = S.value();
  require(sv.rank() == 3, "mh_masked_softmax: S must be [nk x nq x H]");
  int nk = sv.dim(0), nq = sv.dim(1), heads = sv.dim(2);
  require(mask.rows == nq && mask.cols == nk,
          "mh_masked_softmax: mask must be [queries x keys]");
  for (int u = 0; u < nq; ++u) {
    bool any = false;
    for (int t = 0; t < nk; ++t) any = any || mask.at(u, t);
    require(any, "mh_masked_softmax: mask row has no allowed keys");
  }
  Tensor a({nk, nq, heads});
  std::vector<double> gathered(static_cast<size_t>(nk));
  std::vector<double> probs(static_cast<size_t>(nk));
  for (int u = 0; u < nq; ++u) {
    for (int h = 0; h < heads; ++h) {
      int m = 0;
      for (int t = 0; t < nk; ++t) {
        if (mask.at(u, t)) gathered[m++] = sv(t, u, h);
      }
      kernel::softmax(gathered.data(), m, probs.data());
      int j = 0;
      for (int t = 0; t < nk; ++t) {
        a(t, u, h) = mask.at(u, t) ? probs[j++] : 0.0;
      }
    }
  }
  AttentionMask mcopy = mask;
  return Var(make_node(std::move(a), {S.node()},
                       [nk, nq, heads, mcopy](Node& self) {
    Tensor& gs = self.parents[0]->ensure_grad();
    for (int u = 0; u < nq; ++u) {
      for (int h = 0; h < heads; ++h) {
        double dotgp = 0.0;
        for (int t = 0; t < nk; ++t) {
          if (mcopy.at(u, t)) dotgp += self.grad(t, u, h) * self.value(t, u, h);
        }
        for (int t = 0; t < nk; ++t) {
          if (!mcopy.at(u, t)) continue;
          double p = self.value(t, u, h);
          gs(t, u, h) += p * (self.grad(t, u, h) - dotgp);
        }
      }
    }
  }));
}

Var mh_attend(const Var& A, const Var& V) {
  const Tensor& av = A.value();
  const Tensor& vv = V.value();
  require(av.rank() == 3 && vv.rank() == 2 && av.dim(0) == vv.dim(0),
          "mh_attend: A [nk x nq x H], V [nk x D]");
  int nk = av.dim(0), nq = av.dim(1), heads = av.dim(2), D = vv.dim(1);
  require(D % heads == 0, "mh_attend: D must divide by heads");
  int d = D / heads;
  Tensor c({nq, D});
  for (int u = 0; u < nq; ++u) {
    for (int t = 0; t < nk; ++t) {
      const double* vrow = vv.data() + static_cast<size_t>(t) * D;
      double* crow = c.data() + static_cast<size_t>(u) * D;
      for (int h = 0; h < heads; ++h) {
        double w = av(t, u, h);
        if (w == 0.0) continue;
        for (int j = 0; j < d; ++j) crow[h * d + j] += w * vrow[h * d + j];
      }
    }
  }
  return Var(make_node(std::move(c), {A.node(), V.node()},
                       [nk, nq, heads, d, D](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& vv = self.parents[1]->value;
    Tensor& ga = self.parents[0]->ensure_grad();
    Tensor& gv = self.parents[1]->ensure_grad();
    for (int u = 0; u < nq; ++u) {
      const double* gc = self.grad.data() + static_cast<size_t>(u) * D;
      for (int t = 0; t < nk; ++t) {
        const double* vrow = vv.data() + static_cast<size_t>(t) * D;
        double* gvrow = gv.data() + static_cast<size_t>(t) * D;
        for (int h = 0; h < heads; ++h) {
          double w = av(t, u, h);
          double gacc = 0.0;
          for (int j = 0; j < d; ++j) {
            gacc += gc[h * d + j] * vrow[h * d + j];
            gvrow[h * d + j] += w * gc[h * d + j];
          }
          ga(t, u, h) += gacc;
        }
      }
    }
  }));
}

Var mh_scale_values(const Var& A, const Var& V) {
  const Tensor& av = A.value();
  const Tensor& vv = V.value();
  require(av.rank() == 3 && vv.rank() == 2 && av.dim(0) == vv.dim(0),
          "mh_scale_values: A [nk x nq x H], V [nk x D]");
  int nk = av.dim(0), nq = av.dim(1), heads = av.dim(2), D = vv.dim(1);
  require(D % heads == 0, "mh_scale_values: D must divide by heads");
  int d = D / heads;
  Tensor c({nk * nq, D});
  for (int t = 0; t < nk; ++t) {
    const double* vrow = vv.data() + static_cast<size_t>(t) * D;
    for (int u = 0; u < nq; ++u) {
      double* crow = c.data() + (static_cast<size_t>(t) * nq + u) * D;
      for (int h = 0; h < heads; ++h) {
        double w = av(t, u, h);
        for (int j = 0; j < d; ++j) crow[h * d + j] = w * vrow[h * d + j];
      }
    }
  }
  return Var(make_node(std::move(c), {A.node(), V.node()},
                       [nk, nq, heads, d, D](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& vv = self.parents[1]->value;
    Tensor& ga = self.parents[0]->ensure_grad();
    Tensor& gv = self.parents[1]->ensure_grad();
    for (int t = 0; t < nk; ++t) {
      const double* vrow = vv.data() + static_cast<size_t>(t) * D;
      double* gvrow = gv.data() + static_cast<size_t>(t) * D;
      for (int u = 0; u < nq; ++u) {
        const double* gc =
            self.grad.data() + (static_cast<size_t>(t) * nq + u) * D;
        for (int h = 0; h < heads; ++h) {
          double w = av(t, u, h);
          double gacc = 0.0;
          for (int j = 0; j < d; ++j) {
            gacc += gc[h * d + j] * vrow[h * d + j];
            gvrow[h * d + j] += w * gc[h * d + j];
          }
          ga(t, u, h) += gacc;
        }
      }
    }
  }));
}

// --- lattice assembly ----------------------------------------------------------

Var tile_rows(const Var& X, int reps) {
  const Tensor& vx = X.value();
  require(vx.rank() == 2 && reps > 0, "tile_rows: X must be a matrix");
  int n = vx.dim(0), d = vx.dim(1);
  Tensor y({reps * n, d});
  for (int r = 0; r < reps; ++r) {
    for (int i = 0; i < n; ++i) {
      const double* src = vx.data() + static_cast<size_t>(i) * d;
      double* dst = y.data() + (static_cast<size_t>(r) * n + i) * d;
      for (int k = 0; k < d; ++k) dst[k] = src[k];
    }
  }
  return Var(make_node(std::move(y), {X.node()}, [reps, n, d](Node& self) {
    Tensor& gx = self.parents[0]->ensure_grad();
    for (int r = 0; r < reps; ++r) {
      for (int i = 0; i < n; ++i) {
        const double* g = self.grad.data() + (static_cast<size_t>(r) * n + i) * d;
        double* dst = gx.data() + static_cast<size_t>(i) * d;
        for (int k = 0; k < d; ++k) dst[k] += g[k];
      }
    }
  }));
}

Var outer_row_add(const Var& A, const Var& B) {
  const Tensor& av = A.value();
  const Tensor& bv = B.value();
  require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(1),
          "outer_row_add: matrices with equal width required");
  int na = av.dim(0), nb = bv.dim(0), d = av.dim(1);
  Tensor y({na * nb, d});
  for (int i = 0; i < na; ++i) {
    const double* arow = av.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < nb; ++j) {
      const double* brow = bv.data() + static_cast<size_t>(j) * d;
      double* dst = y.data() + (static_cast<size_t>(i) * nb + j) * d;
      for (int k = 0; k < d; ++k) dst[k] = arow[k] + brow[k];
    }
  }
  return Var(make_node(std::move(y), {A.node(), B.node()},
                       [na, nb, d](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    Tensor& gb = self.parents[1]->ensure_grad();
    for (int i = 0; i < na; ++i) {
      double* garow = ga.data() + static_cast<size_t>(i) * d;
      for (int j = 0; j < nb; ++j) {
        const double* g = self.grad.data() + (static_cast<size_t>(i) * nb + j) * d;
        double* gbrow = gb.data() + static_cast<size_t>(j) * d;
        for (int k = 0; k < d; ++k) {
          garow[k] += g[k];
          gbrow[k] += g[k];
        }
      }
    }
  }));
}

Var factored_concat(const Var& blank, const Var& labels) {
  const Tensor& bv = blank.value();
  const Tensor& lv = labels.value();
  require(bv.rank() == 2 && bv.dim(1) == 1 && lv.rank() == 2 &&
              bv.dim(0) == lv.dim(0),
          "factored_concat: blank [n x 1], labels [n x K]");
  int n = bv.dim(0), K = lv.dim(1);
  Tensor y({n, K + 1});
  for (int i = 0; i < n; ++i) {
    double pb = bv(i, 0);
    y(i, 0) = pb;
    double rest = 1.0 - pb;
    for (int v = 0; v < K; ++v) y(i, v + 1) = rest * lv(i, v);
  }
  return Var(make_node(std::move(y), {blank.node(), labels.node()},
                       [n, K](Node& self) {
    const Tensor& bv = self.parents[0]->value;
    const Tensor& lv = self.parents[1]->value;
    Tensor& gb = self.parents[0]->ensure_grad();
    Tensor& gl = self.parents[1]->ensure_grad();
    for (int i = 0; i < n; ++i) {
      double rest = 1.0 - bv(i, 0);
      double acc = self.grad(i, 0);
      for (int v = 0; v < K; ++v) {
        double gy = self.grad(i, v + 1);
        acc -= gy * lv(i, v);
        gl(i, v) += gy * rest;
      }
      gb(i, 0) += acc;
    }
  }));
}

// --- losses ---------------------------------------------------------------------

Var transducer_loss(const Var& lattice, int T, const std::vector<int>& y) {
  const Tensor& lat = lattice.value();
  require(lat.rank() == 2 && T >= 1, "transducer_loss: lattice [rows x (K+1)]");
  int U = static_cast<int>(y.size());
  int cols = lat.dim(1);
  require(lat.dim(0) == T * (U + 1),
          "transducer_loss: row count must be T*(U+1)");
  for (int v : y) {
    require(v >= 0 && v + 1 < cols, "transducer_loss: label id out of range");
  }

  auto lp = [&](int t, int u, int col) {
    return safe_log(lat(t * (U + 1) + u, col));
  };

  // alpha(t, u): log-probability of consuming t frames (blanks) and the first
  // u labels; alpha(0, 0) = 0. Emitting y_{u} moves u-1 -> u at fixed t,
  // blank moves t-1 -> t at fixed u. Total adds the final blank at (T-1, U).
  std::vector<double> alpha(static_cast<size_t>(T) * (U + 1), kNegInf);
  auto a = [&](int t, int u) -> double& { return alpha[static_cast<size_t>(t) * (U + 1) + u]; };
  a(0, 0) = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double from_blank = t > 0 ? a(t - 1, u) + lp(t - 1, u, 0) : kNegInf;
      double from_label = u > 0 ? a(t, u - 1) + lp(t, u - 1, y[u - 1] + 1) : kNegInf;
      a(t, u) = log_sum_exp2(from_blank, from_label);
    }
  }
  double log_total = a(T - 1, U) + lp(T - 1, U, 0);

  // beta(t, u): log-probability of completing from (t, u), including the
  // emission taken at (t, u) itself.
  std::vector<double> beta(static_cast<size_t>(T) * (U + 1), kNegInf);
  auto bref = [&](int t, int u) -> double& { return beta[static_cast<size_t>(t) * (U + 1) + u]; };
  for (int t = T - 1; t >= 0; --t) {
    for (int u = U; u >= 0; --u) {
      if (t == T - 1 && u == U) {
        bref(t, u) = lp(t, u, 0);
        continue;
      }
      double via_blank = t + 1 < T ? lp(t, u, 0) + bref(t + 1, u) : kNegInf;
      double via_label = u + 1 <= U ? lp(t, u, y[u] + 1) + bref(t, u + 1) : kNegInf;
      bref(t, u) = log_sum_exp2(via_blank, via_label);
    }
  }

  Tensor loss({1});
  loss[0] = -log_total;
  int Up1 = U + 1;
  std::vector<int> yy = y;
  return Var(make_node(std::move(loss), {lattice.node()},
                       [T, Up1, yy, alpha = std::move(alpha),
                        beta = std::move(beta), log_total](Node& self) {
    if (!std::isfinite(log_total)) return;  // infeasible: zero gradient
    double gup = self.grad[0];
    Tensor& gl = self.parents[0]->ensure_grad();
    const int U = Up1 - 1;
    auto a = [&](int t, int u) { return alpha[static_cast<size_t>(t) * Up1 + u]; };
    auto b = [&](int t, int u) { return beta[static_cast<size_t>(t) * Up1 + u]; };
    // d(-logP)/dp_blank(t,u) = -exp(alpha(t,u) + beta(t+1,u) - logP); the
    // final blank at (T-1,U) has occupancy alpha(T-1,U) - logP + that blank.
    for (int t = 0; t < T; ++t) {
      for (int u = 0; u <= U; ++u) {
        int row = t * Up1 + u;
        if (u == U && t == T - 1) {
          gl(row, 0) += -gup * std::exp(a(t, u) - log_total);
        } else if (t + 1 < T) {
          double occ = a(t, u) + b(t + 1, u) - log_total;
          if (std::isfinite(occ)) gl(row, 0) += -gup * std::exp(occ);
        }
        if (u < U) {
          double occ = a(t, u) + b(t, u + 1) - log_total;
          if (std::isfinite(occ)) gl(row, yy[u] + 1) += -gup * std::exp(occ);
        }
      }
    }
  }));
}

Var ctc_loss(const Var& post, const std::vector<int>& y) {
  const Tensor& pv = post.value();
  require(pv.rank() == 2, "ctc_loss: post [T x (K+1)]");
  int T = pv.dim(0), cols = pv.dim(1);
  int U = static_cast<int>(y.size());
  for (int v : y) {
    require(v >= 0 && v + 1 < cols, "ctc_loss: label id out of range");
  }
  int S = 2 * U + 1;
  // Augmented state s: even -> blank, odd -> y[(s-1)/2].
  auto col_of = [&](int s) { return s % 2 == 0 ? 0 : y[(s - 1) / 2] + 1; };
  auto lp = [&](int t, int s) { return safe_log(pv(t, col_of(s))); };
  auto skip_into = [&](int s) {
    // s-2 -> s skip is legal only between different labels.
    return s >= 2 && s % 2 == 1 && y[(s - 1) / 2] != y[(s - 3) / 2];
  };

  std::vector<double> alpha(static_cast<size_t>(T) * S, kNegInf);
  auto a = [&](int t, int s) -> double& { return alpha[static_cast<size_t>(t) * S + s]; };
  a(0, 0) = lp(0, 0);
  if (S > 1) a(0, 1) = lp(0, 1);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double best = a(t - 1, s);
      if (s >= 1) best = log_sum_exp2(best, a(t - 1, s - 1));
      if (skip_into(s)) best = log_sum_exp2(best, a(t - 1, s - 2));
      a(t, s) = best + lp(t, s);
    }
  }
  double log_total = a(T - 1, S - 1);
  if (S > 1) log_total = log_sum_exp2(log_total, a(T - 1, S - 2));

  std::vector<double> beta(static_cast<size_t>(T) * S, kNegInf);
  auto b = [&](int t, int s) -> double& { return beta[static_cast<size_t>(t) * S + s]; };
  b(T - 1, S - 1) = 0.0;
  if (S > 1) b(T - 1, S - 2) = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double acc = lp(t + 1, s) + b(t + 1, s);
      if (s + 1 < S) acc = log_sum_exp2(acc, lp(t + 1, s + 1) + b(t + 1, s + 1));
      if (s + 2 < S && skip_into(s + 2)) {
        acc = log_sum_exp2(acc, lp(t + 1, s + 2) + b(t + 1, s + 2));
      }
      b(t, s) = acc;
    }
  }

  Tensor loss({1});
  loss[0] = -log_total;
  std::vector<int> yy = y;
  return Var(make_node(std::move(loss), {post.node()},
                       [T, S, yy, alpha = std::move(alpha),
                        beta = std::move(beta), log_total](Node& self) {
    if (!std::isfinite(log_total)) return;
    double gup = self.grad[0];
    const Tensor& pv = self.parents[0]->value;
    Tensor& gp = self.parents[0]->ensure_grad();
    auto col_of = [&](int s) { return s % 2 == 0 ? 0 : yy[(s - 1) / 2] + 1; };
    // gamma_t(s) = exp(alpha + beta - logP); d(-logP)/dp(t,c) subtracts
    // gamma/p for every state with symbol c. alpha already contains p, so
    // divide by re-reading the lattice value.
    for (int t = 0; t < T; ++t) {
      for (int s = 0; s < S; ++s) {
        double la = alpha[static_cast<size_t>(t) * S + s];
        double lb = beta[static_cast<size_t>(t) * S + s];
        if (la == kNegInf || lb == kNegInf) continue;
        int c = col_of(s);
        double p = pv(t, c);
        gp(t, c) += -gup * std::exp(la + lb - log_total) / p;
      }
    }
  }));
}

Var ce_loss(const Var& P, const std::vector<int>& targets) {
  const Tensor& pv = P.value();
  require(pv.rank() == 2 && pv.dim(0) == static_cast<int>(targets.size()),
          "ce_loss: one target per row required");
  int n = pv.dim(0), K = pv.dim(1);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    require(targets[i] >= 0 && targets[i] < K, "ce_loss: target out of range");
    total -= safe_log(pv(i, targets[i]));
  }
  Tensor loss({1});
  loss[0] = total;
  std::vector<int> tt = targets;
  return Var(make_node(std::move(loss), {P.node()}, [n, tt, total](Node& self) {
    if (!std::isfinite(total)) return;
    double gup = self.grad[0];
    const Tensor& pv = self.parents[0]->value;
    Tensor& gp = self.parents[0]->ensure_grad();
    for (int i = 0; i < n; ++i) {
      gp(i, tt[i]) += -gup / pv(i, tt[i]);
    }
  }));
}

Var sum_all(const Var& x) {
  double total = 0.0;
  for (int64_t i = 0; i < x.value().numel(); ++i) total += x.value()[i];
  Tensor y({1});
  y[0] = total;
  return Var(make_node(std::move(y), {x.node()}, [](Node& self) {
    Tensor& gx = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[0];
  }));
}

Var scalar_weighted_sum(const std::vector<Var>& xs,
                        const std::vector<double>& ws) {
  require(!xs.empty() && xs.size() == ws.size(),
          "scalar_weighted_sum: one weight per term");
  double total = 0.0;
  std::vector<NodePtr> parents;
  parents.reserve(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    require(xs[i].value().numel() == 1, "scalar_weighted_sum: scalars only");
    total += ws[i] * xs[i].value()[0];
    parents.push_back(xs[i].node());
  }
  Tensor y({1});
  y[0] = total;
  std::vector<double> wcopy = ws;
  return Var(make_node(std::move(y), std::move(parents), [wcopy](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      self.parents[i]->ensure_grad()[0] += wcopy[i] * self.grad[0];
    }
  }));
}

}  // namespace aio
