#include "qlw/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qlw::nn {

Shape Shape::of(std::initializer_list<int> dims) {
  if (dims.size() > 4) throw std::invalid_argument("at most 4 axes");
  Shape s;
  s.nd = static_cast<int>(dims.size());
  int i = 0;
  for (int v : dims) s.d[i++] = v;
  for (; i < 4; ++i) s.d[i] = 1;
  return s;
}

int64_t Shape::numel() const {
  int64_t n = 1;
  for (int i = 0; i < nd; ++i) n *= d[i];
  return n;
}

std::string Shape::str() const {
  std::ostringstream o;
  o << "(";
  for (int i = 0; i < nd; ++i) o << (i ? "," : "") << d[i];
  o << ")";
  return o.str();
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad_scalar(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
         x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

Var Tape::make(Tensor value, std::function<void(Tape&)> back) {
  Node node;
  node.grad = Tensor(value.shape, 0.0);
  node.value = std::move(value);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) { return make(std::move(value), {}); }

void Tape::backward(Var loss_scalar) {
  if (nodes_[loss_scalar.id].value.size() != 1)
    throw std::invalid_argument("backward needs a scalar loss");
  nodes_[loss_scalar.id].grad.v[0] = 1.0;
  for (int i = loss_scalar.id; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back(*this);
  }
}

Var Tape::matmul(Var a, Var w) {
  const Tensor& ta = val(a);
  const Tensor& tw = val(w);
  if (tw.shape.nd != 2) throw std::invalid_argument("matmul weight must be 2-d");
  const int k = tw.shape.d[0];
  const int n = tw.shape.d[1];
  if (ta.shape.d[ta.shape.nd - 1] != k)
    throw std::invalid_argument("matmul inner dims mismatch: " + ta.shape.str() +
                                " @ " + tw.shape.str());
  const int64_t rows = ta.shape.numel() / k;

  Shape out_shape = ta.shape;
  out_shape.d[out_shape.nd - 1] = n;
  Tensor out(out_shape, 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    const double* arow = ta.v.data() + r * k;
    double* orow = out.v.data() + r * n;
    for (int i = 0; i < k; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      const double* wrow = tw.v.data() + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * wrow[j];
    }
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, wid = w.id, oid = o.id, rows, k, n](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    const Tensor& ta2 = t.nodes_[aid].value;
    const Tensor& tw2 = t.nodes_[wid].value;
    Tensor& ga = t.nodes_[aid].grad;
    Tensor& gw = t.nodes_[wid].grad;
    for (int64_t r = 0; r < rows; ++r) {
      const double* grow = go.v.data() + r * n;
      const double* arow = ta2.v.data() + r * k;
      double* garow = ga.v.data() + r * k;
      for (int i = 0; i < k; ++i) {
        const double* wrow = tw2.v.data() + static_cast<int64_t>(i) * n;
        double* gwrow = gw.v.data() + static_cast<int64_t>(i) * n;
        double acc = 0.0;
        const double av = arow[i];
        for (int j = 0; j < n; ++j) {
          acc += grow[j] * wrow[j];
          gwrow[j] += av * grow[j];
        }
        garow[i] += acc;
      }
    }
  };
  return o;
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!(ta.shape == tb.shape)) throw std::invalid_argument("add shape mismatch");
  Tensor out = ta;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] += tb.v[i];
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, bid = b.id, oid = o.id](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    Tensor& ga = t.nodes_[aid].grad;
    Tensor& gb = t.nodes_[bid].grad;
    for (size_t i = 0; i < go.size(); ++i) {
      ga.v[i] += go.v[i];
      gb.v[i] += go.v[i];
    }
  };
  return o;
}

Var Tape::add_bias(Var a, Var bias) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(bias);
  const int n = ta.shape.d[ta.shape.nd - 1];
  if (tb.shape.numel() != n) throw std::invalid_argument("bias length mismatch");
  const int64_t rows = ta.shape.numel() / n;
  Tensor out = ta;
  for (int64_t r = 0; r < rows; ++r) {
    double* orow = out.v.data() + r * n;
    for (int j = 0; j < n; ++j) orow[j] += tb.v[j];
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, bid = bias.id, oid = o.id, rows, n](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    Tensor& ga = t.nodes_[aid].grad;
    Tensor& gb = t.nodes_[bid].grad;
    for (int64_t r = 0; r < rows; ++r) {
      const double* grow = go.v.data() + r * n;
      double* garow = ga.v.data() + r * n;
      for (int j = 0; j < n; ++j) {
        garow[j] += grow[j];
        gb.v[j] += grow[j];
      }
    }
  };
  return o;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!(ta.shape == tb.shape)) throw std::invalid_argument("mul shape mismatch");
  Tensor out = ta;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] *= tb.v[i];
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, bid = b.id, oid = o.id](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    const Tensor& ta2 = t.nodes_[aid].value;
    const Tensor& tb2 = t.nodes_[bid].value;
    Tensor& ga = t.nodes_[aid].grad;
    Tensor& gb = t.nodes_[bid].grad;
    for (size_t i = 0; i < go.size(); ++i) {
      ga.v[i] += go.v[i] * tb2.v[i];
      gb.v[i] += go.v[i] * ta2.v[i];
    }
  };
  return o;
}

Var Tape::scale(Var a, double s) {
  Tensor out = val(a);
  for (double& x : out.v) x *= s;
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, oid = o.id, s](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    Tensor& ga = t.nodes_[aid].grad;
    for (size_t i = 0; i < go.size(); ++i) ga.v[i] += s * go.v[i];
  };
  return o;
}

Var Tape::sigmoid(Var a) {
  Tensor out = val(a);
  for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, oid = o.id](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    const Tensor& vo = t.nodes_[oid].value;
    Tensor& ga = t.nodes_[aid].grad;
    for (size_t i = 0; i < go.size(); ++i) {
      double s = vo.v[i];
      ga.v[i] += go.v[i] * s * (1.0 - s);
    }
  };
  return o;
}

Var Tape::gelu(Var a) {
  Tensor out = val(a);
  for (double& x : out.v) x = gelu_scalar(x);
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, oid = o.id](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    const Tensor& va = t.nodes_[aid].value;
    Tensor& ga = t.nodes_[aid].grad;
    for (size_t i = 0; i < go.size(); ++i)
      ga.v[i] += go.v[i] * gelu_grad_scalar(va.v[i]);
  };
  return o;
}

Var Tape::layer_norm(Var a, Var gamma, Var beta) {
  constexpr double kEps = 1e-5;
  const Tensor& ta = val(a);
  const int n = ta.shape.d[ta.shape.nd - 1];
  if (val(gamma).shape.numel() != n || val(beta).shape.numel() != n)
    throw std::invalid_argument("layer_norm parameter length mismatch");
  const int64_t rows = ta.shape.numel() / n;

  Tensor out(ta.shape, 0.0);
  Tensor norm(ta.shape, 0.0);        // (x - mu) / sigma, needed in backward
  std::vector<double> inv_sigma(rows);
  const Tensor& tg = val(gamma);
  const Tensor& tb = val(beta);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xrow = ta.v.data() + r * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xrow[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (xrow[j] - mu) * (xrow[j] - mu);
    var /= n;
    double is = 1.0 / std::sqrt(var + kEps);
    inv_sigma[r] = is;
    double* nrow = norm.v.data() + r * n;
    double* orow = out.v.data() + r * n;
    for (int j = 0; j < n; ++j) {
      nrow[j] = (xrow[j] - mu) * is;
      orow[j] = tg.v[j] * nrow[j] + tb.v[j];
    }
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, gid = gamma.id, bid = beta.id, oid = o.id, rows, n,
                       norm = std::move(norm), inv_sigma = std::move(inv_sigma)](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    const Tensor& tg2 = t.nodes_[gid].value;
    Tensor& ga = t.nodes_[aid].grad;
    Tensor& gg = t.nodes_[gid].grad;
    Tensor& gb = t.nodes_[bid].grad;
    for (int64_t r = 0; r < rows; ++r) {
      const double* grow = go.v.data() + r * n;
      const double* nrow = norm.v.data() + r * n;
      double mean_g = 0.0, mean_gy = 0.0;
      for (int j = 0; j < n; ++j) {
        double g = grow[j] * tg2.v[j];
        mean_g += g;
        mean_gy += g * nrow[j];
        gg.v[j] += grow[j] * nrow[j];
        gb.v[j] += grow[j];
      }
      mean_g /= n;
      mean_gy /= n;
      double* garow = ga.v.data() + r * n;
      for (int j = 0; j < n; ++j) {
        double g = grow[j] * tg2.v[j];
        garow[j] += inv_sigma[r] * (g - mean_g - nrow[j] * mean_gy);
      }
    }
  };
  return o;
}

Var Tape::softmax_last(Var a) {
  const Tensor& ta = val(a);
  const int n = ta.shape.d[ta.shape.nd - 1];
  const int64_t rows = ta.shape.numel() / n;
  Tensor out(ta.shape, 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xrow = ta.v.data() + r * n;
    double* orow = out.v.data() + r * n;
    double mx = xrow[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xrow[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(xrow[j] - mx);
      z += orow[j];
    }
    for (int j = 0; j < n; ++j) orow[j] /= z;
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, oid = o.id, rows, n](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    const Tensor& vo = t.nodes_[oid].value;
    Tensor& ga = t.nodes_[aid].grad;
    for (int64_t r = 0; r < rows; ++r) {
      const double* grow = go.v.data() + r * n;
      const double* srow = vo.v.data() + r * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += grow[j] * srow[j];
      double* garow = ga.v.data() + r * n;
      for (int j = 0; j < n; ++j) garow[j] += srow[j] * (grow[j] - dot);
    }
  };
  return o;
}

Var Tape::bmm_nt(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.shape.nd != 3 || tb.shape.nd != 3)
    throw std::invalid_argument("bmm expects 3-d tensors");
  const int g = ta.shape.d[0], m = ta.shape.d[1], k = ta.shape.d[2];
  const int n = tb.shape.d[1];
  if (tb.shape.d[0] != g || tb.shape.d[2] != k)
    throw std::invalid_argument("bmm_nt shape mismatch");
  Tensor out(Shape::of({g, m, n}), 0.0);
  for (int gi = 0; gi < g; ++gi) {
    const double* A = ta.v.data() + static_cast<int64_t>(gi) * m * k;
    const double* B = tb.v.data() + static_cast<int64_t>(gi) * n * k;
    double* C = out.v.data() + static_cast<int64_t>(gi) * m * n;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int x = 0; x < k; ++x) acc += A[i * k + x] * B[j * k + x];
        C[i * n + j] = acc;
      }
    }
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, bid = b.id, oid = o.id, g, m, n, k](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    const Tensor& ta2 = t.nodes_[aid].value;
    const Tensor& tb2 = t.nodes_[bid].value;
    Tensor& ga = t.nodes_[aid].grad;
    Tensor& gb = t.nodes_[bid].grad;
    for (int gi = 0; gi < g; ++gi) {
      const double* A = ta2.v.data() + static_cast<int64_t>(gi) * m * k;
      const double* B = tb2.v.data() + static_cast<int64_t>(gi) * n * k;
      const double* G = go.v.data() + static_cast<int64_t>(gi) * m * n;
      double* GA = ga.v.data() + static_cast<int64_t>(gi) * m * k;
      double* GB = gb.v.data() + static_cast<int64_t>(gi) * n * k;
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          double gv = G[i * n + j];
          if (gv == 0.0) continue;
          for (int x = 0; x < k; ++x) {
            GA[i * k + x] += gv * B[j * k + x];
            GB[j * k + x] += gv * A[i * k + x];
          }
        }
      }
    }
  };
  return o;
}

Var Tape::bmm_nn(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.shape.nd != 3 || tb.shape.nd != 3)
    throw std::invalid_argument("bmm expects 3-d tensors");
  const int g = ta.shape.d[0], m = ta.shape.d[1], n = ta.shape.d[2];
  const int k = tb.shape.d[2];
  if (tb.shape.d[0] != g || tb.shape.d[1] != n)
    throw std::invalid_argument("bmm_nn shape mismatch");
  Tensor out(Shape::of({g, m, k}), 0.0);
  for (int gi = 0; gi < g; ++gi) {
    const double* A = ta.v.data() + static_cast<int64_t>(gi) * m * n;
    const double* B = tb.v.data() + static_cast<int64_t>(gi) * n * k;
    double* C = out.v.data() + static_cast<int64_t>(gi) * m * k;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double av = A[i * n + j];
        if (av == 0.0) continue;
        for (int x = 0; x < k; ++x) C[i * k + x] += av * B[j * k + x];
      }
    }
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, bid = b.id, oid = o.id, g, m, n, k](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    const Tensor& ta2 = t.nodes_[aid].value;
    const Tensor& tb2 = t.nodes_[bid].value;
    Tensor& ga = t.nodes_[aid].grad;
    Tensor& gb = t.nodes_[bid].grad;
    for (int gi = 0; gi < g; ++gi) {
      const double* A = ta2.v.data() + static_cast<int64_t>(gi) * m * n;
      const double* B = tb2.v.data() + static_cast<int64_t>(gi) * n * k;
      const double* G = go.v.data() + static_cast<int64_t>(gi) * m * k;
      double* GA = ga.v.data() + static_cast<int64_t>(gi) * m * n;
      double* GB = gb.v.data() + static_cast<int64_t>(gi) * n * k;
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int x = 0; x < k; ++x) {
            acc += G[i * k + x] * B[j * k + x];
            GB[j * k + x] += A[i * n + j] * G[i * k + x];
          }
          GA[i * n + j] += acc;
        }
      }
    }
  };
  return o;
}

Var Tape::permute(Var a, Shape out_shape, std::vector<int64_t> map) {
  const Tensor& ta = val(a);
  if (out_shape.numel() != ta.shape.numel() ||
      map.size() != static_cast<size_t>(ta.shape.numel()))
    throw std::invalid_argument("permute map size mismatch");
  Tensor out(out_shape, 0.0);
  for (size_t i = 0; i < map.size(); ++i) out.v[i] = ta.v[map[i]];
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, oid = o.id, map = std::move(map)](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    Tensor& ga = t.nodes_[aid].grad;
    for (size_t i = 0; i < map.size(); ++i) ga.v[map[i]] += go.v[i];
  };
  return o;
}

Var Tape::reshape(Var a, Shape out_shape) {
  const Tensor& ta = val(a);
  if (out_shape.numel() != ta.shape.numel())
    throw std::invalid_argument("reshape element count mismatch");
  Tensor out = ta;
  out.shape = out_shape;
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, oid = o.id](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    Tensor& ga = t.nodes_[aid].grad;
    for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i];
  };
  return o;
}

Var Tape::dropout_mask(Var a, std::vector<double> mask) {
  const Tensor& ta = val(a);
  if (mask.size() != ta.size()) throw std::invalid_argument("dropout mask mismatch");
  Tensor out = ta;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] *= mask[i];
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [aid = a.id, oid = o.id, mask = std::move(mask)](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    Tensor& ga = t.nodes_[aid].grad;
    for (size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i] * mask[i];
  };
  return o;
}

Var Tape::embed_sum(const std::vector<Var>& tables,
                    const std::vector<std::vector<int>>& indices, int positions) {
  if (tables.empty() || tables.size() != indices.size())
    throw std::invalid_argument("embed_sum table/index mismatch");
  const int dim = val(tables[0]).shape.d[1];
  Tensor out(Shape::of({positions, dim}), 0.0);
  for (size_t t = 0; t < tables.size(); ++t) {
    const Tensor& tab = val(tables[t]);
    if (tab.shape.nd != 2 || tab.shape.d[1] != dim)
      throw std::invalid_argument("embed table must be (rows, D)");
    if (indices[t].size() != static_cast<size_t>(positions))
      throw std::invalid_argument("embed index length mismatch");
    for (int p = 0; p < positions; ++p) {
      const double* row = tab.v.data() + static_cast<int64_t>(indices[t][p]) * dim;
      double* orow = out.v.data() + static_cast<int64_t>(p) * dim;
      for (int j = 0; j < dim; ++j) orow[j] += row[j];
    }
  }
  std::vector<int> table_ids;
  for (Var v : tables) table_ids.push_back(v.id);
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [table_ids, indices, positions, dim, oid = o.id](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    for (size_t ti = 0; ti < table_ids.size(); ++ti) {
      Tensor& gt = t.nodes_[table_ids[ti]].grad;
      for (int p = 0; p < positions; ++p) {
        double* grow = gt.v.data() + static_cast<int64_t>(indices[ti][p]) * dim;
        const double* orow = go.v.data() + static_cast<int64_t>(p) * dim;
        for (int j = 0; j < dim; ++j) grow[j] += orow[j];
      }
    }
  };
  return o;
}

Var Tape::conv1d_time(Var x, Var kernel, Var bias) {
  const Tensor& tx = val(x);
  const Tensor& tk = val(kernel);
  if (tx.shape.nd != 4 || tk.shape.nd != 3)
    throw std::invalid_argument("conv1d_time expects (B,S,N,D) and (K,D,Dout)");
  const int b = tx.shape.d[0], s = tx.shape.d[1], n = tx.shape.d[2], d = tx.shape.d[3];
  const int kw = tk.shape.d[0], dout = tk.shape.d[2];
  if (tk.shape.d[1] != d) throw std::invalid_argument("conv kernel depth mismatch");
  if (kw % 2 == 0) throw std::invalid_argument("conv kernel width must be odd");
  if (val(bias).shape.numel() != dout)
    throw std::invalid_argument("conv bias length mismatch");
  const int c = kw / 2;

  Tensor out(Shape::of({b, s, n, dout}), 0.0);
  const Tensor& tb = val(bias);
  auto xat = [&](int bi, int si, int ni) {
    return tx.v.data() + (((static_cast<int64_t>(bi) * s + si) * n + ni) * d);
  };
  for (int bi = 0; bi < b; ++bi) {
    for (int si = 0; si < s; ++si) {
      for (int ni = 0; ni < n; ++ni) {
        double* orow =
            out.v.data() + (((static_cast<int64_t>(bi) * s + si) * n + ni) * dout);
        for (int j = 0; j < dout; ++j) orow[j] = tb.v[j];
        for (int kk = 0; kk < kw; ++kk) {
          int sj = si + kk - c;
          if (sj < 0 || sj >= s) continue;
          const double* xrow = xat(bi, sj, ni);
          const double* krow = tk.v.data() + static_cast<int64_t>(kk) * d * dout;
          for (int i = 0; i < d; ++i) {
            const double xv = xrow[i];
            if (xv == 0.0) continue;
            const double* kr = krow + static_cast<int64_t>(i) * dout;
            for (int j = 0; j < dout; ++j) orow[j] += xv * kr[j];
          }
        }
      }
    }
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [xid = x.id, kid = kernel.id, bid = bias.id, oid = o.id, b, s, n,
                       d, kw, dout, c](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    const Tensor& tx2 = t.nodes_[xid].value;
    const Tensor& tk2 = t.nodes_[kid].value;
    Tensor& gx = t.nodes_[xid].grad;
    Tensor& gk = t.nodes_[kid].grad;
    Tensor& gb = t.nodes_[bid].grad;
    for (int bi = 0; bi < b; ++bi) {
      for (int si = 0; si < s; ++si) {
        for (int ni = 0; ni < n; ++ni) {
          const double* grow =
              go.v.data() + (((static_cast<int64_t>(bi) * s + si) * n + ni) * dout);
          for (int j = 0; j < dout; ++j) gb.v[j] += grow[j];
          for (int kk = 0; kk < kw; ++kk) {
            int sj = si + kk - c;
            if (sj < 0 || sj >= s) continue;
            const int64_t xoff = (((static_cast<int64_t>(bi) * s + sj) * n + ni) * d);
            const double* xrow = tx2.v.data() + xoff;
            double* gxrow = gx.v.data() + xoff;
            const double* krow = tk2.v.data() + static_cast<int64_t>(kk) * d * dout;
            double* gkrow = gk.v.data() + static_cast<int64_t>(kk) * d * dout;
            for (int i = 0; i < d; ++i) {
              const double* kr = krow + static_cast<int64_t>(i) * dout;
              double* gkr = gkrow + static_cast<int64_t>(i) * dout;
              double acc = 0.0;
              const double xv = xrow[i];
              for (int j = 0; j < dout; ++j) {
                acc += grow[j] * kr[j];
                gkr[j] += xv * grow[j];
              }
              gxrow[i] += acc;
            }
          }
        }
      }
    }
  };
  return o;
}

Var Tape::neighbor_sum(Var x, const std::vector<std::vector<int>>& nbrs) {
  const Tensor& tx = val(x);
  if (tx.shape.nd != 4) throw std::invalid_argument("neighbor_sum expects 4-d");
  const int b = tx.shape.d[0], s = tx.shape.d[1], n = tx.shape.d[2], d = tx.shape.d[3];
  if (nbrs.size() != static_cast<size_t>(n))
    throw std::invalid_argument("adjacency size mismatch");
  Tensor out(tx.shape, 0.0);
  const int64_t planes = static_cast<int64_t>(b) * s;
  for (int64_t pl = 0; pl < planes; ++pl) {
    const double* xp = tx.v.data() + pl * n * d;
    double* op = out.v.data() + pl * n * d;
    for (int ni = 0; ni < n; ++ni) {
      double* orow = op + static_cast<int64_t>(ni) * d;
      for (int m : nbrs[ni]) {
        const double* xrow = xp + static_cast<int64_t>(m) * d;
        for (int j = 0; j < d; ++j) orow[j] += xrow[j];
      }
    }
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [xid = x.id, oid = o.id, planes, n, d, nbrs](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    Tensor& gx = t.nodes_[xid].grad;
    for (int64_t pl = 0; pl < planes; ++pl) {
      const double* gp = go.v.data() + pl * n * d;
      double* xp = gx.v.data() + pl * n * d;
      for (int ni = 0; ni < n; ++ni) {
        const double* grow = gp + static_cast<int64_t>(ni) * d;
        for (int m : nbrs[ni]) {
          double* xrow = xp + static_cast<int64_t>(m) * d;
          for (int j = 0; j < d; ++j) xrow[j] += grow[j];
        }
      }
    }
  };
  return o;
}

Var Tape::add_dist_bias(Var logits, Var table, const std::vector<int>& bucket) {
  const Tensor& tl = val(logits);
  const Tensor& tt = val(table);
  if (tl.shape.nd != 3 || tl.shape.d[1] != tl.shape.d[2])
    throw std::invalid_argument("add_dist_bias expects (G, N, N) logits");
  const int g = tl.shape.d[0], n = tl.shape.d[1];
  const int heads = tt.shape.d[0], buckets = tt.shape.d[1];
  if (bucket.size() != static_cast<size_t>(n) * n)
    throw std::invalid_argument("bucket table size mismatch");
  if (g % heads != 0) throw std::invalid_argument("group count not divisible by heads");
  for (int idx : bucket) {
    if (idx < 0 || idx >= buckets) throw std::invalid_argument("bucket out of range");
  }
  Tensor out = tl;
  for (int gi = 0; gi < g; ++gi) {
    const int h = gi % heads;
    const double* trow = tt.v.data() + static_cast<int64_t>(h) * buckets;
    double* orow = out.v.data() + static_cast<int64_t>(gi) * n * n;
    for (int ij = 0; ij < n * n; ++ij) orow[ij] += trow[bucket[ij]];
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [lid = logits.id, tid = table.id, oid = o.id, g, n, heads, buckets,
                       bucket](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    Tensor& gl = t.nodes_[lid].grad;
    Tensor& gt = t.nodes_[tid].grad;
    for (size_t i = 0; i < go.size(); ++i) gl.v[i] += go.v[i];
    for (int gi = 0; gi < g; ++gi) {
      const int h = gi % heads;
      double* trow = gt.v.data() + static_cast<int64_t>(h) * buckets;
      const double* grow = go.v.data() + static_cast<int64_t>(gi) * n * n;
      for (int ij = 0; ij < n * n; ++ij) trow[bucket[ij]] += grow[ij];
    }
  };
  return o;
}

Var Tape::slice_last_time(Var x) {
  const Tensor& tx = val(x);
  if (tx.shape.nd != 4) throw std::invalid_argument("slice_last_time expects 4-d");
  const int b = tx.shape.d[0], s = tx.shape.d[1], n = tx.shape.d[2], d = tx.shape.d[3];
  Tensor out(Shape::of({b, n, d}), 0.0);
  for (int bi = 0; bi < b; ++bi) {
    const double* src =
        tx.v.data() + (((static_cast<int64_t>(bi) * s + (s - 1)) * n) * d);
    double* dst = out.v.data() + static_cast<int64_t>(bi) * n * d;
    std::copy(src, src + static_cast<int64_t>(n) * d, dst);
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [xid = x.id, oid = o.id, b, s, n, d](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    Tensor& gx = t.nodes_[xid].grad;
    for (int bi = 0; bi < b; ++bi) {
      double* dst = gx.v.data() + (((static_cast<int64_t>(bi) * s + (s - 1)) * n) * d);
      const double* src = go.v.data() + static_cast<int64_t>(bi) * n * d;
      for (int64_t i = 0; i < static_cast<int64_t>(n) * d; ++i) dst[i] += src[i];
    }
  };
  return o;
}

Var Tape::slice_sn(Var x, int s_count, int n_count) {
  const Tensor& tx = val(x);
  if (tx.shape.nd != 4) throw std::invalid_argument("slice_sn expects 4-d");
  const int b = tx.shape.d[0], s = tx.shape.d[1], n = tx.shape.d[2], d = tx.shape.d[3];
  if (s_count > s || n_count > n) throw std::invalid_argument("slice_sn out of range");
  Tensor out(Shape::of({b, s_count, n_count, d}), 0.0);
  for (int bi = 0; bi < b; ++bi) {
    for (int si = 0; si < s_count; ++si) {
      for (int ni = 0; ni < n_count; ++ni) {
        const double* src =
            tx.v.data() + (((static_cast<int64_t>(bi) * s + si) * n + ni) * d);
        double* dst = out.v.data() +
                      (((static_cast<int64_t>(bi) * s_count + si) * n_count + ni) * d);
        std::copy(src, src + d, dst);
      }
    }
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [xid = x.id, oid = o.id, b, s, n, d, s_count, n_count](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    Tensor& gx = t.nodes_[xid].grad;
    for (int bi = 0; bi < b; ++bi) {
      for (int si = 0; si < s_count; ++si) {
        for (int ni = 0; ni < n_count; ++ni) {
          double* dst =
              gx.v.data() + (((static_cast<int64_t>(bi) * s + si) * n + ni) * d);
          const double* src =
              go.v.data() +
              (((static_cast<int64_t>(bi) * s_count + si) * n_count + ni) * d);
          for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
      }
    }
  };
  return o;
}

Var Tape::mean_nodes(Var x) {
  const Tensor& tx = val(x);
  if (tx.shape.nd != 3) throw std::invalid_argument("mean_nodes expects (B, N, D)");
  const int b = tx.shape.d[0], n = tx.shape.d[1], d = tx.shape.d[2];
  Tensor out(Shape::of({b, d}), 0.0);
  for (int bi = 0; bi < b; ++bi) {
    double* orow = out.v.data() + static_cast<int64_t>(bi) * d;
    for (int ni = 0; ni < n; ++ni) {
      const double* xrow = tx.v.data() + ((static_cast<int64_t>(bi) * n + ni) * d);
      for (int j = 0; j < d; ++j) orow[j] += xrow[j];
    }
    for (int j = 0; j < d; ++j) orow[j] /= n;
  }
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [xid = x.id, oid = o.id, b, n, d](Tape& t) {
    const Tensor& go = t.nodes_[oid].grad;
    Tensor& gx = t.nodes_[xid].grad;
    for (int bi = 0; bi < b; ++bi) {
      const double* grow = go.v.data() + static_cast<int64_t>(bi) * d;
      for (int ni = 0; ni < n; ++ni) {
        double* xrow = gx.v.data() + ((static_cast<int64_t>(bi) * n + ni) * d);
        for (int j = 0; j < d; ++j) xrow[j] += grow[j] / n;
      }
    }
  };
  return o;
}

Var Tape::bce_with_logits(Var logits, const std::vector<double>& targets,
                          const std::vector<double>& mask, double pos_weight,
                          int64_t* kept_out) {
  const Tensor& tl = val(logits);
  if (targets.size() != tl.size() || mask.size() != tl.size())
    throw std::invalid_argument("bce target/mask size mismatch");
  auto softplus = [](double t) {
    return std::log1p(std::exp(-std::abs(t))) + std::max(t, 0.0);
  };
  double total = 0.0;
  int64_t kept = 0;
  for (size_t i = 0; i < tl.size(); ++i) {
    if (mask[i] == 0.0) continue;
    ++kept;
    double l = tl.v[i], y = targets[i];
    total += pos_weight * y * softplus(-l) + (1.0 - y) * softplus(l);
  }
  if (kept_out) *kept_out = kept;
  Tensor out(Shape::of({1}), kept ? total / kept : 0.0);
  Var o = make(std::move(out), {});
  nodes_[o.id].back = [lid = logits.id, oid = o.id, targets, mask, pos_weight,
                       kept](Tape& t) {
    if (!kept) return;
    const double g = t.nodes_[oid].grad.v[0] / kept;
    const Tensor& tl2 = t.nodes_[lid].value;
    Tensor& gl = t.nodes_[lid].grad;
    for (size_t i = 0; i < tl2.size(); ++i) {
      if (mask[i] == 0.0) continue;
      double s = 1.0 / (1.0 + std::exp(-tl2.v[i]));
      double y = targets[i];
      gl.v[i] += g * ((1.0 - y) * s - pos_weight * y * (1.0 - s));
    }
  };
  return o;
}

}  // namespace qlw::nn
