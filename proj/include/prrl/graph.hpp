#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "prrl/kernels.hpp"
#include "prrl/params.hpp"

namespace prrl {

template <class S>
class GraphT;

// Handle to a node on a graph's tape.
template <class S>
struct Val {
  GraphT<S>* g = nullptr;
  int id = -1;

  const TensorT<S>& value() const;
  S scalar() const;
};

// Dynamic tape, rebuilt per training step. Nodes are appended in creation
// order, which is a topological order by construction; backward() sweeps
// the tape once in reverse and then the graph is consumed.
template <class S>
class GraphT {
 public:
  using BackFn = std::function<void(GraphT&, int)>;

  struct Node {
    TensorT<S> val;
    TensorT<S> grad;  // allocated by backward()
    BackFn back;
    ParamT<S>* par = nullptr;
  };

  Val<S> leaf(TensorT<S> v) {
    return {this, add_node(std::move(v), nullptr)};
  }

  // Parameter leaf: the tape snapshots the value; backward accumulates
  // into the parameter's persistent grad buffer.
  Val<S> param(ParamT<S>& p) {
    int id = add_node(TensorT<S>(p.value), [](GraphT& g, int self) {
      Node& n = g.nodes_[self];
      TensorT<S>& pg = n.par->grad;
      for (int64_t i = 0; i < pg.numel(); ++i) pg.data[i] += n.grad.data[i];
      n.par->grad_valid = true;
    });
    nodes_[id].par = &p;
    return {this, id};
  }

  int add_node(TensorT<S> v, BackFn back) {
    if (consumed_)
      throw data_error("graph consumed: cannot record ops after backward");
    nodes_.push_back(Node{std::move(v), TensorT<S>(), std::move(back), nullptr});
    return (int)nodes_.size() - 1;
  }

  const TensorT<S>& val(int id) const { return nodes_[id].val; }
  TensorT<S>& grad(int id) { return nodes_[id].grad; }
  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void backward(Val<S> loss) {
    if (consumed_) throw data_error("graph consumed: backward already ran on this graph");
    if (loss.g != this) throw data_error("backward: loss lives on a different graph");
    if (nodes_[loss.id].val.numel() != 1)
      throw data_error("backward: loss must be scalar, got shape " +
                       shape_str(nodes_[loss.id].val.shape));
    for (int i = 0; i <= loss.id; ++i)
      nodes_[i].grad = TensorT<S>::zeros(nodes_[i].val.shape);
    nodes_[loss.id].grad.data[0] = S(1);
    for (int i = loss.id; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(*this, i);
    consumed_ = true;
  }

 private:
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

template <class S>
const TensorT<S>& Val<S>::value() const {
  return g->val(id);
}

template <class S>
S Val<S>::scalar() const {
  const TensorT<S>& t = g->val(id);
  if (t.numel() != 1) throw data_error("scalar() on tensor of shape " + shape_str(t.shape));
  return t.data[0];
}

namespace detail {
template <class S>
GraphT<S>* same_graph(Val<S> a, Val<S> b) {
  if (a.g == nullptr || a.g != b.g)
    throw data_error("op inputs must live on the same graph");
  return a.g;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Forward ops. Each records its backward closure on the tape.
// ---------------------------------------------------------------------------

template <class S>
Val<S> matmul(Val<S> a, Val<S> b) {
  GraphT<S>* g = detail::same_graph(a, b);
  const TensorT<S>& A = a.value();
  const TensorT<S>& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
    throw data_error("matmul: incompatible shapes " + shape_str(A.shape) + " * " +
                     shape_str(B.shape));
  TensorT<S> C({A.rows(), B.cols()});
  gemm(A, false, B, false, C, false);
  int id = g->add_node(std::move(C), [ai = a.id, bi = b.id](GraphT<S>& g, int self) {
    gemm(g.grad(self), false, g.val(bi), true, g.grad(ai), true);  // dA += dC*B^T
    gemm(g.val(ai), true, g.grad(self), false, g.grad(bi), true);  // dB += A^T*dC
  });
  return {g, id};
}

// C = A * B^T; used for attention scores.
template <class S>
Val<S> matmul_nt(Val<S> a, Val<S> b) {
  GraphT<S>* g = detail::same_graph(a, b);
  const TensorT<S>& A = a.value();
  const TensorT<S>& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols())
    throw data_error("matmul_nt: incompatible shapes " + shape_str(A.shape) + " * " +
                     shape_str(B.shape) + "^T");
  TensorT<S> C({A.rows(), B.rows()});
  gemm(A, false, B, true, C, false);
  int id = g->add_node(std::move(C), [ai = a.id, bi = b.id](GraphT<S>& g, int self) {
    gemm(g.grad(self), false, g.val(bi), false, g.grad(ai), true);  // dA += dC*B
    gemm(g.grad(self), true, g.val(ai), false, g.grad(bi), true);   // dB += dC^T*A
  });
  return {g, id};
}

template <class S>
Val<S> add(Val<S> a, Val<S> b) {
  GraphT<S>* g = detail::same_graph(a, b);
  const TensorT<S>& A = a.value();
  const TensorT<S>& B = b.value();
  if (!A.same_shape(B))
    throw data_error("add: shape mismatch " + shape_str(A.shape) + " vs " +
                     shape_str(B.shape));
  TensorT<S> C(A.shape);
  for (int64_t i = 0; i < C.numel(); ++i) C.data[i] = A.data[i] + B.data[i];
  int id = g->add_node(std::move(C), [ai = a.id, bi = b.id](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    TensorT<S>& da = g.grad(ai);
    TensorT<S>& db = g.grad(bi);
    for (int64_t i = 0; i < d.numel(); ++i) {
      da.data[i] += d.data[i];
      db.data[i] += d.data[i];
    }
  });
  return {g, id};
}

// x (r x n) + v (n), v broadcast over rows. Biases and additive masks.
template <class S>
Val<S> add_row(Val<S> x, Val<S> v) {
  GraphT<S>* g = detail::same_graph(x, v);
  const TensorT<S>& X = x.value();
  const TensorT<S>& V = v.value();
  if (V.rank() != 1 || X.cols() != V.cols())
    throw data_error("add_row: shape mismatch " + shape_str(X.shape) + " vs " +
                     shape_str(V.shape));
  TensorT<S> C(X.shape);
  const int r = X.rows(), n = X.cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n; ++j) C.at(i, j) = X.at(i, j) + V.data[j];
  int id = g->add_node(std::move(C), [xi = x.id, vi = v.id](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    TensorT<S>& dx = g.grad(xi);
    TensorT<S>& dv = g.grad(vi);
    const int r = d.rows(), n = d.cols();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < n; ++j) {
        dx.at(i, j) += d.at(i, j);
        dv.data[j] += d.at(i, j);
      }
  });
  return {g, id};
}

template <class S>
Val<S> mul(Val<S> a, Val<S> b) {
  GraphT<S>* g = detail::same_graph(a, b);
  const TensorT<S>& A = a.value();
  const TensorT<S>& B = b.value();
  if (!A.same_shape(B))
    throw data_error("mul: shape mismatch " + shape_str(A.shape) + " vs " +
                     shape_str(B.shape));
  TensorT<S> C(A.shape);
  for (int64_t i = 0; i < C.numel(); ++i) C.data[i] = A.data[i] * B.data[i];
  int id = g->add_node(std::move(C), [ai = a.id, bi = b.id](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    TensorT<S>& da = g.grad(ai);
    TensorT<S>& db = g.grad(bi);
    const TensorT<S>& A = g.val(ai);
    const TensorT<S>& B = g.val(bi);
    for (int64_t i = 0; i < d.numel(); ++i) {
      da.data[i] += d.data[i] * B.data[i];
      db.data[i] += d.data[i] * A.data[i];
    }
  });
  return {g, id};
}

// x (r x n) * v (n) broadcast over rows. Layer-norm gain.
template <class S>
Val<S> mul_row(Val<S> x, Val<S> v) {
  GraphT<S>* g = detail::same_graph(x, v);
  const TensorT<S>& X = x.value();
  const TensorT<S>& V = v.value();
  if (V.rank() != 1 || X.cols() != V.cols())
    throw data_error("mul_row: shape mismatch " + shape_str(X.shape) + " vs " +
                     shape_str(V.shape));
  TensorT<S> C(X.shape);
  const int r = X.rows(), n = X.cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n; ++j) C.at(i, j) = X.at(i, j) * V.data[j];
  int id = g->add_node(std::move(C), [xi = x.id, vi = v.id](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    TensorT<S>& dx = g.grad(xi);
    TensorT<S>& dv = g.grad(vi);
    const TensorT<S>& X = g.val(xi);
    const TensorT<S>& V = g.val(vi);
    const int r = d.rows(), n = d.cols();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < n; ++j) {
        dx.at(i, j) += d.at(i, j) * V.data[j];
        dv.data[j] += d.at(i, j) * X.at(i, j);
      }
  });
  return {g, id};
}

template <class S>
Val<S> relu(Val<S> x) {
  GraphT<S>* g = x.g;
  const TensorT<S>& X = x.value();
  TensorT<S> C(X.shape);
  for (int64_t i = 0; i < C.numel(); ++i) C.data[i] = X.data[i] > S(0) ? X.data[i] : S(0);
  int id = g->add_node(std::move(C), [xi = x.id](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    const TensorT<S>& X = g.val(xi);
    TensorT<S>& dx = g.grad(xi);
    for (int64_t i = 0; i < d.numel(); ++i)
      if (X.data[i] > S(0)) dx.data[i] += d.data[i];
  });
  return {g, id};
}

template <class S>
Val<S> scale(Val<S> x, double c) {
  GraphT<S>* g = x.g;
  const TensorT<S>& X = x.value();
  TensorT<S> C(X.shape);
  for (int64_t i = 0; i < C.numel(); ++i) C.data[i] = (S)((double)X.data[i] * c);
  int id = g->add_node(std::move(C), [xi = x.id, c](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    TensorT<S>& dx = g.grad(xi);
    for (int64_t i = 0; i < d.numel(); ++i) dx.data[i] += (S)((double)d.data[i] * c);
  });
  return {g, id};
}

// Gathers rows of table; gradient scatters back into the table rows.
template <class S>
Val<S> embedding_lookup(Val<S> table, std::vector<int> ids) {
  GraphT<S>* g = table.g;
  const TensorT<S>& T = table.value();
  if (T.rank() != 2) throw data_error("embedding_lookup: table must be 2-D");
  const int n = (int)ids.size(), d = T.cols();
  for (int i : ids)
    if (i < 0 || i >= T.rows())
      throw data_error("embedding_lookup: id " + std::to_string(i) +
                       " out of range for table " + shape_str(T.shape));
  TensorT<S> C({n, d});
  for (int i = 0; i < n; ++i)
    std::copy(T.row(ids[i]), T.row(ids[i]) + d, C.row(i));
  int id = g->add_node(std::move(C), [ti = table.id, ids = std::move(ids)](GraphT<S>& g, int self) {
    const TensorT<S>& dout = g.grad(self);
    TensorT<S>& dt = g.grad(ti);
    const int d = dout.cols();
    for (int i = 0; i < (int)ids.size(); ++i) {
      S* trow = dt.row(ids[i]);
      const S* orow = dout.row(i);
      for (int j = 0; j < d; ++j) trow[j] += orow[j];
    }
  });
  return {g, id};
}

// Normalizes the last axis to mean 0 / variance 1 (no affine terms; compose
// with mul_row/add_row for gain and shift).
template <class S>
Val<S> layer_norm(Val<S> x) {
  GraphT<S>* g = x.g;
  const TensorT<S>& X = x.value();
  const int n = X.cols(), r = (int)(X.numel() / n);
  if (n < 1) throw data_error("layer_norm: empty last axis");
  constexpr double kEps = 1e-5;
  TensorT<S> C(X.shape);
  layer_norm_lastdim(X.data.data(), C.data.data(), r, n, kEps);
  int id = g->add_node(std::move(C), [xi = x.id](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    const TensorT<S>& X = g.val(xi);
    const TensorT<S>& Y = g.val(self);
    TensorT<S>& dx = g.grad(xi);
    const int n = X.cols(), r = (int)(X.numel() / n);
    for (int i = 0; i < r; ++i) {
      const S* xr = X.data.data() + (size_t)i * n;
      const S* yr = Y.data.data() + (size_t)i * n;
      const S* dr = d.data.data() + (size_t)i * n;
      S* dxr = dx.data.data() + (size_t)i * n;
      double mean = 0.0, var = 0.0;
      for (int j = 0; j < n; ++j) mean += (double)xr[j];
      mean /= n;
      for (int j = 0; j < n; ++j) {
        double dv = (double)xr[j] - mean;
        var += dv * dv;
      }
      var /= n;
      const double inv = 1.0 / std::sqrt(var + 1e-5);
      double gmean = 0.0, gymean = 0.0;
      for (int j = 0; j < n; ++j) {
        gmean += (double)dr[j];
        gymean += (double)dr[j] * (double)yr[j];
      }
      gmean /= n;
      gymean /= n;
      for (int j = 0; j < n; ++j)
        dxr[j] += (S)(inv * ((double)dr[j] - gmean - (double)yr[j] * gymean));
    }
  });
  return {g, id};
}

// Softmax along `axis` of a 1-D or 2-D tensor.
template <class S>
Val<S> softmax(Val<S> x, int axis = -1) {
  GraphT<S>* g = x.g;
  const TensorT<S>& X = x.value();
  if (X.rank() > 2) throw data_error("softmax: rank-" + std::to_string(X.rank()) + " input unsupported");
  if (axis < 0) axis += std::max(X.rank(), 1);
  if (axis != 0 && axis != 1)
    throw data_error("softmax: bad axis " + std::to_string(axis) + " for shape " + shape_str(X.shape));
  const bool rowwise = (X.rank() <= 1) || axis == 1;

  TensorT<S> C(X.shape);
  if (rowwise) {
    softmax_lastdim(X.data.data(), C.data.data(), X.rows(), X.cols());
  } else {
    // column softmax: strided.
    const int r = X.rows(), n = X.cols();
    std::vector<S> col(r), out(r);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < r; ++i) col[i] = X.at(i, j);
      softmax_lastdim(col.data(), out.data(), 1, r);
      for (int i = 0; i < r; ++i) C.at(i, j) = out[i];
    }
  }
  int id = g->add_node(std::move(C), [xi = x.id, rowwise](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    const TensorT<S>& P = g.val(self);
    TensorT<S>& dx = g.grad(xi);
    const int r = P.rows(), n = P.cols();
    if (rowwise) {
      for (int i = 0; i < r; ++i) {
        const S* pr = P.row(i);
        const S* dr = d.row(i);
        S* dxr = dx.row(i);
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += (double)pr[j] * (double)dr[j];
        for (int j = 0; j < n; ++j) dxr[j] += (S)((double)pr[j] * ((double)dr[j] - s));
      }
    } else {
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < r; ++i) s += (double)P.at(i, j) * (double)d.at(i, j);
        for (int i = 0; i < r; ++i)
          dx.at(i, j) += (S)((double)P.at(i, j) * ((double)d.at(i, j) - s));
      }
    }
  });
  return {g, id};
}

template <class S>
Val<S> concat(const std::vector<Val<S>>& parts, int axis) {
  if (parts.empty()) throw data_error("concat: no inputs");
  GraphT<S>* g = parts[0].g;
  std::vector<int> ids;
  for (Val<S> p : parts) {
    detail::same_graph(parts[0], p);
    ids.push_back(p.id);
  }
  const int rank = std::max(parts[0].value().rank(), 1);
  if (axis < 0) axis += rank;
  if (axis != 0 && axis != 1) throw data_error("concat: bad axis " + std::to_string(axis));

  if (axis == 0) {
    const int n = parts[0].value().cols();
    int rtot = 0;
    for (Val<S> p : parts) {
      if (p.value().cols() != n)
        throw data_error("concat: column mismatch " + shape_str(p.value().shape) +
                         " vs " + shape_str(parts[0].value().shape));
      rtot += p.value().rows();
    }
    TensorT<S> C({rtot, n});
    int at = 0;
    for (Val<S> p : parts) {
      std::copy(p.value().data.begin(), p.value().data.end(), C.row(at));
      at += p.value().rows();
    }
    int id = g->add_node(std::move(C), [ids](GraphT<S>& g, int self) {
      const TensorT<S>& d = g.grad(self);
      int at = 0;
      for (int pid : ids) {
        TensorT<S>& dp = g.grad(pid);
        const int rows = dp.rows(), n = d.cols();
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < n; ++j) dp.at(i, j) += d.at(at + i, j);
        at += rows;
      }
    });
    return {g, id};
  }

  const int r = parts[0].value().rows();
  int ntot = 0;
  for (Val<S> p : parts) {
    if (p.value().rows() != r)
      throw data_error("concat: row mismatch " + shape_str(p.value().shape) + " vs " +
                       shape_str(parts[0].value().shape));
    ntot += p.value().cols();
  }
  TensorT<S> C({r, ntot});
  int at = 0;
  for (Val<S> p : parts) {
    const TensorT<S>& P = p.value();
    for (int i = 0; i < r; ++i)
      std::copy(P.row(i), P.row(i) + P.cols(), C.row(i) + at);
    at += P.cols();
  }
  int id = g->add_node(std::move(C), [ids](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    int at = 0;
    for (int pid : ids) {
      TensorT<S>& dp = g.grad(pid);
      const int r = dp.rows(), n = dp.cols();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j) dp.at(i, j) += d.at(i, at + j);
      at += n;
    }
  });
  return {g, id};
}

template <class S>
Val<S> slice_cols(Val<S> x, int c0, int c1) {
  GraphT<S>* g = x.g;
  const TensorT<S>& X = x.value();
  if (c0 < 0 || c1 > X.cols() || c0 >= c1)
    throw data_error("slice_cols: bad range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") for " + shape_str(X.shape));
  const int r = X.rows(), n = c1 - c0;
  TensorT<S> C({r, n});
  for (int i = 0; i < r; ++i)
    std::copy(X.row(i) + c0, X.row(i) + c1, C.row(i));
  int id = g->add_node(std::move(C), [xi = x.id, c0](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    TensorT<S>& dx = g.grad(xi);
    for (int i = 0; i < d.rows(); ++i)
      for (int j = 0; j < d.cols(); ++j) dx.at(i, c0 + j) += d.at(i, j);
  });
  return {g, id};
}

template <class S>
Val<S> slice_rows(Val<S> x, int r0, int r1) {
  GraphT<S>* g = x.g;
  const TensorT<S>& X = x.value();
  if (r0 < 0 || r1 > X.rows() || r0 >= r1)
    throw data_error("slice_rows: bad range [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ") for " + shape_str(X.shape));
  const int n = X.cols();
  TensorT<S> C({r1 - r0, n});
  std::copy(X.row(r0), X.row(r0) + (size_t)(r1 - r0) * n, C.data.begin());
  int id = g->add_node(std::move(C), [xi = x.id, r0](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    TensorT<S>& dx = g.grad(xi);
    for (int i = 0; i < d.rows(); ++i)
      for (int j = 0; j < d.cols(); ++j) dx.at(r0 + i, j) += d.at(i, j);
  });
  return {g, id};
}

template <class S>
Val<S> reshape(Val<S> x, Shape sh) {
  GraphT<S>* g = x.g;
  const TensorT<S>& X = x.value();
  if (shape_numel(sh) != X.numel())
    throw data_error("reshape: cannot view " + shape_str(X.shape) + " as " + shape_str(sh));
  TensorT<S> C(sh, X.data);
  int id = g->add_node(std::move(C), [xi = x.id](GraphT<S>& g, int self) {
    const TensorT<S>& d = g.grad(self);
    TensorT<S>& dx = g.grad(xi);
    for (int64_t i = 0; i < d.numel(); ++i) dx.data[i] += d.data[i];
  });
  return {g, id};
}

// Scalar sum of all elements, accumulated in double.
template <class S>
Val<S> sum(Val<S> x) {
  GraphT<S>* g = x.g;
  const TensorT<S>& X = x.value();
  double total = 0.0;
  for (S v : X.data) total += (double)v;
  int id = g->add_node(TensorT<S>(Shape{}, {(S)total}), [xi = x.id](GraphT<S>& g, int self) {
    const S d = g.grad(self).data[0];
    TensorT<S>& dx = g.grad(xi);
    for (int64_t i = 0; i < dx.numel(); ++i) dx.data[i] += d;
  });
  return {g, id};
}

enum class Reduction { Mean, Sum };

// Masked token-level cross entropy with log-sum-exp stabilization; the
// masked-out rows contribute nothing to value or gradient.
template <class S>
Val<S> cross_entropy(Val<S> logits, std::vector<int> labels, std::vector<uint8_t> mask,
                     Reduction red = Reduction::Mean) {
  GraphT<S>* g = logits.g;
  const TensorT<S>& X = logits.value();
  if (X.rank() != 2) throw data_error("cross_entropy: logits must be [N x K]");
  const int n = X.rows(), k = X.cols();
  if ((int)labels.size() != n || (int)mask.size() != n)
    throw data_error("cross_entropy: labels/mask length must match logits rows");
  int64_t m = 0;
  for (int i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    ++m;
    if (labels[i] < 0 || labels[i] >= k)
      throw data_error("cross_entropy: label " + std::to_string(labels[i]) +
                       " out of range [0," + std::to_string(k) + ") at row " +
                       std::to_string(i));
  }
  if (m == 0) throw data_error("cross_entropy: all positions masked out (empty loss)");

  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const S* xr = X.row(i);
    double mx = (double)xr[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, (double)xr[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp((double)xr[j] - mx);
    total += -((double)xr[labels[i]] - mx - std::log(sum));
  }
  const double denom = red == Reduction::Mean ? (double)m : 1.0;
  TensorT<S> C(Shape{}, {(S)(total / denom)});
  if (!C.all_finite())
    throw numeric_error("cross_entropy: non-finite loss value");

  int id = g->add_node(
      std::move(C), [xi = logits.id, labels = std::move(labels), mask = std::move(mask),
                     denom](GraphT<S>& g, int self) {
        const double gout = (double)g.grad(self).data[0] / denom;
        const TensorT<S>& X = g.val(xi);
        TensorT<S>& dx = g.grad(xi);
        const int n = X.rows(), k = X.cols();
        std::vector<double> p(k);
        for (int i = 0; i < n; ++i) {
          if (!mask[i]) continue;
          const S* xr = X.row(i);
          double mx = (double)xr[0];
          for (int j = 1; j < k; ++j) mx = std::max(mx, (double)xr[j]);
          double sum = 0.0;
          for (int j = 0; j < k; ++j) {
            p[j] = std::exp((double)xr[j] - mx);
            sum += p[j];
          }
          S* dxr = dx.row(i);
          for (int j = 0; j < k; ++j)
            dxr[j] += (S)(gout * (p[j] / sum - (j == labels[i] ? 1.0 : 0.0)));
        }
      });
  return {g, id};
}

// Inverted-scale dropout recorded as a mul against a mask leaf.
template <class S>
Val<S> dropout(Val<S> x, double p, std::mt19937& rng) {
  if (p <= 0.0) return x;
  GraphT<S>* g = x.g;
  TensorT<S> mask(x.value().shape);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const S keep = (S)(1.0 / (1.0 - p));
  for (auto& v : mask.data) v = u(rng) < p ? S(0) : keep;
  return mul(x, g->leaf(std::move(mask)));
}

}  // namespace prrl
