#pragma once

#include <cmath>
#include <vector>

#include "prrl/tensor.hpp"

namespace prrl {

// C (m x n) = op(A) * op(B), or += when acc. Reductions run in double
// regardless of S; loop orders keep the inner axis contiguous.
template <class S>
void gemm(const TensorT<S>& A, bool ta, const TensorT<S>& B, bool tb,
          TensorT<S>& C, bool acc) {
  const int m = ta ? A.cols() : A.rows();
  const int k = ta ? A.rows() : A.cols();
  const int kb = tb ? B.cols() : B.rows();
  const int n = tb ? B.rows() : B.cols();
  if (k != kb)
    throw data_error("gemm: inner dimensions disagree, " + shape_str(A.shape) +
                     (ta ? "^T" : "") + " * " + shape_str(B.shape) + (tb ? "^T" : ""));
  if (C.rows() != m || C.cols() != n)
    throw data_error("gemm: output shape " + shape_str(C.shape) + " wants [" +
                     std::to_string(m) + "x" + std::to_string(n) + "]");

  static thread_local std::vector<double> rowbuf;
  if (!tb) {
    // nn / tn: accumulate one output row as an axpy over rows of B.
    rowbuf.assign(n, 0.0);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) rowbuf[j] = 0.0;
      for (int p = 0; p < k; ++p) {
        const double a = ta ? (double)A.at(p, i) : (double)A.at(i, p);
        if (a == 0.0) continue;
        const S* brow = B.row(p);
        for (int j = 0; j < n; ++j) rowbuf[j] += a * (double)brow[j];
      }
      S* crow = C.row(i);
      if (acc)
        for (int j = 0; j < n; ++j) crow[j] = (S)((double)crow[j] + rowbuf[j]);
      else
        for (int j = 0; j < n; ++j) crow[j] = (S)rowbuf[j];
    }
  } else if (!ta) {
    // nt: rows of A against rows of B. Four output columns at a time keeps
    // the accumulator chains independent so they vectorize.
    for (int i = 0; i < m; ++i) {
      const S* arow = A.row(i);
      S* crow = C.row(i);
      int j = 0;
      for (; j + 4 <= n; j += 4) {
        const S* b0 = B.row(j);
        const S* b1 = B.row(j + 1);
        const S* b2 = B.row(j + 2);
        const S* b3 = B.row(j + 3);
        double d0 = 0, d1 = 0, d2 = 0, d3 = 0;
        for (int p = 0; p < k; ++p) {
          const double a = (double)arow[p];
          d0 += a * (double)b0[p];
          d1 += a * (double)b1[p];
          d2 += a * (double)b2[p];
          d3 += a * (double)b3[p];
        }
        if (acc) {
          crow[j] = (S)((double)crow[j] + d0);
          crow[j + 1] = (S)((double)crow[j + 1] + d1);
          crow[j + 2] = (S)((double)crow[j + 2] + d2);
          crow[j + 3] = (S)((double)crow[j + 3] + d3);
        } else {
          crow[j] = (S)d0;
          crow[j + 1] = (S)d1;
          crow[j + 2] = (S)d2;
          crow[j + 3] = (S)d3;
        }
      }
      for (; j < n; ++j) {
        const S* brow = B.row(j);
        double d0 = 0, d1 = 0, d2 = 0, d3 = 0;
        int p = 0;
        for (; p + 4 <= k; p += 4) {
          d0 += (double)arow[p] * (double)brow[p];
          d1 += (double)arow[p + 1] * (double)brow[p + 1];
          d2 += (double)arow[p + 2] * (double)brow[p + 2];
          d3 += (double)arow[p + 3] * (double)brow[p + 3];
        }
        double dot = (d0 + d1) + (d2 + d3);
        for (; p < k; ++p) dot += (double)arow[p] * (double)brow[p];
        crow[j] = acc ? (S)((double)crow[j] + dot) : (S)dot;
      }
    }
  } else {
    // tt: rare; strided A column against contiguous B row.
    for (int i = 0; i < m; ++i) {
      S* crow = C.row(i);
      for (int j = 0; j < n; ++j) {
        const S* brow = B.row(j);
        double dot = 0.0;
        for (int p = 0; p < k; ++p) dot += (double)A.at(p, i) * (double)brow[p];
        crow[j] = acc ? (S)((double)crow[j] + dot) : (S)dot;
      }
    }
  }
}

// Normalizes each length-n slice along the last axis to mean 0, variance 1.
template <class S>
void layer_norm_lastdim(const S* x, S* y, int rows, int n, double eps) {
  for (int i = 0; i < rows; ++i) {
    const S* xr = x + (size_t)i * n;
    S* yr = y + (size_t)i * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += (double)xr[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = (double)xr[j] - mean;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) yr[j] = (S)(((double)xr[j] - mean) * inv);
  }
}

// Row softmax with max subtraction; sums accumulate in double.
template <class S>
void softmax_lastdim(const S* x, S* y, int rows, int n) {
  for (int i = 0; i < rows; ++i) {
    const S* xr = x + (size_t)i * n;
    S* yr = y + (size_t)i * n;
    double mx = (double)xr[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, (double)xr[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      double e = std::exp((double)xr[j] - mx);
      yr[j] = (S)e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) yr[j] = (S)((double)yr[j] * inv);
  }
}

template <class S>
double dot64(const std::vector<S>& a, const std::vector<S>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += (double)a[i] * (double)b[i];
  return acc;
}

template <class S>
double norm64(const std::vector<S>& a) {
  double acc = 0.0;
  for (S x : a) acc += (double)x * (double)x;
  return std::sqrt(acc);
}

}  // namespace prrl
