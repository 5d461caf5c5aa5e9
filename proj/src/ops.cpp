#include "nwinv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nwinv/errors.hpp"

namespace nwinv::ops {

namespace {

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same(a, b, op);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_rowwise");
  if (bias.rank() != 1 || bias.numel() != a.cols()) {
    throw ShapeError("add_rowwise: bias " + shape_str(bias.shape()) + " does not fit " +
                     shape_str(a.shape()));
  }
  Tensor out = a;
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += bias[j];
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * factor;
  return out;
}

Tensor pairwise_sqdist(const Tensor& a, const Tensor& b) {
  require_matrix(a, "pairwise_sqdist");
  require_matrix(b, "pairwise_sqdist");
  if (a.cols() != b.cols()) {
    throw ShapeError("pairwise_sqdist: feature dims differ " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), n = b.rows(), d = a.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto bj = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = ai[k] - bj[k];
        s += diff * diff;
      }
      out(i, j) = s;
    }
  }
  return out;
}

Tensor sqrt(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double v = a[i];
    if (v < -kSqrtRoundoff || std::isnan(v)) {
      throw DomainError("sqrt of negative value " + std::to_string(v));
    }
    out[i] = v > 0.0 ? std::sqrt(v) : 0.0;
  }
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (!(a[i] > 0.0)) throw DomainError("log of non-positive value " + std::to_string(a[i]));
    out[i] = std::log(a[i]);
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& a) {
  require_matrix(a, "log_softmax_rows");
  Tensor out(a.shape());
  const std::size_t n = a.cols();
  if (n == 0) throw ShapeError("log_softmax_rows: zero columns");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) out(i, j) = r[j] - lse;
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix(a, "softmax_rows");
  Tensor out(a.shape());
  const std::size_t n = a.cols();
  if (n == 0) throw ShapeError("softmax_rows: zero columns");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = std::exp(r[j] - mx);
      s += out(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= s;
  }
  return out;
}

Tensor masked_logsumexp_rows(const Tensor& a, const Tensor& mask) {
  require_matrix(a, "masked_logsumexp_rows");
  require_same(a, mask, "masked_logsumexp_rows");
  Tensor out({a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (mask(i, j) != 0.0) {
        mx = std::max(mx, a(i, j));
        any = true;
      }
    }
    if (!any) throw ContractError("masked_logsumexp_rows: row " + std::to_string(i) + " has an empty mask");
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (mask(i, j) != 0.0) s += std::exp(a(i, j) - mx);
    }
    out[i] = mx + std::log(s);
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::scalar(s);
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return Tensor::scalar(sum(a).item() / static_cast<double>(a.numel()));
}

}  // namespace nwinv::ops
