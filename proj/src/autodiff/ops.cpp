#include "tomcoord/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tomcoord::ad {

namespace {

std::size_t rows_of(const Shape& s) {
  if (s.empty()) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

Var finish(const char* name, Tensor value, std::vector<Var> inputs, VjpFn vjp) {
  if (!value.all_finite()) {
    throw NonFiniteError(std::string("non-finite value produced by ") + name);
  }
  Tape* tape = nullptr;
  for (const Var& in : inputs) {
    if (in.is_constant()) continue;
    if (tape != nullptr && in.tape() != tape) {
      throw std::invalid_argument(std::string(name) +
                                  ": inputs recorded on different tapes");
    }
    tape = in.tape();
  }
  if (tape == nullptr || !tape->recording()) {
    return Var::constant(std::move(value));
  }
  return tape->record(std::move(value), std::move(inputs), std::move(vjp));
}

struct Broadcast {
  std::size_t rows;
  std::size_t cols;
  Shape shape;
};

Broadcast broadcast(const char* name, const Tensor& a, const Tensor& b) {
  const std::size_t ra = a.rows(), ca = a.cols(), rb = b.rows(), cb = b.cols();
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError(std::string(name) + ": cannot broadcast " +
                     shape_str(a.shape()) + " with " + shape_str(b.shape()));
  };
  Broadcast out{dim(ra, rb), dim(ca, cb), {}};
  if (out.rows == ra && out.cols == ca) {
    out.shape = a.shape();
  } else if (out.rows == rb && out.cols == cb) {
    out.shape = b.shape();
  } else {
    out.shape = {out.rows, out.cols};
  }
  return out;
}

// Sums a broadcast gradient back down to `target`.
Var reduce_to(const Var& g, const Shape& target) {
  Var r = g;
  if (rows_of(target) == 1 && r.value().rows() > 1) r = sum(r, Axis::rows);
  if (cols_of(target) == 1 && r.value().cols() > 1) r = sum(r, Axis::cols);
  if (r.shape() != target) r = reshape(r, target);
  return r;
}

Var broadcast_to(const Var& g, const Shape& shape) {
  if (g.shape() == shape) return g;
  return add(Var::constant(Tensor::zeros(shape)), g);
}

template <typename F>
Tensor zip(const char* name, const Tensor& a, const Tensor& b, F f) {
  const Broadcast bc = broadcast(name, a, b);
  Tensor out = Tensor::zeros(bc.shape);
  const std::size_t ca = a.cols(), cb = b.cols();
  const bool a_row = a.rows() == 1, a_col = a.cols() == 1;
  const bool b_row = b.rows() == 1, b_col = b.cols() == 1;
  for (std::size_t r = 0; r < bc.rows; ++r) {
    const std::size_t a_base = a_row ? 0 : r * ca;
    const std::size_t b_base = b_row ? 0 : r * cb;
    for (std::size_t c = 0; c < bc.cols; ++c) {
      out[r * bc.cols + c] =
          f(a[a_base + (a_col ? 0 : c)], b[b_base + (b_col ? 0 : c)]);
    }
  }
  return out;
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out = x;
  for (double& v : out.data()) v = f(v);
  return out;
}

}  // namespace

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t ar = A.rows(), ac = A.cols(), br = B.rows(), bc = B.cols();
  const std::size_t m = trans_a ? ac : ar;
  const std::size_t k = trans_a ? ar : ac;
  const std::size_t kb = trans_b ? bc : br;
  const std::size_t n = trans_b ? br : bc;
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ for " +
                     shape_str(A.shape()) + (trans_a ? "^T" : "") + " x " +
                     shape_str(B.shape()) + (trans_b ? "^T" : ""));
  }
  Tensor C = Tensor::zeros({m, n});
  auto c = C.data();
  auto pa = A.data();
  auto pb = B.data();
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = pa[i * ac + p];
        if (av == 0.0) continue;
        const double* brow = &pb[p * bc];
        double* crow = &c[i * n];
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = &pa[i * ac];
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = &pb[j * bc];
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        c[i * n + j] = s;
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* arow = &pa[p * ac];
      const double* brow = &pb[p * bc];
      for (std::size_t i = 0; i < m; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* crow = &c[i * n];
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += pa[p * ac + i] * pb[j * bc + p];
        c[i * n + j] = s;
      }
    }
  }
  return finish("matmul", std::move(C), {a, b},
                [a, b, trans_a, trans_b](const Var&, const Var& g) {
                  Var ga, gb;
                  if (!a.is_constant()) {
                    if (!trans_a) {
                      ga = matmul(g, b, false, !trans_b);
                    } else {
                      ga = matmul(b, g, trans_b, true);
                    }
                    ga = reshape(ga, a.shape());
                  }
                  if (!b.is_constant()) {
                    if (!trans_b) {
                      gb = matmul(a, g, !trans_a, false);
                    } else {
                      gb = matmul(g, a, true, trans_a);
                    }
                    gb = reshape(gb, b.shape());
                  }
                  return std::vector<Var>{ga, gb};
                });
}

Var add(const Var& a, const Var& b) {
  Tensor out = zip("add", a.value(), b.value(),
                   [](double x, double y) { return x + y; });
  return finish("add", std::move(out), {a, b},
                [a, b](const Var&, const Var& g) {
                  Var ga, gb;
                  if (!a.is_constant()) ga = reduce_to(g, a.shape());
                  if (!b.is_constant()) gb = reduce_to(g, b.shape());
                  return std::vector<Var>{ga, gb};
                });
}

Var mul(const Var& a, const Var& b) {
  Tensor out = zip("mul", a.value(), b.value(),
                   [](double x, double y) { return x * y; });
  return finish("mul", std::move(out), {a, b}, [a, b](const Var&, const Var& g) {
    Var ga, gb;
    if (!a.is_constant()) ga = reduce_to(mul(g, b), a.shape());
    if (!b.is_constant()) gb = reduce_to(mul(g, a), b.shape());
    return std::vector<Var>{ga, gb};
  });
}

Var tanh(const Var& x) {
  Tensor out = map(x.value(), [](double v) { return std::tanh(v); });
  return finish("tanh", std::move(out), {x}, [](const Var& y, const Var& g) {
    return std::vector<Var>{sub(g, mul(g, mul(y, y)))};
  });
}

Var relu(const Var& x) {
  Tensor out = map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  Tensor mask = map(x.value(), [](double v) { return v > 0.0 ? 1.0 : 0.0; });
  return finish("relu", std::move(out), {x},
                [mask = Var::constant(std::move(mask))](const Var&,
                                                        const Var& g) {
                  return std::vector<Var>{mul(g, mask)};
                });
}

Var exp(const Var& x) {
  Tensor out = map(x.value(), [](double v) { return std::exp(v); });
  return finish("exp", std::move(out), {x}, [](const Var& y, const Var& g) {
    return std::vector<Var>{mul(g, y)};
  });
}

Var log(const Var& x) {
  Tensor out = map(x.value(), [](double v) { return std::log(v); });
  return finish("log", std::move(out), {x}, [x](const Var&, const Var& g) {
    return std::vector<Var>{mul(g, reciprocal(x))};
  });
}

Var reciprocal(const Var& x) {
  Tensor out = map(x.value(), [](double v) { return 1.0 / v; });
  return finish("reciprocal", std::move(out), {x},
                [](const Var& y, const Var& g) {
                  return std::vector<Var>{scale(mul(g, mul(y, y)), -1.0)};
                });
}

Var softmax(const Var& x) {
  Tensor out = x.value();
  const std::size_t R = out.rows(), C = out.cols();
  for (std::size_t r = 0; r < R; ++r) {
    double* row = &out.data()[r * C];
    const double mx = *std::max_element(row, row + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      row[c] = std::exp(row[c] - mx);
      z += row[c];
    }
    for (std::size_t c = 0; c < C; ++c) row[c] /= z;
  }
  return finish("softmax", std::move(out), {x}, [](const Var& y, const Var& g) {
    const Var dot = sum(mul(g, y), Axis::cols);
    return std::vector<Var>{mul(y, sub(g, dot))};
  });
}

Var sum(const Var& x, Axis axis) {
  const Tensor& X = x.value();
  const std::size_t R = X.rows(), C = X.cols();
  Tensor out;
  switch (axis) {
    case Axis::all: {
      double s = 0.0;
      for (double v : X.data()) s += v;
      out = Tensor::scalar(s);
      break;
    }
    case Axis::rows: {
      out = Tensor::zeros({1, C});
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out[c] += X[r * C + c];
      break;
    }
    case Axis::cols: {
      out = Tensor::zeros({R, 1});
      for (std::size_t r = 0; r < R; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += X[r * C + c];
        out[r] = s;
      }
      break;
    }
  }
  return finish("sum", std::move(out), {x},
                [shape = x.shape()](const Var&, const Var& g) {
                  return std::vector<Var>{broadcast_to(g, shape)};
                });
}

Var mean(const Var& x, Axis axis) {
  const Tensor& X = x.value();
  double n = static_cast<double>(X.size());
  if (axis == Axis::rows) n = static_cast<double>(X.rows());
  if (axis == Axis::cols) n = static_cast<double>(X.cols());
  if (n == 0.0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x, axis), 1.0 / n);
}

Var concat(const Var& a, const Var& b, Axis axis) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t ra = A.rows(), ca = A.cols(), rb = B.rows(), cb = B.cols();
  std::vector<std::size_t> ia, ib;
  Tensor out;
  if (axis == Axis::rows) {
    if (ca != cb) throw ShapeError("concat rows: column counts differ");
    out = Tensor::zeros({ra + rb, ca});
    std::copy(A.data().begin(), A.data().end(), out.data().begin());
    std::copy(B.data().begin(), B.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(A.size()));
    for (std::size_t i = 0; i < A.size(); ++i) ia.push_back(i);
    for (std::size_t i = 0; i < B.size(); ++i) ib.push_back(A.size() + i);
  } else if (axis == Axis::cols) {
    if (ra != rb) throw ShapeError("concat cols: row counts differ");
    const std::size_t C = ca + cb;
    out = Tensor::zeros({ra, C});
    for (std::size_t r = 0; r < ra; ++r) {
      for (std::size_t c = 0; c < ca; ++c) {
        out[r * C + c] = A[r * ca + c];
        ia.push_back(r * C + c);
      }
      for (std::size_t c = 0; c < cb; ++c) {
        out[r * C + ca + c] = B[r * cb + c];
        ib.push_back(r * C + ca + c);
      }
    }
  } else {
    throw ShapeError("concat needs a row or column axis");
  }
  return finish("concat", std::move(out), {a, b},
                [ia = std::move(ia), ib = std::move(ib), sa = a.shape(),
                 sb = b.shape()](const Var&, const Var& g) {
                  return std::vector<Var>{gather(g, ia, sa), gather(g, ib, sb)};
                });
}

Var reshape(const Var& x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    throw ShapeError("reshape " + shape_str(x.shape()) + " to " +
                     shape_str(shape));
  }
  if (shape == x.shape()) return x;
  return finish("reshape", x.value().reshaped(shape), {x},
                [from = x.shape()](const Var&, const Var& g) {
                  return std::vector<Var>{reshape(g, from)};
                });
}

Var gather(const Var& x, std::vector<std::size_t> index, Shape out_shape) {
  if (shape_size(out_shape) != index.size()) {
    throw ShapeError("gather: index count does not match output shape");
  }
  const Tensor& X = x.value();
  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= X.size()) throw ShapeError("gather: index out of range");
    out[k] = X[index[k]];
  }
  return finish("gather", std::move(out), {x},
                [index = std::move(index), from = x.shape()](const Var&,
                                                            const Var& g) {
                  return std::vector<Var>{scatter_add(g, index, from)};
                });
}

Var scatter_add(const Var& g, std::vector<std::size_t> index, Shape shape) {
  if (g.value().size() != index.size()) {
    throw ShapeError("scatter_add: index count does not match gradient size");
  }
  Tensor out = Tensor::zeros(shape);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= out.size()) throw ShapeError("scatter_add: index out of range");
    out[index[k]] += g.value()[k];
  }
  return finish("scatter_add", std::move(out), {g},
                [index = std::move(index), from = g.shape()](const Var&,
                                                            const Var& gg) {
                  return std::vector<Var>{gather(gg, index, from)};
                });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var scale(const Var& x, double c) {
  return mul(x, Var::constant(Tensor::scalar(c)));
}

Var gather_rows(const Var& x, const std::vector<std::size_t>& rows) {
  const std::size_t C = x.value().cols();
  const std::size_t R = x.value().rows();
  std::vector<std::size_t> index;
  index.reserve(rows.size() * C);
  for (std::size_t r : rows) {
    if (r >= R) throw ShapeError("gather_rows: row out of range");
    for (std::size_t c = 0; c < C; ++c) index.push_back(r * C + c);
  }
  return gather(x, std::move(index), {rows.size(), C});
}

Var log_softmax(const Var& x) {
  const Tensor& X = x.value();
  const std::size_t R = X.rows(), C = X.cols();
  Tensor shift = Tensor::zeros({R, 1});
  for (std::size_t r = 0; r < R; ++r) {
    shift[r] = *std::max_element(X.data().begin() + static_cast<std::ptrdiff_t>(r * C),
                                 X.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * C));
  }
  const Var shifted = sub(x, Var::constant(std::move(shift)));
  const Var lse = log(sum(exp(shifted), Axis::cols));
  return sub(shifted, lse);
}

}  // namespace tomcoord::ad
