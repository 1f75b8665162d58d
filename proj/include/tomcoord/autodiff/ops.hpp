#pragma once

#include <cstddef>
#include <vector>

#include "tomcoord/autodiff/tape.hpp"

namespace tomcoord::ad {

enum class Axis { all, rows, cols };

// Primitive ops. Binary elementwise ops broadcast along size-1 rows or
// columns of the matrix view. All results are checked for finiteness and
// throw NonFiniteError otherwise.
Var matmul(const Var& a, const Var& b, bool trans_a = false,
           bool trans_b = false);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var tanh(const Var& x);
Var relu(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var reciprocal(const Var& x);
Var softmax(const Var& x);  // over the last axis
Var sum(const Var& x, Axis axis = Axis::all);
Var mean(const Var& x, Axis axis = Axis::all);
Var concat(const Var& a, const Var& b, Axis axis);
Var reshape(const Var& x, Shape shape);

// out.flat[k] = x.flat[index[k]], shaped `out_shape`.
Var gather(const Var& x, std::vector<std::size_t> index, Shape out_shape);
// Adjoint of gather: zeros of `shape` with g.flat[k] added at index[k].
Var scatter_add(const Var& g, std::vector<std::size_t> index, Shape shape);

// Composites.
Var sub(const Var& a, const Var& b);
Var scale(const Var& x, double c);
Var gather_rows(const Var& x, const std::vector<std::size_t>& rows);
// Stable log-softmax over the last axis; the row max is a constant shift.
Var log_softmax(const Var& x);

}  // namespace tomcoord::ad
