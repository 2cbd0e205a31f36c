// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "promma/graph.hpp"

// Differentiable primitives. Matrices are 2-D row-major [rows x cols];
// vectors of length n are accepted wherever a [1 x n] row is expected.
namespace promma::ops {

Var matmul(Var a, Var b);
// x [m x in] * w [in x out] + bias [out].
Var linear(Var x, Var w, Var bias);
Var linear(Var x, Var w);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// Adds a [1 x n] row to every row of a [m x n].
Var add_rowvec(Var a, Var row);
// Adds r's leading min(rows(a), rows(r)) rows onto a's leading rows.
Var add_leading_rows(Var a, Var r);

// x * Phi(x) with the exact Gaussian CDF.
Var gelu(Var x);
// axis 1 normalises each row, axis 0 each column; 1-D inputs use axis 0.
Var softmax(Var x, int axis);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// Multi-head scaled dot-product attention, softmax(q k^T / sqrt(d_head)) v.
// Keys/values with row index < key_offset are masked out entirely.
Var attention(Var q, Var k, Var v, std::size_t heads, std::size_t key_offset = 0);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
// Mean over rows [begin, rows) -> [1 x cols].
Var mean_rows(Var a, std::size_t begin = 0);
// Repeats rows cyclically (or truncates) to exactly n rows.
Var tile_rows(Var a, std::size_t n);

// x [L x d_in], kernel [w x d_in x d_out], bias [d_out]; zero "same" padding,
// cross-correlation convention: out[t] = b + sum_s x[t + s - w/2] * k[s].
Var conv1d(Var x, Var kernel, Var bias);

Var sum(Var a);
Var mean(Var a);
Var abs(Var a);

// Exact erf-based helpers shared with tests.
double gelu_value(double x);
double gelu_grad(double x);

}  // namespace promma::ops
