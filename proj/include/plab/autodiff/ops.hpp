#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "plab/autodiff/tape.hpp"

// Differentiable ops over tape variables. Everything the micro-transformer,
// the probes and the reweighting adapter need, nothing more.
namespace plab::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise, equal shapes
Var scale(Var a, double c);
Var add_scalar(Var a, Var s);  // a + s, s single-element
Var exp(Var a);
Var sigmoid(Var a);
Var gelu(Var a);  // tanh approximation
Var sum(Var a);
Var dot(Var a, Var b);  // equal-size vectors -> scalar
Var element(Var a, std::size_t index);  // -> scalar

// (m x k) @ (k x n)
Var matmul(Var a, Var b);
// (m x k) @ (n x k)^T
Var matmul_nt(Var a, Var b);
// x (m x n) + b (n) broadcast over rows
Var add_bias(Var x, Var b);

// Row-wise layer normalization with affine parameters of length n.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// table (V x d) gathered at ids -> (len(ids) x d)
Var embedding(Var table, std::span<const std::int32_t> ids);

Var slice_cols(Var x, std::size_t start, std::size_t len);
Var concat_cols(std::span<const Var> parts);
// Row r of a matrix as a vector.
Var row(Var x, std::size_t r);

// Causal row softmax of a square score matrix with max subtraction. Entries
// with j > i, and entries flagged in `blocked` (row-major T*T, may be empty),
// are excluded and come out exactly 0. A row with every entry excluded is 0.
Var causal_softmax(Var scores, std::span<const std::uint8_t> blocked = {});

// Copy of `a` with the flagged entries set to exactly 0. Untouched entries are
// bit-identical copies.
Var zero_entries(Var a, std::span<const std::uint8_t> flags);

// Entries flagged in `edges` are multiplied by (1 + s); others copied. With
// s == 0 the result is bit-identical to `a`.
Var scale_entries(Var a, Var s, std::span<const std::uint8_t> edges);

// Test hook: a + delta at one flat index (no gradient path through delta).
Var perturb_entry(Var a, std::size_t index, double delta);

// Mean next-token cross-entropy over rows whose target is >= 0.
Var cross_entropy(Var logits, std::span<const std::int32_t> targets);

// Binary cross-entropy of sigmoid(logit) against label in {0, 1}.
Var bce_with_logits(Var logit, double label);

}  // namespace plab::ad
