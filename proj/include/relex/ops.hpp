#pragma once

#include <cstdint>
#include <vector>

#include "relex/rng.hpp"
#include "relex/tape.hpp"
#include "relex/tensor.hpp"

namespace relex {

// Validity mask; nonzero marks a usable position.
using Mask = std::vector<std::uint8_t>;

namespace ops {

// Elementwise; shapes must match.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);

Tensor tanh(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor gelu(Tape& tape, const Tensor& a);

// [m x k] . [k x n] -> [m x n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// [m x k] . [n x k]^T -> [m x n]
Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);
// [m x k] . [k] -> [m]
Tensor matvec(Tape& tape, const Tensor& a, const Tensor& v);
// [m]^T . [m x k] -> [k]
Tensor vecmat(Tape& tape, const Tensor& v, const Tensor& a);

// Broadcasts a length-n bias over the rows of an [m x n] matrix.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);

// Row-wise layer normalization with learnable gain and bias (both [n]).
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-12);

// Softmax over the valid positions of a vector; invalid outputs are exactly 0.
// Throws InputError when no position is valid.
Tensor masked_softmax(Tape& tape, const Tensor& logits, const Mask& valid);
Tensor softmax(Tape& tape, const Tensor& logits);
// Row-wise masked softmax of an [m x n] score matrix with one shared key mask.
Tensor masked_softmax_rows(Tape& tape, const Tensor& scores, const Mask& key_valid);

// -log p[gold]; probabilities must form a distribution.
Tensor cross_entropy(Tape& tape, const Tensor& probabilities, int gold);

// Gathers rows of an [V x H] table -> [ids.size() x H].
Tensor embedding_lookup(Tape& tape, const Tensor& table, const std::vector<int>& ids);

// Vector concatenation along axis 0.
Tensor concat(Tape& tape, const std::vector<Tensor>& parts);
// Row i of a matrix as a vector.
Tensor row(Tape& tape, const Tensor& x, int i);
// Rows [begin, end) of a matrix.
Tensor slice_rows(Tape& tape, const Tensor& x, int begin, int end);
// Stacks equal-length vectors into a matrix.
Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows);
// Columns [begin, end) of a matrix.
Tensor slice_cols(Tape& tape, const Tensor& x, int begin, int end);
// Concatenates matrices with equal row counts along columns.
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);

// Inverted dropout, train mode only; the mask is drawn from rng.
Tensor dropout(Tape& tape, const Tensor& x, double rate, Rng& rng);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

}  // namespace ops
}  // namespace relex
