#pragma once

#include <vector>

#include "protospace/linalg.hpp"

namespace protospace {

// Orthogonal map W minimizing sum_i ||W * sources[i] - targets[i]||^2 over
// all orthogonal matrices (the classic closed-form solution via the SVD of
// the cross-covariance).  Both lists must be non-empty (InsufficientDataError),
// the same length (InputError), and of one common dimension (DimensionError).
Matrix procrustes_rotation(const std::vector<EmbeddingVector>& sources,
                           const std::vector<EmbeddingVector>& targets);

// Root-mean-square residual ||W*source - target|| over the pairs: a quick
// quality figure for a fitted map.
double procrustes_residual(const Matrix& w,
                           const std::vector<EmbeddingVector>& sources,
                           const std::vector<EmbeddingVector>& targets);

// Row-convention variant: given data matrices whose rows are the paired
// vectors, returns the orthogonal W minimizing ||P W - C||_F. Equal to the
// transpose of procrustes_rotation on the same pairs. Shape mismatch →
// DimensionError; zero rows → InsufficientDataError.
Matrix procrustes_fit(const Matrix& p, const Matrix& c);

}  // namespace protospace
