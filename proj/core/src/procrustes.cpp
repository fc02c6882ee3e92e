#include "protospace/procrustes.hpp"

#include <cmath>

#include "protospace/errors.hpp"

namespace protospace {

Matrix procrustes_rotation(const std::vector<EmbeddingVector>& sources,
                           const std::vector<EmbeddingVector>& targets) {
    if (sources.empty() || targets.empty()) {
        throw InsufficientDataError(
            "orthogonal fit needs at least one source/target pair");
    }
    if (sources.size() != targets.size()) {
        throw InputError("source and target lists differ in length");
    }
    const std::size_t d = sources.front().dim();
    for (const auto& v : sources) {
        if (v.dim() != d) throw DimensionError("mixed source dimensions");
    }
    for (const auto& v : targets) {
        if (v.dim() != d) throw DimensionError("mixed target dimensions");
    }

    // cross-covariance M = sum_i s_i t_i^T; maximizing tr(W M) over
    // orthogonal W gives W = V U^T for M = U S V^T
    Matrix m(d, d);
    for (std::size_t i = 0; i < sources.size(); ++i) {
        require_finite(sources[i], "source vectors");
        require_finite(targets[i], "target vectors");
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                m.at(r, c) += sources[i][r] * targets[i][c];
            }
        }
    }
    const SvdResult svd_m = svd(m);
    return matmul(svd_m.v, transpose(svd_m.u));
}

Matrix procrustes_fit(const Matrix& p, const Matrix& c) {
    if (p.rows == 0 || c.rows == 0) {
        throw InsufficientDataError(
            "orthogonal fit needs at least one source/target pair");
    }
    if (p.rows != c.rows || p.cols != c.cols) {
        throw DimensionError("paired matrices must share their shape");
    }
    require_finite(p, "source matrix");
    require_finite(c, "target matrix");
    // minimize ||P W - C||_F  <=>  maximize tr(W^T P^T C):
    // with svd(P^T C) = U S V^T the optimum is W = U V^T
    const SvdResult dec = svd(matmul(transpose(p), c));
    return matmul(dec.u, transpose(dec.v));
}

double procrustes_residual(const Matrix& w,
                           const std::vector<EmbeddingVector>& sources,
                           const std::vector<EmbeddingVector>& targets) {
    if (sources.size() != targets.size()) {
        throw InputError("source and target lists differ in length");
    }
    if (sources.empty()) {
        throw InsufficientDataError("no pairs to score");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const EmbeddingVector mapped = apply_matrix(w, sources[i]);
        for (std::size_t j = 0; j < mapped.dim(); ++j) {
            const double diff = mapped[j] - targets[i][j];
            total += diff * diff;
        }
    }
    return std::sqrt(total / static_cast<double>(sources.size()));
}

}  // namespace protospace
