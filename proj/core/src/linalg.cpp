#include "protospace/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "protospace/errors.hpp"
#include "protospace/random.hpp"

namespace protospace {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

void require_finite(const EmbeddingVector& v, const char* what) {
    for (double x : v.values) {
        if (!std::isfinite(x)) {
            throw InputError(std::string(what) + " contains a non-finite entry");
        }
    }
}

void require_finite(const Matrix& m, const char* what) {
    for (double x : m.data) {
        if (!std::isfinite(x)) {
            throw InputError(std::string(what) + " contains a non-finite entry");
        }
    }
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw DimensionError("dot: dimension mismatch (" +
                             std::to_string(a.dim()) + " vs " +
                             std::to_string(b.dim()) + ")");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(const EmbeddingVector& v) {
    double acc = 0.0;
    for (double x : v.values) acc += x * x;
    return std::sqrt(acc);
}

EmbeddingVector normalize(const EmbeddingVector& v) {
    if (v.dim() == 0) throw DimensionError("normalize: empty vector");
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw DegenerateVectorError("normalize: vector has zero or non-finite norm");
    }
    EmbeddingVector out = v;
    for (double& x : out.values) x /= n;
    out.unit_norm = true;
    return out;
}

EmbeddingVector apply_matrix(const Matrix& m, const EmbeddingVector& v) {
    if (m.cols != v.dim()) {
        throw DimensionError("apply_matrix: matrix is " + std::to_string(m.rows) +
                             "x" + std::to_string(m.cols) + " but vector has dim " +
                             std::to_string(v.dim()));
    }
    EmbeddingVector out(std::vector<double>(m.rows, 0.0));
    for (std::size_t i = 0; i < m.rows; ++i) {
        double acc = 0.0;
        const double* row = &m.data[i * m.cols];
        for (std::size_t j = 0; j < m.cols; ++j) acc += row[j] * v[j];
        out[i] = acc;
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw DimensionError("matmul: inner dimensions differ (" +
                             std::to_string(a.cols) + " vs " +
                             std::to_string(b.rows) + ")");
    }
    Matrix out(a.rows, b.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            double* orow = &out.data[i * out.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
    }
    return out;
}

double frobenius_norm(const Matrix& m) {
    double acc = 0.0;
    for (double x : m.data) acc += x * x;
    return std::sqrt(acc);
}

double orthogonality_defect(const Matrix& m) {
    Matrix gram = matmul(transpose(m), m);
    for (std::size_t i = 0; i < gram.rows; ++i) gram.at(i, i) -= 1.0;
    return frobenius_norm(gram);
}

namespace {

// One-sided Jacobi on the columns of a (m x n, m >= n). On return the columns
// of a are mutually orthogonal and v accumulates the applied rotations.
void jacobi_orthogonalize(Matrix& a, Matrix& v) {
    constexpr double kPairTol = 1e-12;
    constexpr int kMaxSweeps = 60;
    const std::size_t m = a.rows, n = a.cols;

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        std::size_t rotations = 0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double xp = a.at(i, p), xq = a.at(i, q);
                    app += xp * xp;
                    aqq += xq * xq;
                    apq += xp * xq;
                }
                if (std::abs(apq) <= kPairTol * std::sqrt(app * aqq)) continue;

                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double xp = a.at(i, p), xq = a.at(i, q);
                    a.at(i, p) = c * xp - s * xq;
                    a.at(i, q) = s * xp + c * xq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v.at(i, p), vq = v.at(i, q);
                    v.at(i, p) = c * vp - s * vq;
                    v.at(i, q) = s * vp + c * vq;
                }
                ++rotations;
            }
        }
        if (rotations == 0) return;
    }
    throw NumericalError("svd: Jacobi sweeps did not converge within 60 sweeps");
}

// Replaces near-null columns of u with unit vectors orthogonal to all other
// columns, so u keeps orthonormal columns even for rank-deficient input.
void complete_null_columns(Matrix& u, const std::vector<bool>& is_null) {
    const std::size_t m = u.rows, k = u.cols;
    for (std::size_t j = 0; j < k; ++j) {
        if (!is_null[j]) continue;
        // Try canonical basis vectors until one survives projection.
        for (std::size_t cand = 0; cand < m; ++cand) {
            std::vector<double> w(m, 0.0);
            w[cand] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {  // re-orthogonalize once
                for (std::size_t c = 0; c < k; ++c) {
                    if (c == j || (is_null[c] && c > j)) continue;
                    double proj = 0.0;
                    for (std::size_t i = 0; i < m; ++i) proj += w[i] * u.at(i, c);
                    for (std::size_t i = 0; i < m; ++i) w[i] -= proj * u.at(i, c);
                }
            }
            double nrm = 0.0;
            for (double x : w) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > 0.5) {  // candidate was independent of existing columns
                for (std::size_t i = 0; i < m; ++i) u.at(i, j) = w[i] / nrm;
                break;
            }
        }
    }
}

}  // namespace

SvdResult svd(const Matrix& m) {
    if (m.rows == 0 || m.cols == 0) {
        throw DimensionError("svd: matrix must be non-empty");
    }
    require_finite(m, "svd input");

    const bool transposed = m.rows < m.cols;
    Matrix a = transposed ? transpose(m) : m;
    const std::size_t k = a.cols;  // min(m.rows, m.cols)

    Matrix v = Matrix::identity(k);
    jacobi_orthogonalize(a, v);

    // Singular values are the column norms of the orthogonalized matrix.
    std::vector<double> s(k);
    for (std::size_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) acc += a.at(i, j) * a.at(i, j);
        s[j] = std::sqrt(acc);
    }

    // Sort descending by singular value, permuting the columns of a and v.
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });

    Matrix u(a.rows, k);
    Matrix vs(k, k);
    std::vector<double> ss(k);
    const double smax = s.empty() ? 0.0 : s[order[0]];
    // Below this, a column norm is dominated by rotation roundoff and cannot
    // be trusted as a direction.
    const double null_tol = smax * 1e-13;
    std::vector<bool> is_null(k, false);
    for (std::size_t jj = 0; jj < k; ++jj) {
        const std::size_t src = order[jj];
        ss[jj] = s[src];
        for (std::size_t i = 0; i < k; ++i) vs.at(i, jj) = v.at(i, src);
        if (s[src] <= null_tol || s[src] == 0.0) {
            is_null[jj] = true;
            for (std::size_t i = 0; i < a.rows; ++i) u.at(i, jj) = 0.0;
        } else {
            for (std::size_t i = 0; i < a.rows; ++i) {
                u.at(i, jj) = a.at(i, src) / s[src];
            }
        }
    }
    complete_null_columns(u, is_null);

    SvdResult out;
    if (transposed) {
        out.u = std::move(vs);
        out.v = std::move(u);
    } else {
        out.u = std::move(u);
        out.v = std::move(vs);
    }
    out.s = std::move(ss);
    return out;
}

Matrix pca_project(const std::vector<EmbeddingVector>& points, std::size_t k) {
    if (points.size() < 2) {
        throw InsufficientDataError("pca_project: need at least 2 points, got " +
                                    std::to_string(points.size()));
    }
    const std::size_t n = points.size();
    const std::size_t d = points[0].dim();
    for (const auto& p : points) {
        if (p.dim() != d) {
            throw DimensionError("pca_project: points have mixed dimensions");
        }
        require_finite(p, "pca_project input");
    }
    if (k < 1 || k > d) {
        throw InputError("pca_project: k must satisfy 1 <= k <= d, got " +
                         std::to_string(k));
    }

    std::vector<double> mean(d, 0.0);
    for (const auto& p : points) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += p[j];
    }
    for (double& x : mean) x /= static_cast<double>(n);

    Matrix centered(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            centered.at(i, j) = points[i][j] - mean[j];
        }
    }

    const SvdResult dec = svd(centered);

    // Loading sign canonicalization: flip each component so its
    // largest-magnitude loading is positive.
    std::vector<double> flip(k, 1.0);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double mag = std::abs(dec.v.at(j, c));
            if (mag > best) {
                best = mag;
                arg = j;
            }
        }
        if (dec.v.at(arg, c) < 0.0) flip[c] = -1.0;
    }

    Matrix proj(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                acc += centered.at(i, j) * dec.v.at(j, c);
            }
            proj.at(i, c) = flip[c] * acc;
        }
    }
    return proj;
}

Matrix qr_orthogonal_factor(const Matrix& m) {
    if (m.rows == 0 || m.rows != m.cols) {
        throw DimensionError("qr_orthogonal_factor needs a square matrix");
    }
    require_finite(m, "qr input");
    const std::size_t d = m.rows;
    Matrix a = m;

    // Householder QR; reflectors are accumulated into q afterwards.
    std::vector<std::vector<double>> reflectors;
    reflectors.reserve(d);
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> h(d - j, 0.0);
        double xnorm = 0.0;
        for (std::size_t i = j; i < d; ++i) {
            h[i - j] = a.at(i, j);
            xnorm += h[i - j] * h[i - j];
        }
        xnorm = std::sqrt(xnorm);
        if (xnorm == 0.0) {
            reflectors.push_back({});
            continue;
        }
        const double alpha = h[0] >= 0.0 ? -xnorm : xnorm;
        h[0] -= alpha;
        double hnorm = 0.0;
        for (double x : h) hnorm += x * x;
        hnorm = std::sqrt(hnorm);
        if (hnorm == 0.0) {
            reflectors.push_back({});
            continue;
        }
        for (double& x : h) x /= hnorm;
        // Apply H = I - 2hhᵀ to the trailing block of a.
        for (std::size_t c = j; c < d; ++c) {
            double proj = 0.0;
            for (std::size_t i = j; i < d; ++i) proj += h[i - j] * a.at(i, c);
            proj *= 2.0;
            for (std::size_t i = j; i < d; ++i) a.at(i, c) -= proj * h[i - j];
        }
        reflectors.push_back(std::move(h));
    }

    // q = H_0 H_1 ... H_{d-1} applied to the identity.
    Matrix q = Matrix::identity(d);
    for (std::size_t jj = d; jj-- > 0;) {
        const auto& h = reflectors[jj];
        if (h.empty()) continue;
        for (std::size_t c = 0; c < d; ++c) {
            double proj = 0.0;
            for (std::size_t i = jj; i < d; ++i) proj += h[i - jj] * q.at(i, c);
            proj *= 2.0;
            for (std::size_t i = jj; i < d; ++i) q.at(i, c) -= proj * h[i - jj];
        }
    }

    // Fix signs so the implied R has a positive diagonal; this makes the
    // factor unique for a given input (and Haar for a Gaussian input).
    for (std::size_t j = 0; j < d; ++j) {
        if (a.at(j, j) < 0.0) {
            for (std::size_t i = 0; i < d; ++i) q.at(i, j) = -q.at(i, j);
        }
    }
    return q;
}

Matrix random_orthogonal(std::size_t d, std::uint64_t seed) {
    if (d < 1) throw InputError("random_orthogonal: d must be >= 1");
    DeterministicRng rng(seed);
    Matrix g(d, d);
    for (double& x : g.data) x = rng.gaussian();
    return qr_orthogonal_factor(g);
}

}  // namespace protospace
