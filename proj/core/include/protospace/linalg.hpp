#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace protospace {

// Dense real vector. `unit_norm` is set by producers that guarantee
// |‖values‖ - 1| <= 1e-9 (normalize, the embedding client); consumers may
// rely on it to skip renormalization but never on exact unit length.
struct EmbeddingVector {
    std::vector<double> values;
    bool unit_norm = false;

    EmbeddingVector() = default;
    explicit EmbeddingVector(std::vector<double> v, bool unit = false)
        : values(std::move(v)), unit_norm(unit) {}

    std::size_t dim() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    static Matrix identity(std::size_t n);
};

struct SvdResult {
    Matrix u;               // m x k, orthonormal columns (k = min(m, n))
    std::vector<double> s;  // k singular values, descending, non-negative
    Matrix v;               // n x k, orthonormal columns
};

// Throws InputError if any entry is non-finite. `what` names the offender in
// the message.
void require_finite(const EmbeddingVector& v, const char* what);
void require_finite(const Matrix& m, const char* what);

// Inner product. Throws DimensionError on length mismatch.
double dot(const EmbeddingVector& a, const EmbeddingVector& b);

double norm(const EmbeddingVector& v);

// v / ‖v‖, with unit_norm set. Throws DegenerateVectorError when the norm is
// zero or not finite.
EmbeddingVector normalize(const EmbeddingVector& v);

// m * v. Throws DimensionError unless m.cols == v.dim().
EmbeddingVector apply_matrix(const Matrix& m, const EmbeddingVector& v);

// Thin SVD via one-sided Jacobi with cyclic column sweeps. Column pairs are
// rotated until every |a_p . a_q| <= 1e-12 * ‖a_p‖ ‖a_q‖; more than 60 full
// sweeps raises NumericalError. Zero singular directions get their U columns
// completed by Gram-Schmidt so U always has orthonormal columns.
SvdResult svd(const Matrix& m);

// Matrix helpers used across the library.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
double frobenius_norm(const Matrix& m);
// ‖aᵀa - I‖_F; 0 for orthonormal columns.
double orthogonality_defect(const Matrix& m);

// Projects `points` (all of equal dimension d) onto their top-k principal
// components: rows are mean-centered, decomposed by svd, and projected onto
// the k leading right-singular directions. Each component's sign is
// canonicalized so its largest-magnitude loading is positive. Returns an
// n x k matrix of coordinates.
// Throws InsufficientDataError for fewer than 2 points, InputError unless
// 1 <= k <= d, DimensionError on mixed dimensions.
Matrix pca_project(const std::vector<EmbeddingVector>& points, std::size_t k);

// Haar-ish random orthogonal d x d matrix: QR of a seeded Gaussian matrix
// with the R diagonal sign-fixed. Deterministic per seed.
Matrix random_orthogonal(std::size_t d, std::uint64_t seed);

// Orthogonal factor of the Householder QR of a square matrix, with signs
// fixed so the implied R has a positive diagonal (unique factor). Useful to
// project a near-orthogonal matrix back onto the orthogonal group.
Matrix qr_orthogonal_factor(const Matrix& m);

}  // namespace protospace
