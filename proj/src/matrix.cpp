#include "mnet/matrix.hpp"

#include <algorithm>

#include "mnet/error.hpp"

namespace mnet {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(static_cast<int>(rows.size()),
             rows.size() ? static_cast<int>(rows.begin()->size()) : 0);
    int r = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != m.cols()) throw Error("from_rows: ragged rows");
        std::copy(row.begin(), row.end(), m.row(r++));
    }
    return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

// The k loop is unrolled by four so each pass over a C row does four
// multiply-adds; the j loops vectorize without reassociation.
void gemm_accumulate(Matrix& c, const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols())
        throw Error("gemm_accumulate: shape mismatch");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        int p = 0;
        for (; p + 4 <= k; p += 4) {
            const double a0 = ai[p], a1 = ai[p + 1], a2 = ai[p + 2], a3 = ai[p + 3];
            const double* b0 = b.row(p);
            const double* b1 = b.row(p + 1);
            const double* b2 = b.row(p + 2);
            const double* b3 = b.row(p + 3);
            for (int j = 0; j < n; ++j) ci[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; p < k; ++p) {
            const double ap = ai[p];
            const double* bp = b.row(p);
            for (int j = 0; j < n; ++j) ci[j] += ap * bp[j];
        }
    }
}

void accumulate_outer(Matrix& c, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols())
        throw Error("accumulate_outer: shape mismatch");
    const int batch = a.rows(), m = a.cols(), n = b.cols();
    int r = 0;
    for (; r + 4 <= batch; r += 4) {
        const double* a0 = a.row(r);
        const double* a1 = a.row(r + 1);
        const double* a2 = a.row(r + 2);
        const double* a3 = a.row(r + 3);
        const double* b0 = b.row(r);
        const double* b1 = b.row(r + 1);
        const double* b2 = b.row(r + 2);
        const double* b3 = b.row(r + 3);
        for (int i = 0; i < m; ++i) {
            const double x0 = a0[i], x1 = a1[i], x2 = a2[i], x3 = a3[i];
            double* ci = c.row(i);
            for (int j = 0; j < n; ++j) ci[j] += x0 * b0[j] + x1 * b1[j] + x2 * b2[j] + x3 * b3[j];
        }
    }
    for (; r < batch; ++r) {
        const double* ar = a.row(r);
        const double* br = b.row(r);
        for (int i = 0; i < m; ++i) {
            const double ari = ar[i];
            double* ci = c.row(i);
            for (int j = 0; j < n; ++j) ci[j] += ari * br[j];
        }
    }
}

Matrix transposed(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

}  // namespace mnet
