#include "rtsim/linear_solvers.hpp"

namespace rtsim {

// Stores U = L^T so that the inner products run over contiguous columns.
CholeskyFactor::CholeskyFactor(const MatX& a) {
    if (a.rows() != a.cols()) throw SolverError("cholesky: matrix is not square");
    const Eigen::Index n = a.rows();
    MatX u = MatX::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double d = a(j, j) - u.col(j).head(j).squaredNorm();
        if (!(d > 0.0))
            throw SolverError("cholesky: matrix not positive definite (pivot " + std::to_string(j) + ")");
        const double ujj = std::sqrt(d);
        u(j, j) = ujj;
        for (Eigen::Index i = j + 1; i < n; ++i) u(j, i) = (a(i, j) - u.col(i).head(j).dot(u.col(j).head(j))) / ujj;
    }
    l_ = u.transpose();
}

VecX CholeskyFactor::solve(const VecX& b) const {
    const Eigen::Index n = l_.rows();
    if (b.size() != n) throw SolverError("cholesky: right-hand side size mismatch");
    VecX y = b;
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i) /= l_(i, i);
        y.tail(n - i - 1).noalias() -= y(i) * l_.col(i).tail(n - i - 1);
    }
    VecX x = y;
    for (Eigen::Index i = n - 1; i >= 0; --i) x(i) = (x(i) - l_.col(i).tail(n - i - 1).dot(x.tail(n - i - 1))) / l_(i, i);
    return x;
}

VecX solve_cholesky(const MatX& a, const VecX& b) { return CholeskyFactor(a).solve(b); }

}  // namespace rtsim
