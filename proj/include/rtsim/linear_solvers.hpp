#pragma once

#include "rtsim/types.hpp"

#include <cmath>

namespace rtsim {

enum class LinearSolverKind { cg, cholesky };
enum class IntegratorKind { explicit_euler, implicit_euler };

struct SolverConfig {
    IntegratorKind integrator = IntegratorKind::implicit_euler;
    LinearSolverKind linear_solver = LinearSolverKind::cg;
    double cg_tolerance = 1e-5;
    int cg_max_iterations = 25;

    void validate() const {
        if (!(cg_tolerance > 0.0)) throw ConfigError("cg_tolerance must be > 0");
        if (cg_max_iterations < 1) throw ConfigError("cg_max_iterations must be >= 1");
    }
};

struct CgResult {
    VecX x;
    int iterations = 0;
    double residual = 0.0;  // ||A x - b|| / ||b||
    bool converged = false;
};

/// Conjugate gradient for symmetric positive definite operators.
///
/// `apply(p, out)` must write A*p into `out` (already sized). The returned
/// residual is the true relative residual of the returned iterate. When the
/// iteration budget runs out the iterate with the smallest recurrence
/// residual is returned with `converged == false`.
template <class ApplyFn>
CgResult solve_cg(ApplyFn&& apply, const VecX& b, const SolverConfig& cfg) {
    CgResult out;
    const Eigen::Index n = b.size();
    out.x = VecX::Zero(n);
    const double b_norm = b.norm();
    if (!std::isfinite(b_norm)) throw SolverError("conjugate gradient diverged: non-finite right-hand side");
    if (b_norm == 0.0) {
        out.converged = true;
        return out;
    }

    VecX r = b;
    VecX p = r;
    VecX q(n);
    VecX best = out.x;
    double best_res = 1.0;
    double rr = r.squaredNorm();
    const double target = cfg.cg_tolerance * b_norm;

    while (out.iterations < cfg.cg_max_iterations) {
        apply(p, q);
        const double pq = p.dot(q);
        if (!std::isfinite(pq)) throw SolverError("conjugate gradient diverged: non-finite value encountered");
        if (pq <= 0.0) break;  // lost positive definiteness or exact convergence
        const double alpha = rr / pq;
        out.x.noalias() += alpha * p;
        r.noalias() -= alpha * q;
        ++out.iterations;
        const double rr_new = r.squaredNorm();
        if (!std::isfinite(rr_new)) throw SolverError("conjugate gradient diverged: non-finite value encountered");
        const double res = std::sqrt(rr_new) / b_norm;
        if (res < best_res) {
            best_res = res;
            best = out.x;
        }
        if (std::sqrt(rr_new) <= target) break;
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }

    if (best_res < 1.0) out.x = best;
    apply(out.x, q);
    out.residual = (q - b).norm() / b_norm;
    if (!std::isfinite(out.residual)) throw SolverError("conjugate gradient diverged: non-finite value encountered");
    out.converged = out.residual <= cfg.cg_tolerance;
    return out;
}

// Dense LL^T factorization. Throws SolverError naming the failing pivot
// when the matrix is not positive definite.
class CholeskyFactor {
public:
    explicit CholeskyFactor(const MatX& a);

    VecX solve(const VecX& b) const;
    const MatX& lower() const { return l_; }

private:
    MatX l_;
};

VecX solve_cholesky(const MatX& a, const VecX& b);

}  // namespace rtsim
