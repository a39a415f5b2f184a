#ifndef GRIDMPC_QP_HPP
#define GRIDMPC_QP_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gridmpc {

// Convex quadratic program
//   minimize 0.5 x' P x + q' x   subject to   lo <= G x <= up,
// with P symmetric positive semidefinite stored as a full sparse matrix.
struct QuadraticProgram {
    int n_vars = 0;
    Eigen::SparseMatrix<double> P;
    Eigen::VectorXd q;
    Eigen::SparseMatrix<double> G;
    Eigen::VectorXd lo, up;

    int n_cons() const { return static_cast<int>(G.rows()); }
};

enum class QpStatus { Optimal, PrimalInfeasible, MaxIterations };

inline const char *to_string(QpStatus status) {
    switch (status) {
        case QpStatus::Optimal:
            return "optimal";
        case QpStatus::PrimalInfeasible:
            return "primal infeasible";
        case QpStatus::MaxIterations:
            return "max iterations";
    }
    return "unknown";
}

struct QpSolution {
    QpStatus status = QpStatus::MaxIterations;
    Eigen::VectorXd x;  // primal iterate
    Eigen::VectorXd y;  // constraint multipliers; infeasibility certificate when applicable
    double primal_residual = std::numeric_limits<double>::infinity();
    double dual_residual = std::numeric_limits<double>::infinity();
    double objective = 0.0;
    int iterations = 0;
    bool polished = false;
};

struct QpSettings {
    double tol_abs = 1e-6;
    double tol_rel = 1e-6;
    int max_iterations = 20000;
    double sigma = 1e-6;           // primal regularization in the KKT matrix
    double alpha = 1.6;            // relaxation
    double rho = 0.1;              // base penalty
    double rho_eq_scale = 1e3;     // extra penalty weight on equality rows
    int check_interval = 25;       // residual / infeasibility test period
    bool adaptive_rho = true;
    bool scaling = true;
    int scaling_iterations = 10;
    bool polish = true;
    double polish_delta = 1e-7;
    double infeasibility_tol = 1e-7;
};

// Incremental assembly with duplicate-conflict detection.  Quadratic terms
// address the form 0.5 x' P x: add_quadratic(i, i, v) contributes 0.5 v x_i^2
// and add_quadratic(i, j, v) with i != j contributes v x_i x_j.  Repeating an
// entry with the same value collapses to one; a different value is an error.
class QpBuilder {
public:
    explicit QpBuilder(int n_vars) : n_vars_(n_vars), q_(Eigen::VectorXd::Zero(n_vars)) {
        if (n_vars < 1) throw std::invalid_argument("qp: need at least one variable");
    }

    void add_quadratic(int i, int j, double value) {
        check_var(i);
        check_var(j);
        if (i > j) std::swap(i, j);
        p_entries_.push_back({i, j, value});
    }

    void add_linear(int i, double value) {
        check_var(i);
        q_(i) += value;
    }

    int add_row(const std::vector<std::pair<int, double>> &coeffs, double lo, double up) {
        if (std::isnan(lo) || std::isnan(up) || lo > up)
            throw std::invalid_argument("qp: row bounds must satisfy lo <= up");
        const int row = static_cast<int>(lo_.size());
        for (const auto &[col, value] : coeffs) {
            check_var(col);
            g_entries_.push_back({row, col, value});
        }
        lo_.push_back(lo);
        up_.push_back(up);
        return row;
    }

    QuadraticProgram build() const {
        QuadraticProgram qp;
        qp.n_vars = n_vars_;
        qp.q = q_;
        qp.lo = Eigen::Map<const Eigen::VectorXd>(lo_.data(), static_cast<long>(lo_.size()));
        qp.up = Eigen::Map<const Eigen::VectorXd>(up_.data(), static_cast<long>(up_.size()));

        // Canonical order plus conflict detection: identical coordinates must
        // carry identical values no matter the insertion order.
        auto dedupe = [](std::vector<Entry> entries, const char *what) {
            std::sort(entries.begin(), entries.end(), [](const Entry &a, const Entry &b) {
                return a.row != b.row ? a.row < b.row : a.col < b.col;
            });
            std::vector<Entry> out;
            for (const Entry &e : entries) {
                if (!out.empty() && out.back().row == e.row && out.back().col == e.col) {
                    if (out.back().value != e.value)
                        throw std::invalid_argument(std::string("qp: conflicting duplicate ") +
                                                    what + " entry");
                    continue;
                }
                out.push_back(e);
            }
            return out;
        };

        std::vector<Eigen::Triplet<double>> p_trip;
        for (const Entry &e : dedupe(p_entries_, "quadratic")) {
            p_trip.emplace_back(e.row, e.col, e.value);
            if (e.row != e.col) p_trip.emplace_back(e.col, e.row, e.value);
        }
        qp.P.resize(n_vars_, n_vars_);
        qp.P.setFromTriplets(p_trip.begin(), p_trip.end());

        std::vector<Eigen::Triplet<double>> g_trip;
        for (const Entry &e : dedupe(g_entries_, "constraint")) {
            g_trip.emplace_back(e.row, e.col, e.value);
        }
        qp.G.resize(static_cast<long>(lo_.size()), n_vars_);
        qp.G.setFromTriplets(g_trip.begin(), g_trip.end());
        return qp;
    }

private:
    struct Entry {
        int row, col;
        double value;
    };

    void check_var(int i) const {
        if (i < 0 || i >= n_vars_) throw std::out_of_range("qp: variable index out of range");
    }

    int n_vars_;
    Eigen::VectorXd q_;
    std::vector<Entry> p_entries_;
    std::vector<Entry> g_entries_;
    std::vector<double> lo_, up_;
};

namespace detail {

inline Eigen::VectorXd col_inf_norms(const Eigen::SparseMatrix<double> &m) {
    Eigen::VectorXd norms = Eigen::VectorXd::Zero(m.cols());
    for (int k = 0; k < m.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
            norms(it.col()) = std::max(norms(it.col()), std::abs(it.value()));
    return norms;
}

inline Eigen::VectorXd row_inf_norms(const Eigen::SparseMatrix<double> &m) {
    Eigen::VectorXd norms = Eigen::VectorXd::Zero(m.rows());
    for (int k = 0; k < m.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
            norms(it.row()) = std::max(norms(it.row()), std::abs(it.value()));
    return norms;
}

inline void scale_columns_rows(Eigen::SparseMatrix<double> &m, const Eigen::VectorXd &row_scale,
                               const Eigen::VectorXd &col_scale) {
    for (int k = 0; k < m.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
            it.valueRef() *= row_scale(it.row()) * col_scale(it.col());
}

// Operator-splitting solver state over the scaled problem.
class AdmmSolver {
public:
    AdmmSolver(const QuadraticProgram &qp, const QpSettings &settings)
        : qp_(qp), st_(settings), n_(qp.n_vars), m_(qp.n_cons()) {
        if (qp.q.size() != n_ || qp.P.rows() != n_ || qp.P.cols() != n_)
            throw std::invalid_argument("qp: inconsistent objective dimensions");
        if (qp.G.cols() != n_ || qp.lo.size() != m_ || qp.up.size() != m_)
            throw std::invalid_argument("qp: inconsistent constraint dimensions");

        ps_ = qp.P;
        gs_ = qp.G;
        qs_ = qp.q;
        dscale_ = Eigen::VectorXd::Ones(n_);
        escale_ = Eigen::VectorXd::Ones(std::max(m_, 1));
        cost_scale_ = 1.0;
        if (st_.scaling) equilibrate();
        ls_ = qp.lo;
        us_ = qp.up;
        for (int i = 0; i < m_; ++i) {
            if (std::isfinite(ls_(i))) ls_(i) *= escale_(i);
            if (std::isfinite(us_(i))) us_(i) *= escale_(i);
        }

        rho_base_ = st_.rho;
        rho_ = Eigen::VectorXd::Constant(std::max(m_, 1), rho_base_);
        update_rho_vector();
    }

    QpSolution run(const Eigen::VectorXd *warm_x, const Eigen::VectorXd *warm_y) {
        QpSolution sol;
        x_ = Eigen::VectorXd::Zero(n_);
        z_ = Eigen::VectorXd::Zero(m_);
        y_ = Eigen::VectorXd::Zero(m_);
        if (warm_x && warm_x->size() == n_) x_ = warm_x->cwiseQuotient(dscale_);
        if (warm_y && warm_y->size() == m_ && m_ > 0)
            y_ = cost_scale_ * warm_y->cwiseQuotient(escale_);
        if (m_ > 0) {
            z_ = (gs_ * x_).cwiseMax(ls_).cwiseMin(us_);
        }

        factorize();

        if (m_ == 0) {
            // Unconstrained problem: one regularized solve suffices.
            x_ = kkt_->solve(-qs_);
            sol.x = dscale_.cwiseProduct(x_);
            sol.y = Eigen::VectorXd::Zero(0);
            sol.primal_residual = 0.0;
            sol.dual_residual = (qp_.P * sol.x + qp_.q).cwiseAbs().maxCoeff();
            sol.status = QpStatus::Optimal;
            sol.iterations = 1;
            sol.objective = objective(sol.x);
            return sol;
        }

        Eigen::VectorXd rhs(n_ + m_), w(m_), z_aff(m_), y_prev_check = y_;
        int iter = 0;
        bool converged = false;
        int refactor_budget = 15;
        while (iter < st_.max_iterations) {
            ++iter;
            rhs.head(n_) = st_.sigma * x_ - qs_;
            rhs.tail(m_) = z_ - y_.cwiseQuotient(rho_);
            const Eigen::VectorXd kkt_sol = kkt_->solve(rhs);
            const auto x_tilde = kkt_sol.head(n_);
            const auto nu = kkt_sol.tail(m_);
            const Eigen::VectorXd z_tilde = z_ + (nu - y_).cwiseQuotient(rho_);

            x_ = st_.alpha * x_tilde + (1.0 - st_.alpha) * x_;
            z_aff = st_.alpha * z_tilde + (1.0 - st_.alpha) * z_;
            w = z_aff + y_.cwiseQuotient(rho_);
            z_ = w.cwiseMax(ls_).cwiseMin(us_);
            y_ = rho_.cwiseProduct(w - z_);

            if (iter % st_.check_interval != 0 && iter != st_.max_iterations) continue;

            const Residuals res = residuals();
            sol.primal_residual = res.prim;
            sol.dual_residual = res.dual;
            if (res.prim <= res.eps_prim && res.dual <= res.eps_dual) {
                converged = true;
                break;
            }

            if (check_infeasible(y_prev_check, sol)) {
                sol.iterations = iter;
                return sol;
            }
            y_prev_check = y_;

            if (st_.adaptive_rho && refactor_budget > 0) {
                const double prim_rel = res.prim / std::max(res.prim_scale, 1e-12);
                const double dual_rel = res.dual / std::max(res.dual_scale, 1e-12);
                const double ratio = std::sqrt(prim_rel / std::max(dual_rel, 1e-12));
                if (ratio > 5.0 || ratio < 0.2) {
                    rho_base_ = std::clamp(rho_base_ * ratio, 1e-6, 1e6);
                    update_rho_vector();
                    factorize();
                    --refactor_budget;
                }
            }
        }

        sol.iterations = iter;
        sol.x = dscale_.cwiseProduct(x_);
        sol.y = escale_.cwiseProduct(y_) / cost_scale_;
        sol.status = converged ? QpStatus::Optimal : QpStatus::MaxIterations;

        if (st_.polish) polish(sol);
        sol.objective = objective(sol.x);
        return sol;
    }

private:
    struct Residuals {
        double prim = 0.0, dual = 0.0;
        double eps_prim = 0.0, eps_dual = 0.0;
        double prim_scale = 0.0, dual_scale = 0.0;
    };

    void equilibrate() {
        for (int pass = 0; pass < st_.scaling_iterations; ++pass) {
            Eigen::VectorXd cp = col_inf_norms(ps_);
            Eigen::VectorXd cg = m_ > 0 ? col_inf_norms(gs_) : Eigen::VectorXd::Zero(n_);
            Eigen::VectorXd delta(n_);
            for (int j = 0; j < n_; ++j) {
                const double norm = std::max(cp(j), cg(j));
                delta(j) = norm > 0.0 ? 1.0 / std::sqrt(norm) : 1.0;
                delta(j) = std::clamp(delta(j), 1e-6, 1e6);
            }
            scale_columns_rows(ps_, delta, delta);
            qs_ = delta.cwiseProduct(qs_);
            dscale_ = dscale_.cwiseProduct(delta);

            if (m_ > 0) {
                Eigen::VectorXd eps(m_);
                Eigen::VectorXd rg = row_inf_norms(gs_);
                for (int i = 0; i < m_; ++i) {
                    eps(i) = rg(i) > 0.0 ? 1.0 / std::sqrt(rg(i)) : 1.0;
                    eps(i) = std::clamp(eps(i), 1e-6, 1e6);
                }
                scale_columns_rows(gs_, eps, delta);
                escale_ = escale_.cwiseProduct(eps);
            }

            // Cost normalization.
            const double col_mean = col_inf_norms(ps_).mean();
            const double qnorm = qs_.cwiseAbs().maxCoeff();
            const double denom = std::max(col_mean, qnorm);
            if (denom > 0.0) {
                const double gamma = std::clamp(1.0 / denom, 1e-6, 1e6);
                ps_ *= gamma;
                qs_ *= gamma;
                cost_scale_ *= gamma;
            }
        }
    }

    void update_rho_vector() {
        for (int i = 0; i < m_; ++i) {
            const bool equality =
                std::isfinite(qp_.lo(i)) && std::isfinite(qp_.up(i)) && qp_.lo(i) == qp_.up(i);
            const bool loose = !std::isfinite(qp_.lo(i)) && !std::isfinite(qp_.up(i));
            rho_(i) = rho_base_ * (equality ? st_.rho_eq_scale : loose ? 1e-6 : 1.0);
        }
    }

    void factorize() {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<size_t>(ps_.nonZeros() + gs_.nonZeros() + n_ + m_));
        for (int k = 0; k < ps_.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(ps_, k); it; ++it)
                trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value());
        for (int j = 0; j < n_; ++j) trip.emplace_back(j, j, st_.sigma);
        for (int k = 0; k < gs_.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(gs_, k); it; ++it) {
                trip.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value());
                trip.emplace_back(static_cast<int>(it.col()), n_ + static_cast<int>(it.row()),
                                  it.value());
            }
        for (int i = 0; i < m_; ++i) trip.emplace_back(n_ + i, n_ + i, -1.0 / rho_(i));

        Eigen::SparseMatrix<double> kkt(n_ + m_, n_ + m_);
        kkt.setFromTriplets(trip.begin(), trip.end());
        kkt_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
        kkt_->compute(kkt);
        if (kkt_->info() != Eigen::Success)
            throw std::invalid_argument("qp: KKT factorization failed");

        // A positive semidefinite cost gives exactly n positive pivots in the
        // regularized quasi-definite system; anything else is a modeling bug.
        const auto &d = kkt_->vectorD();
        int positive = 0;
        for (long i = 0; i < d.size(); ++i) positive += d(i) > 0.0;
        if (positive != n_)
            throw std::invalid_argument("qp: cost matrix is not positive semidefinite");
    }

    Residuals residuals() {
        Residuals res;
        const Eigen::VectorXd x_u = dscale_.cwiseProduct(x_);
        const Eigen::VectorXd z_u = z_.cwiseQuotient(escale_);
        const Eigen::VectorXd y_u = escale_.cwiseProduct(y_) / cost_scale_;
        const Eigen::VectorXd gx = qp_.G * x_u;
        const Eigen::VectorXd px = qp_.P * x_u;
        const Eigen::VectorXd gty = qp_.G.transpose() * y_u;

        res.prim = m_ > 0 ? (gx - z_u).cwiseAbs().maxCoeff() : 0.0;
        res.dual = (px + qp_.q + gty).cwiseAbs().maxCoeff();
        res.prim_scale =
            m_ > 0 ? std::max(gx.cwiseAbs().maxCoeff(), z_u.cwiseAbs().maxCoeff()) : 0.0;
        res.dual_scale = std::max({px.cwiseAbs().maxCoeff(), gty.cwiseAbs().maxCoeff(),
                                   qp_.q.cwiseAbs().maxCoeff()});
        res.eps_prim = st_.tol_abs + st_.tol_rel * res.prim_scale;
        res.eps_dual = st_.tol_abs + st_.tol_rel * res.dual_scale;
        return res;
    }

    bool check_infeasible(const Eigen::VectorXd &y_prev_check, QpSolution &sol) {
        const Eigen::VectorXd dy_u =
            escale_.cwiseProduct(y_ - y_prev_check) / cost_scale_;
        const double dy_norm = dy_u.cwiseAbs().maxCoeff();
        if (dy_norm <= 1e-12) return false;
        const double cert_tol = st_.infeasibility_tol * dy_norm;
        if ((qp_.G.transpose() * dy_u).cwiseAbs().maxCoeff() > cert_tol) return false;

        double support = 0.0;
        for (int i = 0; i < m_; ++i) {
            const double dp = std::max(dy_u(i), 0.0);
            const double dm = std::min(dy_u(i), 0.0);
            if (dp > 0.0) {
                if (!std::isfinite(qp_.up(i))) {
                    if (dp > cert_tol) return false;
                } else {
                    support += qp_.up(i) * dp;
                }
            }
            if (dm < 0.0) {
                if (!std::isfinite(qp_.lo(i))) {
                    if (-dm > cert_tol) return false;
                } else {
                    support += qp_.lo(i) * dm;
                }
            }
        }
        if (support >= -cert_tol) return false;

        sol.status = QpStatus::PrimalInfeasible;
        sol.x = dscale_.cwiseProduct(x_);
        sol.y = dy_u;  // certificate of infeasibility
        sol.objective = 0.0;
        return true;
    }

    // Solves the equality-constrained problem on the active set found by the
    // splitting iterations; accepted only when it improves both residuals.
    void polish(QpSolution &sol) {
        std::vector<int> active;
        std::vector<double> bound;
        for (int i = 0; i < m_; ++i) {
            const bool equality =
                std::isfinite(qp_.lo(i)) && std::isfinite(qp_.up(i)) && qp_.lo(i) == qp_.up(i);
            if (equality) {
                active.push_back(i);
                bound.push_back(qp_.lo(i));
            } else if (sol.y(i) < 0.0 && std::isfinite(qp_.lo(i))) {
                active.push_back(i);
                bound.push_back(qp_.lo(i));
            } else if (sol.y(i) > 0.0 && std::isfinite(qp_.up(i))) {
                active.push_back(i);
                bound.push_back(qp_.up(i));
            }
        }
        const int na = static_cast<int>(active.size());

        std::vector<Eigen::Triplet<double>> trip;
        for (int k = 0; k < qp_.P.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(qp_.P, k); it; ++it)
                trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value());
        Eigen::SparseMatrix<double> g_act(na, n_);
        {
            std::vector<int> row_of(static_cast<size_t>(m_), -1);
            for (int a = 0; a < na; ++a) row_of[static_cast<size_t>(active[a])] = a;
            std::vector<Eigen::Triplet<double>> gt;
            for (int k = 0; k < qp_.G.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator it(qp_.G, k); it; ++it) {
                    const int a = row_of[static_cast<size_t>(it.row())];
                    if (a >= 0) gt.emplace_back(a, static_cast<int>(it.col()), it.value());
                }
            g_act.setFromTriplets(gt.begin(), gt.end());
        }
        for (int j = 0; j < n_; ++j) trip.emplace_back(j, j, st_.polish_delta);
        for (int k = 0; k < g_act.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(g_act, k); it; ++it) {
                trip.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value());
                trip.emplace_back(static_cast<int>(it.col()), n_ + static_cast<int>(it.row()),
                                  it.value());
            }
        for (int a = 0; a < na; ++a) trip.emplace_back(n_ + a, n_ + a, -st_.polish_delta);

        Eigen::SparseMatrix<double> kkt(n_ + na, n_ + na);
        kkt.setFromTriplets(trip.begin(), trip.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(kkt);
        if (ldlt.info() != Eigen::Success) return;

        Eigen::VectorXd rhs(n_ + na);
        rhs.head(n_) = -qp_.q;
        for (int a = 0; a < na; ++a) rhs(n_ + a) = bound[static_cast<size_t>(a)];
        Eigen::VectorXd solvec = ldlt.solve(rhs);

        // Iterative refinement against the unregularized KKT system.
        for (int pass = 0; pass < 3; ++pass) {
            Eigen::VectorXd residual = rhs;
            residual.head(n_) -=
                qp_.P * solvec.head(n_) + g_act.transpose() * solvec.tail(na);
            residual.tail(na) -= g_act * solvec.head(n_);
            solvec += ldlt.solve(residual);
        }
        if (!solvec.allFinite()) return;

        Eigen::VectorXd x_pol = solvec.head(n_);
        Eigen::VectorXd y_pol = Eigen::VectorXd::Zero(m_);
        for (int a = 0; a < na; ++a) y_pol(active[static_cast<size_t>(a)]) = solvec(n_ + a);

        const Eigen::VectorXd gx = qp_.G * x_pol;
        const double prim =
            m_ > 0
                ? (gx - gx.cwiseMax(qp_.lo).cwiseMin(qp_.up)).cwiseAbs().maxCoeff()
                : 0.0;
        const double dual =
            (qp_.P * x_pol + qp_.q + qp_.G.transpose() * y_pol).cwiseAbs().maxCoeff();
        if (prim <= sol.primal_residual + 1e-15 && dual <= sol.dual_residual + 1e-15) {
            sol.x = std::move(x_pol);
            sol.y = std::move(y_pol);
            sol.primal_residual = prim;
            sol.dual_residual = dual;
            sol.polished = true;
            if (prim <= st_.tol_abs && dual <= st_.tol_abs) sol.status = QpStatus::Optimal;
        }
    }

    double objective(const Eigen::VectorXd &x) const {
        return 0.5 * x.dot(qp_.P * x) + qp_.q.dot(x);
    }

    const QuadraticProgram &qp_;
    QpSettings st_;
    int n_, m_;

    Eigen::SparseMatrix<double> ps_, gs_;  // scaled data
    Eigen::VectorXd qs_, ls_, us_;
    Eigen::VectorXd dscale_, escale_;
    double cost_scale_ = 1.0;

    double rho_base_ = 0.1;
    Eigen::VectorXd rho_;
    Eigen::VectorXd x_, z_, y_;
    std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> kkt_;
};

}  // namespace detail

inline QpSolution solve_qp(const QuadraticProgram &qp, const QpSettings &settings = {},
                           const Eigen::VectorXd *warm_x = nullptr,
                           const Eigen::VectorXd *warm_y = nullptr) {
    detail::AdmmSolver solver(qp, settings);
    return solver.run(warm_x, warm_y);
}

}  // namespace gridmpc

#endif  // GRIDMPC_QP_HPP
