#pragma once

#include <Eigen/Dense>
#include <vector>

namespace satq::markov {

// Strongly connected components of the support graph of a row-stochastic
// matrix (edge i -> j iff P(i, j) > 0). Component ids are dense from 0.
std::vector<int> strong_components(const Eigen::MatrixXd& P, int* n_components);

// Number of closed (recurrent) communicating classes.
int closed_class_count(const Eigen::MatrixXd& P);

bool is_irreducible(const Eigen::MatrixXd& P);

// Stationary law of a chain with exactly one closed class, by exact state
// reduction on that class. Transient states get zero mass. Throws
// StructureError when the chain has more than one closed class.
Eigen::VectorXd solve_stationary(const Eigen::MatrixXd& P);

// Power iteration on the lazy chain (P + I) / 2, which has the same stationary
// law as P and is aperiodic whenever P is irreducible. Throws NumericError when
// the L1 change per sweep stays above `tol` for `max_iter` sweeps.
Eigen::VectorXd power_stationary(const Eigen::MatrixXd& P, double tol,
                                 long max_iter);

// || pi^T P - pi^T ||_1
double stationary_residual(const Eigen::MatrixXd& P, const Eigen::VectorXd& pi);

}  // namespace satq::markov
