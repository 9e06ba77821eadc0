#include "satq/markov.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "satq/errors.hpp"

namespace satq::markov {

std::vector<int> strong_components(const Eigen::MatrixXd& P, int* n_components) {
  const int n = static_cast<int>(P.rows());
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (P(i, j) > 0.0) adj[i].push_back(j);

  // Iterative Tarjan; chains here have a few thousand states at most but the
  // recursion depth would still be proportional to n.
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
  std::vector<char> on_stack(n, 0);
  std::vector<std::pair<int, std::size_t>> call;
  int next_index = 0, n_comp = 0;
  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    call.emplace_back(root, 0);
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& [v, edge] = call.back();
      if (edge < adj[v].size()) {
        const int w = adj[v][edge++];
        if (index[w] == -1) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.emplace_back(w, 0);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = n_comp;
        } while (w != v);
        ++n_comp;
      }
      const int finished = v;
      call.pop_back();
      if (!call.empty()) {
        const int parent = call.back().first;
        low[parent] = std::min(low[parent], low[finished]);
      }
    }
  }
  if (n_components) *n_components = n_comp;
  return comp;
}

int closed_class_count(const Eigen::MatrixXd& P) {
  int n_comp = 0;
  const auto comp = strong_components(P, &n_comp);
  std::vector<char> leaks(n_comp, 0);
  for (int i = 0; i < P.rows(); ++i)
    for (int j = 0; j < P.cols(); ++j)
      if (P(i, j) > 0.0 && comp[i] != comp[j]) leaks[comp[i]] = 1;
  return static_cast<int>(std::count(leaks.begin(), leaks.end(), 0));
}

bool is_irreducible(const Eigen::MatrixXd& P) {
  int n_comp = 0;
  strong_components(P, &n_comp);
  return n_comp == 1;
}

Eigen::VectorXd solve_stationary(const Eigen::MatrixXd& P) {
  // Grassmann-Taksar-Heyman state reduction on the closed class. It uses no
  // subtractions, so tiny transition probabilities keep full relative accuracy.
  const Eigen::Index n = P.rows();
  int n_comp = 0;
  const auto comp = strong_components(P, &n_comp);
  std::vector<char> leaks(n_comp, 0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (P(i, j) > 0.0 && comp[i] != comp[j]) leaks[comp[i]] = 1;
  if (std::count(leaks.begin(), leaks.end(), 0) != 1) throw StructureError("chain is not unichain");
  const int closed = static_cast<int>(std::find(leaks.begin(), leaks.end(), 0) - leaks.begin());
  std::vector<Eigen::Index> states;
  for (Eigen::Index i = 0; i < n; ++i)
    if (comp[i] == closed) states.push_back(i);

  const Eigen::Index m = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXd A(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) A(a, b) = P(states[a], states[b]);
  for (Eigen::Index k = m - 1; k > 0; --k) {
    const double s = A.row(k).head(k).sum();
    if (!(s > 0.0)) throw NumericError("stationary reduction hit a zero pivot");
    A.col(k).head(k) /= s;
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j) A(i, j) += A(i, k) * A(k, j);
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
  x(0) = 1.0;
  for (Eigen::Index k = 1; k < m; ++k) x(k) = x.head(k).dot(A.col(k).head(k));
  if (!x.allFinite()) throw NumericError("stationary solve produced non-finite values");
  x /= x.sum();
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(n);
  for (Eigen::Index a = 0; a < m; ++a) pi(states[a]) = x(a);
  return pi;
}

Eigen::VectorXd power_stationary(const Eigen::MatrixXd& P, double tol,
                                 long max_iter) {
  const Eigen::Index n = P.rows();
  const Eigen::MatrixXd lazy =
      0.5 * (P + Eigen::MatrixXd::Identity(n, n)).transpose();
  Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (long it = 0; it < max_iter; ++it) {
    Eigen::VectorXd next = lazy * pi;
    next /= next.sum();
    // One lazy sweep moves pi by exactly half of || pi^T P - pi^T ||_1.
    const double residual = 2.0 * (next - pi).lpNorm<1>();
    pi = std::move(next);
    if (residual <= tol) return pi;
  }
  throw NumericError("power iteration did not converge within " +
                     std::to_string(max_iter) + " sweeps");
}

double stationary_residual(const Eigen::MatrixXd& P, const Eigen::VectorXd& pi) {
  return (P.transpose() * pi - pi).lpNorm<1>();
}

}  // namespace satq::markov
