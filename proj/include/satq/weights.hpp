#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace satq {

using Edge = std::pair<int, int>;

// Undirected, connected communication graph without self-loops.
class CommGraph {
 public:
  CommGraph(int n_agents, std::vector<Edge> edges);

  int n_agents() const { return n_agents_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int i) const { return neighbors_[i]; }
  int degree(int i) const { return static_cast<int>(neighbors_[i].size()); }
  int max_degree() const;
  bool adjacent(int i, int j) const;
  // True for j in N(i) or j == i.
  bool in_support(int i, int j) const { return i == j || adjacent(i, j); }
  bool is_regular() const;

 private:
  int n_agents_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> neighbors_;
};

enum class GraphKind { Cycle, Complete, Line, Custom };

GraphKind graph_kind_from_string(const std::string& text);
std::string to_string(GraphKind kind);

CommGraph build_graph(GraphKind kind, int n_agents, std::vector<Edge> custom_edges = {});

// Row-stochastic N x N matrix whose row i is supported on N(i) and i.
struct GossipMatrix {
  Eigen::MatrixXd p;

  static GossipMatrix from_rows(std::span<const std::vector<double>> rows);
  // Throws StructureError on a row that leaves the graph, has a negative
  // entry, or does not sum to 1 within 1e-12.
  void validate(const CommGraph& graph) const;
};

// Per-agent z^i - beta^i.
struct DeviationVector {
  std::vector<double> values;

  static DeviationVector from(std::span<const double> z, std::span<const double> beta);
  double operator[](int i) const { return values[i]; }
  int size() const { return static_cast<int>(values.size()); }
};

void validate_row(const CommGraph& graph, int i, std::span<const double> row);

// p_0(j|i) = 1 / (1 + deg(i)) on N(i) and i.
std::vector<double> uniform_row(const CommGraph& graph, int i);

struct MwuParams {
  double gamma;        // in (0, 1)
  double temperature;  // > 0
  double eps_w;        // in [0, 1)
};

// Hedge-style reweighting of agent i's gossip row. Neighbours over their bound
// are multiplied by (1 + gamma)^((z - beta) / T), those under it by
// (1 - gamma)^((beta - z) / T), the self weight is left alone, and the
// normalised row is mixed with eps_w of uniform mass on N(i) and i.
std::vector<double> mwu_row_update(const CommGraph& graph, int i, std::span<const double> current_row,
                                   const DeviationVector& deviations, const MwuParams& params);

// Metropolis-Hastings row: p(j|i) = exp(-(V_i - V_j)^+ / T) / deg(i) for
// neighbours, self weight takes the remainder.
std::vector<double> mh_row_update(const CommGraph& graph, int i, const DeviationVector& deviations,
                                  double temperature);

enum class StationaryMethod { Direct, PowerIteration };

struct StationaryOptions {
  double tol = 1e-10;
  long max_iter = 1'000'000;
  StationaryMethod method = StationaryMethod::Direct;
};

// pi with pi^T P = pi^T. Throws StructureError for a reducible matrix and
// NumericError when the result misses `tol`.
Eigen::VectorXd stationary_distribution(const GossipMatrix& matrix, const StationaryOptions& options = {});

}  // namespace satq
