#include "satq/weights.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "satq/errors.hpp"
#include "satq/markov.hpp"

namespace satq {

CommGraph::CommGraph(int n_agents, std::vector<Edge> edges)
    : n_agents_(n_agents), neighbors_(n_agents > 0 ? n_agents : 0) {
  if (n_agents < 1) throw ArgumentError("graph needs at least one agent");
  for (auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_agents || b >= n_agents)
      throw ArgumentError("edge (" + std::to_string(a) + ", " + std::to_string(b) + ") out of range");
    if (a == b) throw StructureError("self-loop on agent " + std::to_string(a));
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);
  for (const auto& [a, b] : edges_) {
    neighbors_[a].push_back(b);
    neighbors_[b].push_back(a);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());

  if (n_agents > 1) {
    std::vector<char> seen(n_agents, 0);
    std::queue<int> frontier;
    frontier.push(0);
    seen[0] = 1;
    while (!frontier.empty()) {
      const int v = frontier.front();
      frontier.pop();
      for (int w : neighbors_[v])
        if (!seen[w]) seen[w] = 1, frontier.push(w);
    }
    for (int v = 0; v < n_agents; ++v)
      if (!seen[v]) throw StructureError("graph is disconnected: agent " + std::to_string(v) + " unreachable");
  }
}

int CommGraph::max_degree() const {
  int d = 0;
  for (int i = 0; i < n_agents_; ++i) d = std::max(d, degree(i));
  return d;
}

bool CommGraph::adjacent(int i, int j) const {
  return std::binary_search(neighbors_[i].begin(), neighbors_[i].end(), j);
}

bool CommGraph::is_regular() const {
  for (int i = 1; i < n_agents_; ++i)
    if (degree(i) != degree(0)) return false;
  return true;
}

GraphKind graph_kind_from_string(const std::string& text) {
  if (text == "cycle") return GraphKind::Cycle;
  if (text == "complete") return GraphKind::Complete;
  if (text == "line") return GraphKind::Line;
  if (text == "custom") return GraphKind::Custom;
  throw ArgumentError("unknown graph kind '" + text + "'");
}

std::string to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::Cycle: return "cycle";
    case GraphKind::Complete: return "complete";
    case GraphKind::Line: return "line";
    case GraphKind::Custom: return "custom";
  }
  return "custom";
}

CommGraph build_graph(GraphKind kind, int n_agents, std::vector<Edge> custom_edges) {
  if (n_agents < 2 && kind != GraphKind::Custom) throw ArgumentError("graph needs at least 2 agents");
  std::vector<Edge> edges;
  switch (kind) {
    case GraphKind::Cycle:
      for (int i = 0; i < n_agents; ++i) edges.emplace_back(i, (i + 1) % n_agents);
      break;
    case GraphKind::Complete:
      for (int i = 0; i < n_agents; ++i)
        for (int j = i + 1; j < n_agents; ++j) edges.emplace_back(i, j);
      break;
    case GraphKind::Line:
      for (int i = 0; i + 1 < n_agents; ++i) edges.emplace_back(i, i + 1);
      break;
    case GraphKind::Custom:
      edges = std::move(custom_edges);
      break;
  }
  return CommGraph(n_agents, std::move(edges));
}

// ---------------------------------------------------------------------------

GossipMatrix GossipMatrix::from_rows(std::span<const std::vector<double>> rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  GossipMatrix m{Eigen::MatrixXd(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != n) throw StructureError("gossip row has wrong length");
    for (Eigen::Index j = 0; j < n; ++j) m.p(i, j) = rows[i][j];
  }
  return m;
}

void validate_row(const CommGraph& graph, int i, std::span<const double> row) {
  if (static_cast<int>(row.size()) != graph.n_agents())
    throw StructureError("row of agent " + std::to_string(i) + " has wrong length");
  double sum = 0.0;
  for (int j = 0; j < graph.n_agents(); ++j) {
    if (row[j] < 0.0 || !std::isfinite(row[j]))
      throw StructureError("row of agent " + std::to_string(i) + " has an invalid entry");
    if (row[j] != 0.0 && !graph.in_support(i, j))
      throw StructureError("row of agent " + std::to_string(i) + " puts mass on non-neighbour " +
                           std::to_string(j));
    sum += row[j];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw StructureError("row of agent " + std::to_string(i) + " sums to " + std::to_string(sum));
}

void GossipMatrix::validate(const CommGraph& graph) const {
  if (p.rows() != graph.n_agents() || p.cols() != graph.n_agents())
    throw StructureError("gossip matrix shape does not match the graph");
  for (int i = 0; i < graph.n_agents(); ++i) {
    std::vector<double> row(p.cols());
    for (Eigen::Index j = 0; j < p.cols(); ++j) row[j] = p(i, j);
    validate_row(graph, i, row);
  }
}

DeviationVector DeviationVector::from(std::span<const double> z, std::span<const double> beta) {
  if (z.size() != beta.size()) throw ArgumentError("z and beta differ in length");
  DeviationVector d;
  d.values.resize(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) d.values[k] = z[k] - beta[k];
  return d;
}

std::vector<double> uniform_row(const CommGraph& graph, int i) {
  std::vector<double> row(graph.n_agents(), 0.0);
  const double w = 1.0 / (1.0 + graph.degree(i));
  row[i] = w;
  for (int j : graph.neighbors(i)) row[j] = w;
  return row;
}

std::vector<double> mwu_row_update(const CommGraph& graph, int i, std::span<const double> current_row,
                                   const DeviationVector& deviations, const MwuParams& params) {
  if (!(params.gamma > 0.0 && params.gamma < 1.0)) throw ArgumentError("MWU gamma must lie in (0, 1)");
  if (!(params.temperature > 0.0)) throw ArgumentError("temperature must be positive");
  if (!(params.eps_w >= 0.0 && params.eps_w < 1.0)) throw ArgumentError("eps_w must lie in [0, 1)");
  if (deviations.size() != graph.n_agents()) throw ArgumentError("deviation vector has wrong length");
  validate_row(graph, i, current_row);

  constexpr double kFactorMin = 1e-300;
  constexpr double kFactorMax = 1e300;
  std::vector<double> next(graph.n_agents(), 0.0);
  next[i] = current_row[i];
  for (int j : graph.neighbors(i)) {
    const double d = deviations[j];
    const double log_factor = d >= 0.0 ? (d / params.temperature) * std::log1p(params.gamma)
                                       : (-d / params.temperature) * std::log1p(-params.gamma);
    const double factor = std::clamp(std::exp(log_factor), kFactorMin, kFactorMax);
    next[j] = current_row[j] * factor;
  }
  double total = next[i];
  for (int j : graph.neighbors(i)) total += next[j];
  const double mix = params.eps_w / (1.0 + graph.degree(i));
  next[i] = (1.0 - params.eps_w) * next[i] / total + mix;
  for (int j : graph.neighbors(i)) next[j] = (1.0 - params.eps_w) * next[j] / total + mix;
  return next;
}

std::vector<double> mh_row_update(const CommGraph& graph, int i, const DeviationVector& deviations,
                                  double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
  if (deviations.size() != graph.n_agents()) throw ArgumentError("deviation vector has wrong length");
  std::vector<double> row(graph.n_agents(), 0.0);
  const double inv_deg = 1.0 / graph.degree(i);
  double off = 0.0;
  for (int j : graph.neighbors(i)) {
    const double gap = std::max(deviations[i] - deviations[j], 0.0);
    row[j] = inv_deg * std::exp(-gap / temperature);
    off += row[j];
  }
  row[i] = std::max(1.0 - off, 0.0);
  return row;
}

Eigen::VectorXd stationary_distribution(const GossipMatrix& matrix, const StationaryOptions& options) {
  const Eigen::MatrixXd& P = matrix.p;
  if (P.rows() == 0 || P.rows() != P.cols()) throw StructureError("gossip matrix must be square and nonempty");
  if (!markov::is_irreducible(P)) throw StructureError("gossip matrix is reducible");
  Eigen::VectorXd pi = options.method == StationaryMethod::Direct
                           ? markov::solve_stationary(P)
                           : markov::power_stationary(P, options.tol, options.max_iter);
  if (markov::stationary_residual(P, pi) > options.tol)
    throw NumericError("stationary distribution residual exceeds tolerance");
  return pi;
}

}  // namespace satq
