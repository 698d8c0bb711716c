#include "oracles.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace oracle {

double lp_transport_optimum(const otkd::MatrixRM& cost, const std::vector<double>& a, const std::vector<double>& b) {
  const int m = static_cast<int>(cost.rows());
  const int n = static_cast<int>(cost.cols());
  // nodes: 0 source, 1..m rows, m+1..m+n cols, m+n+1 sink
  const int nodes = m + n + 2;
  const int source = 0;
  const int sink = m + n + 1;
  struct Edge {
    int to;
    double cap;
    double cost;
    int rev;
  };
  std::vector<std::vector<Edge>> g(static_cast<std::size_t>(nodes));
  auto add = [&](int u, int v, double cap, double c) {
    g[u].push_back({v, cap, c, static_cast<int>(g[v].size())});
    g[v].push_back({u, 0.0, -c, static_cast<int>(g[u].size()) - 1});
  };
  for (int i = 0; i < m; ++i) add(source, 1 + i, a[i], 0.0);
  for (int j = 0; j < n; ++j) add(1 + m + j, sink, b[j], 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) add(1 + i, 1 + m + j, std::numeric_limits<double>::infinity(), cost(i, j));
  }
  const double total = std::accumulate(a.begin(), a.end(), 0.0);
  double flow = 0.0;
  double result = 0.0;
  const double capEps = 1e-15;
  while (flow < total - 1e-13) {
    std::vector<double> dist(nodes, std::numeric_limits<double>::infinity());
    std::vector<int> prevNode(nodes, -1), prevEdge(nodes, -1);
    dist[source] = 0.0;
    // Bellman-Ford; residual graph may carry negative costs.
    for (int round = 0; round < nodes; ++round) {
      bool changed = false;
      for (int u = 0; u < nodes; ++u) {
        if (!std::isfinite(dist[u])) continue;
        for (int e = 0; e < static_cast<int>(g[u].size()); ++e) {
          const Edge& ed = g[u][e];
          if (ed.cap > capEps && dist[u] + ed.cost < dist[ed.to] - 1e-15) {
            dist[ed.to] = dist[u] + ed.cost;
            prevNode[ed.to] = u;
            prevEdge[ed.to] = e;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    if (!std::isfinite(dist[sink])) break;
    double push = total - flow;
    for (int v = sink; v != source; v = prevNode[v]) push = std::min(push, g[prevNode[v]][prevEdge[v]].cap);
    for (int v = sink; v != source; v = prevNode[v]) {
      Edge& ed = g[prevNode[v]][prevEdge[v]];
      ed.cap -= push;
      g[v][ed.rev].cap += push;
    }
    flow += push;
    result += push * dist[sink];
  }
  return result;
}

double best_permutation_cost(const otkd::MatrixRM& cost, double mass) {
  std::vector<int> perm(static_cast<std::size_t>(cost.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) c += cost(static_cast<Eigen::Index>(i), perm[i]);
    best = std::min(best, c * mass);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

namespace {

std::vector<double> conv_stack(const std::vector<otkd::ConvLayerSpec>& layers, std::vector<double> x) {
  for (const auto& l : layers) {
    std::vector<double> y;
    for (std::size_t start = 0; start + static_cast<std::size_t>(l.kernel) <= x.size();
         start += static_cast<std::size_t>(l.stride)) {
      double s = 0.0;
      for (int k = 0; k < l.kernel; ++k) s += (1.0 + 0.1 * k) * x[start + static_cast<std::size_t>(k)];
      y.push_back(s);
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace

int impulse_footprint(const std::vector<otkd::ConvLayerSpec>& layers) {
  // Input length giving three outputs at the top of the stack.
  std::size_t len = 3;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    len = (len - 1) * static_cast<std::size_t>(it->stride) + static_cast<std::size_t>(it->kernel);
  }
  const std::size_t probe = 1;   // middle output cell
  int lo = -1;
  int hi = -1;
  for (std::size_t p = 0; p < len; ++p) {
    std::vector<double> x(len, 0.0);
    x[p] = 1.0;
    const std::vector<double> y = conv_stack(layers, x);
    if (y.at(probe) != 0.0) {
      if (lo < 0) lo = static_cast<int>(p);
      hi = static_cast<int>(p);
    }
  }
  return hi - lo + 1;
}

double quaternion_angle_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const Eigen::Quaterniond qa(a);
  const Eigen::Quaterniond qb(b);
  const double d = std::min(1.0, std::abs(qa.normalized().dot(qb.normalized())));
  return 2.0 * std::acos(d) * 180.0 / 3.14159265358979323846;
}

}  // namespace oracle
