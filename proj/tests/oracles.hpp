#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "aio/tensor.hpp"

// Brute-force references computed by direct enumeration in linear-domain
// arithmetic. Deliberately independent of the dynamic-programming recursions
// they check: no shared code, no log domain, no forward-backward.
namespace oracle {

// Statistics over every monotone alignment of a factored lattice. Paths move
// from node (0,0) by blank steps (t+1) and label steps (u+1), ending with a
// final blank at (T'-1, U).
struct PathStats {
  double total = 0.0;             // P(Y | lattice)
  std::vector<double> node_mass;  // [T' x (U+1)]: mass of paths through node
  std::vector<double> emit_mass;  // [U x T']: mass with token i emitted at t
};

inline PathStats enumerate_alignments(const aio::Tensor& lat, int t_prime,
                                      const std::vector<int>& y) {
  int u_len = static_cast<int>(y.size());
  int up1 = u_len + 1;
  int cols = static_cast<int>(lat.numel() / (static_cast<int64_t>(t_prime) * up1));
  const double* p = lat.data();
  auto prob = [&](int t, int u, int col) {
    return p[(static_cast<size_t>(t) * up1 + u) * cols + col];
  };

  PathStats s;
  s.node_mass.assign(static_cast<size_t>(t_prime) * up1, 0.0);
  s.emit_mass.assign(static_cast<size_t>(u_len) * t_prime, 0.0);

  std::vector<std::pair<int, int>> nodes;
  std::vector<int> emits(static_cast<size_t>(u_len), 0);
  std::function<void(int, int, double)> walk = [&](int t, int u, double acc) {
    nodes.push_back({t, u});
    if (t == t_prime - 1 && u == u_len) {
      double mass = acc * prob(t, u, 0);
      s.total += mass;
      for (auto [nt, nu] : nodes)
        s.node_mass[static_cast<size_t>(nt) * up1 + nu] += mass;
      for (int i = 0; i < u_len; ++i)
        s.emit_mass[static_cast<size_t>(i) * t_prime + emits[i]] += mass;
      nodes.pop_back();
      return;
    }
    if (t + 1 < t_prime) walk(t + 1, u, acc * prob(t, u, 0));
    if (u < u_len) {
      emits[static_cast<size_t>(u)] = t;
      walk(t, u + 1, acc * prob(t, u, y[u] + 1));
    }
    nodes.pop_back();
  };
  walk(0, 0, 1.0);
  return s;
}

inline double transducer_loss(const aio::Tensor& lat, int t_prime,
                              const std::vector<int>& y) {
  double p = enumerate_alignments(lat, t_prime, y).total;
  return -std::log(p);
}

// CTC by enumerating every frame labeling in {blank, label_0..label_{K-1}}^T
// and collapsing it: merge consecutive repeats, then drop blanks.
inline double ctc_likelihood(const aio::Tensor& post,
                             const std::vector<int>& y) {
  int t_len = post.dim(0), cols = post.dim(1);
  double total = 0.0;
  std::vector<int> frame(static_cast<size_t>(t_len), 0);
  std::function<void(int, double)> walk = [&](int t, double acc) {
    if (t == t_len) {
      std::vector<int> collapsed;
      int prev = -1;
      for (int f : frame) {
        if (f != prev && f != 0) collapsed.push_back(f - 1);
        prev = f;
      }
      if (collapsed == y) total += acc;
      return;
    }
    for (int c = 0; c < cols; ++c) {
      frame[static_cast<size_t>(t)] = c;
      walk(t + 1, acc * post(t, c));
    }
  };
  walk(0, 1.0);
  return total;
}

inline double ctc_loss(const aio::Tensor& post, const std::vector<int>& y) {
  return -std::log(ctc_likelihood(post, y));
}

inline double cross_entropy(const aio::Tensor& rows,
                            const std::vector<int>& targets) {
  double loss = 0.0;
  for (size_t i = 0; i < targets.size(); ++i)
    loss -= std::log(rows(static_cast<int>(i), targets[i]));
  return loss;
}

}  // namespace oracle
