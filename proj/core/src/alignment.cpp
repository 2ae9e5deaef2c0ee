#include "aio/alignment.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "aio/ops.hpp"

namespace aio {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

TransducerDp transducer_dp(const Tensor& lattice, int t_prime,
                           const std::vector<int>& y) {
  require(t_prime >= 1, "transducer_dp: T' must be positive");
  int U = static_cast<int>(y.size());
  int up1 = U + 1;
  require(lattice.numel() % (static_cast<int64_t>(t_prime) * up1) == 0,
          "transducer_dp: lattice size must be T'*(U+1)*(K+1)");
  int cols =
      static_cast<int>(lattice.numel() / (static_cast<int64_t>(t_prime) * up1));
  require(cols >= 2, "transducer_dp: need blank plus at least one label");
  for (int v : y)
    require(v >= 0 && v + 1 < cols, "transducer_dp: label id out of range");

  const double* lat = lattice.data();
  auto lp = [&](int t, int u, int col) {
    return safe_log(lat[(static_cast<size_t>(t) * up1 + u) * cols + col]);
  };

  TransducerDp dp;
  dp.t_prime = t_prime;
  dp.u_len = U;
  dp.log_alpha.assign(static_cast<size_t>(t_prime) * up1, kNegInf);
  dp.log_beta.assign(static_cast<size_t>(t_prime) * up1, kNegInf);
  auto a = [&](int t, int u) -> double& {
    return dp.log_alpha[static_cast<size_t>(t) * up1 + u];
  };
  auto b = [&](int t, int u) -> double& {
    return dp.log_beta[static_cast<size_t>(t) * up1 + u];
  };

  a(0, 0) = 0.0;
  for (int t = 0; t < t_prime; ++t) {
    for (int u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double from_blank = t > 0 ? a(t - 1, u) + lp(t - 1, u, 0) : kNegInf;
      double from_label =
          u > 0 ? a(t, u - 1) + lp(t, u - 1, y[u - 1] + 1) : kNegInf;
      a(t, u) = log_sum_exp2(from_blank, from_label);
    }
  }
  dp.log_total = a(t_prime - 1, U) + lp(t_prime - 1, U, 0);

  for (int t = t_prime - 1; t >= 0; --t) {
    for (int u = U; u >= 0; --u) {
      if (t == t_prime - 1 && u == U) {
        b(t, u) = lp(t, u, 0);
        continue;
      }
      double via_blank = t + 1 < t_prime ? lp(t, u, 0) + b(t + 1, u) : kNegInf;
      double via_label = u + 1 <= U ? lp(t, u, y[u] + 1) + b(t, u + 1) : kNegInf;
      b(t, u) = log_sum_exp2(via_blank, via_label);
    }
  }
  return dp;
}

Tensor occupancy(const Tensor& lattice, int t_prime,
                 const std::vector<int>& y) {
  TransducerDp dp = transducer_dp(lattice, t_prime, y);
  require(std::isfinite(dp.log_total), "occupancy: infeasible target");
  int up1 = dp.u_len + 1;
  Tensor g = Tensor::zeros({t_prime, up1});
  for (int t = 0; t < t_prime; ++t) {
    for (int u = 0; u < up1; ++u) {
      double occ = dp.log_alpha[static_cast<size_t>(t) * up1 + u] +
                   dp.log_beta[static_cast<size_t>(t) * up1 + u] -
                   dp.log_total;
      g(t, u) = std::isfinite(occ) ? std::exp(occ) : 0.0;
    }
  }
  return g;
}

Tensor emission_distribution(const Tensor& lattice, int t_prime,
                             const std::vector<int>& y) {
  TransducerDp dp = transducer_dp(lattice, t_prime, y);
  require(std::isfinite(dp.log_total),
          "emission_distribution: infeasible target");
  int U = dp.u_len;
  int up1 = U + 1;
  int cols =
      static_cast<int>(lattice.numel() / (static_cast<int64_t>(t_prime) * up1));
  const double* lat = lattice.data();

  Tensor e = Tensor::zeros({U, t_prime});
  for (int i = 0; i < U; ++i) {
    for (int t = 0; t < t_prime; ++t) {
      // Emitting token i at frame t: reach (t, i), emit the label there,
      // complete from (t, i+1).
      double p = lat[(static_cast<size_t>(t) * up1 + i) * cols + y[i] + 1];
      double score = dp.log_alpha[static_cast<size_t>(t) * up1 + i] +
                     safe_log(p) +
                     dp.log_beta[static_cast<size_t>(t) * up1 + i + 1] -
                     dp.log_total;
      e(i, t) = std::isfinite(score) ? std::exp(score) : 0.0;
    }
  }
  return e;
}

std::vector<int> emission_frames(const Tensor& lattice, int t_prime,
                                 const std::vector<int>& y) {
  Tensor e = emission_distribution(lattice, t_prime, y);
  int U = static_cast<int>(y.size());
  std::vector<int> frames(static_cast<size_t>(U), 0);
  for (int i = 0; i < U; ++i) {
    double best = -1.0;
    int best_t = 0;
    for (int t = 0; t < t_prime; ++t) {
      if (e(i, t) > best) {
        best = e(i, t);
        best_t = t;
      }
    }
    frames[static_cast<size_t>(i)] = best_t;
  }
  for (int i = 1; i < U; ++i)
    if (frames[i] < frames[i - 1]) frames[i] = frames[i - 1];
  return frames;
}

AttentionMask aed_stream_mask(const std::vector<int>& frames,
                              const ChunkConfig& cfg, int t_prime) {
  cfg.validate();
  require(t_prime >= 1, "aed_stream_mask: T' must be positive");
  for (int f : frames)
    require(f >= 0 && f < t_prime, "aed_stream_mask: frame out of range");
  int rows = static_cast<int>(frames.size()) + 1;
  AttentionMask m(rows, t_prime, false);
  for (int u = 0; u < rows; ++u) {
    // Row 0 sees the first chunk; row u >= 1 everything up to the end of the
    // chunk containing the token's emission frame.
    int chunk = u == 0 ? 0 : frames[static_cast<size_t>(u - 1)] / cfg.chunk_len;
    int last = std::min(t_prime, (chunk + 1) * cfg.chunk_len);
    for (int t = 0; t < last; ++t) m.set(u, t, true);
  }
  return m;
}

}  // namespace aio
