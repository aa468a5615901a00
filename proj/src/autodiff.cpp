#include "geomae/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <cstring>

#include "geomae/error.hpp"

namespace geomae::ad {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Id Graph::make(int rows, int cols, bool needs_grad) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.val.assign(static_cast<size_t>(rows) * cols, 0.0);
  n.grad.assign(static_cast<size_t>(rows) * cols, 0.0);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Id Graph::input(std::span<const double> v, int rows, int cols) {
  assert(v.size() == static_cast<size_t>(rows) * cols);
  const Id id = make(rows, cols, true);
  std::copy(v.begin(), v.end(), at(id).val.begin());
  return id;
}

Id Graph::constant(std::span<const double> v, int rows, int cols) {
  assert(v.size() == static_cast<size_t>(rows) * cols);
  const Id id = make(rows, cols, false);
  std::copy(v.begin(), v.end(), at(id).val.begin());
  return id;
}

Id Graph::zero_scalar() {
  return make(1, 1, false);
}

Id Graph::matmul(Id a, Id b) {
  const int m = rows(a), k = cols(a), n = cols(b);
  if (rows(b) != k) throw GeomaeError("matmul shape mismatch");
  const Id c = make(m, n, at(a).needs_grad || at(b).needs_grad);
  {
    const double* pa = at(a).val.data();
    const double* pb = at(b).val.data();
    double* pc = at(c).val.data();
    for (int i = 0; i < m; ++i)
      for (int kk = 0; kk < k; ++kk) {
        const double aik = pa[i * k + kk];
        if (aik == 0.0) continue;
        for (int j = 0; j < n; ++j) pc[i * n + j] += aik * pb[kk * n + j];
      }
  }
  at(c).back = [a, b, c, m, k, n](Graph& g) {
    const double* dc = g.at(c).grad.data();
    if (g.at(a).needs_grad) {
      double* da = g.at(a).grad.data();
      const double* pb = g.at(b).val.data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double d = dc[i * n + j];
          if (d == 0.0) continue;
          for (int kk = 0; kk < k; ++kk) da[i * k + kk] += d * pb[kk * n + j];
        }
    }
    if (g.at(b).needs_grad) {
      double* db = g.at(b).grad.data();
      const double* pa = g.at(a).val.data();
      for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
          const double aik = pa[i * k + kk];
          if (aik == 0.0) continue;
          for (int j = 0; j < n; ++j) db[kk * n + j] += aik * dc[i * n + j];
        }
    }
  };
  return c;
}

Id Graph::matmul_nt(Id a, Id b) {
  const int m = rows(a), k = cols(a), n = rows(b);
  if (cols(b) != k) throw GeomaeError("matmul_nt shape mismatch");
  const Id c = make(m, n, at(a).needs_grad || at(b).needs_grad);
  {
    const double* pa = at(a).val.data();
    const double* pb = at(b).val.data();
    double* pc = at(c).val.data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int kk = 0; kk < k; ++kk) acc += pa[i * k + kk] * pb[j * k + kk];
        pc[i * n + j] = acc;
      }
  }
  at(c).back = [a, b, c, m, k, n](Graph& g) {
    const double* dc = g.at(c).grad.data();
    if (g.at(a).needs_grad) {
      double* da = g.at(a).grad.data();
      const double* pb = g.at(b).val.data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double d = dc[i * n + j];
          if (d == 0.0) continue;
          for (int kk = 0; kk < k; ++kk) da[i * k + kk] += d * pb[j * k + kk];
        }
    }
    if (g.at(b).needs_grad) {
      double* db = g.at(b).grad.data();
      const double* pa = g.at(a).val.data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double d = dc[i * n + j];
          if (d == 0.0) continue;
          for (int kk = 0; kk < k; ++kk) db[j * k + kk] += d * pa[i * k + kk];
        }
    }
  };
  return c;
}

Id Graph::add(Id a, Id b) {
  if (rows(a) != rows(b) || cols(a) != cols(b)) throw GeomaeError("add shape mismatch");
  const Id c = make(rows(a), cols(a), at(a).needs_grad || at(b).needs_grad);
  const size_t sz = at(c).val.size();
  for (size_t i = 0; i < sz; ++i) at(c).val[i] = at(a).val[i] + at(b).val[i];
  at(c).back = [a, b, c, sz](Graph& g) {
    const double* dc = g.at(c).grad.data();
    if (g.at(a).needs_grad) {
      double* da = g.at(a).grad.data();
      for (size_t i = 0; i < sz; ++i) da[i] += dc[i];
    }
    if (g.at(b).needs_grad) {
      double* db = g.at(b).grad.data();
      for (size_t i = 0; i < sz; ++i) db[i] += dc[i];
    }
  };
  return c;
}

Id Graph::add_rowvec(Id a, Id b) {
  if (rows(b) != 1 || cols(b) != cols(a)) throw GeomaeError("add_rowvec shape mismatch");
  const int m = rows(a), n = cols(a);
  const Id c = make(m, n, at(a).needs_grad || at(b).needs_grad);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) at(c).val[i * n + j] = at(a).val[i * n + j] + at(b).val[j];
  at(c).back = [a, b, c, m, n](Graph& g) {
    const double* dc = g.at(c).grad.data();
    if (g.at(a).needs_grad) {
      double* da = g.at(a).grad.data();
      for (int i = 0; i < m * n; ++i) da[i] += dc[i];
    }
    if (g.at(b).needs_grad) {
      double* db = g.at(b).grad.data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) db[j] += dc[i * n + j];
    }
  };
  return c;
}

Id Graph::scale(Id a, double s) {
  const Id c = make(rows(a), cols(a), at(a).needs_grad);
  const size_t sz = at(c).val.size();
  for (size_t i = 0; i < sz; ++i) at(c).val[i] = s * at(a).val[i];
  at(c).back = [a, c, s, sz](Graph& g) {
    if (!g.at(a).needs_grad) return;
    double* da = g.at(a).grad.data();
    const double* dc = g.at(c).grad.data();
    for (size_t i = 0; i < sz; ++i) da[i] += s * dc[i];
  };
  return c;
}

Id Graph::gelu(Id a) {
  const Id c = make(rows(a), cols(a), at(a).needs_grad);
  const size_t sz = at(c).val.size();
  for (size_t i = 0; i < sz; ++i) {
    const double x = at(a).val[i];
    at(c).val[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  at(c).back = [a, c, sz](Graph& g) {
    if (!g.at(a).needs_grad) return;
    double* da = g.at(a).grad.data();
    const double* dc = g.at(c).grad.data();
    const double* x = g.at(a).val.data();
    for (size_t i = 0; i < sz; ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
      da[i] += dc[i] * (cdf + x[i] * pdf);
    }
  };
  return c;
}

Id Graph::softmax_rows(Id a) {
  const int m = rows(a), n = cols(a);
  const Id c = make(m, n, at(a).needs_grad);
  for (int i = 0; i < m; ++i) {
    const double* x = at(a).val.data() + i * n;
    double* y = at(c).val.data() + i * n;
    double mx = -HUGE_VAL;
    for (int j = 0; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (int j = 0; j < n; ++j) y[j] /= sum;
  }
  at(c).back = [a, c, m, n](Graph& g) {
    if (!g.at(a).needs_grad) return;
    for (int i = 0; i < m; ++i) {
      const double* y = g.at(c).val.data() + i * n;
      const double* dy = g.at(c).grad.data() + i * n;
      double* dx = g.at(a).grad.data() + i * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += dy[j] * y[j];
      for (int j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  };
  return c;
}

Id Graph::layer_norm(Id a, Id gamma, Id beta, double eps) {
  const int m = rows(a), n = cols(a);
  if (rows(gamma) != 1 || cols(gamma) != n || rows(beta) != 1 || cols(beta) != n)
    throw GeomaeError("layer_norm parameter shape mismatch");
  const Id c = make(m, n, true);
  // cache normalized activations and the inverse std per row
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (int i = 0; i < m; ++i) {
    const double* x = at(a).val.data() + i * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += x[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < n; ++j) {
      const double xh = (x[j] - mean) * is;
      (*xhat)[i * n + j] = xh;
      at(c).val[i * n + j] = at(gamma).val[j] * xh + at(beta).val[j];
    }
  }
  at(c).back = [a, gamma, beta, c, m, n, xhat, inv_std](Graph& g) {
    const double* dy = g.at(c).grad.data();
    for (int i = 0; i < m; ++i) {
      const double* xh = xhat->data() + i * n;
      const double is = (*inv_std)[i];
      double mean_gdy = 0.0, mean_gdy_xh = 0.0;
      for (int j = 0; j < n; ++j) {
        const double gdy = dy[i * n + j] * g.at(gamma).val[j];
        mean_gdy += gdy;
        mean_gdy_xh += gdy * xh[j];
      }
      mean_gdy /= n;
      mean_gdy_xh /= n;
      if (g.at(a).needs_grad) {
        double* dx = g.at(a).grad.data() + i * n;
        for (int j = 0; j < n; ++j) {
          const double gdy = dy[i * n + j] * g.at(gamma).val[j];
          dx[j] += is * (gdy - mean_gdy - xh[j] * mean_gdy_xh);
        }
      }
      if (g.at(gamma).needs_grad) {
        double* dg = g.at(gamma).grad.data();
        for (int j = 0; j < n; ++j) dg[j] += dy[i * n + j] * xh[j];
      }
      if (g.at(beta).needs_grad) {
        double* db = g.at(beta).grad.data();
        for (int j = 0; j < n; ++j) db[j] += dy[i * n + j];
      }
    }
  };
  return c;
}

Id Graph::gather_rows(Id a, std::vector<int> idx) {
  const int n = cols(a);
  const int m = static_cast<int>(idx.size());
  const Id c = make(m, n, at(a).needs_grad);
  for (int i = 0; i < m; ++i)
    std::memcpy(at(c).val.data() + i * n, at(a).val.data() + idx[i] * n, sizeof(double) * n);
  auto ix = std::make_shared<std::vector<int>>(std::move(idx));
  at(c).back = [a, c, n, ix](Graph& g) {
    if (!g.at(a).needs_grad) return;
    double* da = g.at(a).grad.data();
    const double* dc = g.at(c).grad.data();
    for (size_t i = 0; i < ix->size(); ++i)
      for (int j = 0; j < n; ++j) da[(*ix)[i] * n + j] += dc[i * n + j];
  };
  return c;
}

Id Graph::slice_rows(Id a, int r0, int r1) {
  const int n = cols(a);
  const Id c = make(r1 - r0, n, at(a).needs_grad);
  std::memcpy(at(c).val.data(), at(a).val.data() + static_cast<size_t>(r0) * n,
              sizeof(double) * (r1 - r0) * n);
  at(c).back = [a, c, r0, r1, n](Graph& g) {
    if (!g.at(a).needs_grad) return;
    double* da = g.at(a).grad.data() + static_cast<size_t>(r0) * n;
    const double* dc = g.at(c).grad.data();
    for (int i = 0; i < (r1 - r0) * n; ++i) da[i] += dc[i];
  };
  return c;
}

Id Graph::slice_cols(Id a, int c0, int c1) {
  const int m = rows(a), n = cols(a), w = c1 - c0;
  const Id c = make(m, w, at(a).needs_grad);
  for (int i = 0; i < m; ++i)
    std::memcpy(at(c).val.data() + i * w, at(a).val.data() + i * n + c0, sizeof(double) * w);
  at(c).back = [a, c, c0, m, n, w](Graph& g) {
    if (!g.at(a).needs_grad) return;
    double* da = g.at(a).grad.data();
    const double* dc = g.at(c).grad.data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) da[i * n + c0 + j] += dc[i * w + j];
  };
  return c;
}

Id Graph::concat_rows(std::span<const Id> parts) {
  if (parts.empty()) throw GeomaeError("concat_rows of nothing");
  const int n = cols(parts[0]);
  int m = 0;
  bool ng = false;
  for (Id p : parts) {
    if (cols(p) != n) throw GeomaeError("concat_rows width mismatch");
    m += rows(p);
    ng = ng || at(p).needs_grad;
  }
  const Id c = make(m, n, ng);
  size_t off = 0;
  for (Id p : parts) {
    std::memcpy(at(c).val.data() + off, at(p).val.data(), sizeof(double) * at(p).val.size());
    off += at(p).val.size();
  }
  auto ps = std::make_shared<std::vector<Id>>(parts.begin(), parts.end());
  at(c).back = [c, ps](Graph& g) {
    const double* dc = g.at(c).grad.data();
    size_t off = 0;
    for (Id p : *ps) {
      const size_t sz = g.at(p).grad.size();
      if (g.at(p).needs_grad) {
        double* dp = g.at(p).grad.data();
        for (size_t i = 0; i < sz; ++i) dp[i] += dc[off + i];
      }
      off += sz;
    }
  };
  return c;
}

Id Graph::concat_cols(Id a, Id b) {
  if (rows(a) != rows(b)) throw GeomaeError("concat_cols height mismatch");
  const int m = rows(a), na = cols(a), nb = cols(b);
  const Id c = make(m, na + nb, at(a).needs_grad || at(b).needs_grad);
  for (int i = 0; i < m; ++i) {
    std::memcpy(at(c).val.data() + i * (na + nb), at(a).val.data() + i * na,
                sizeof(double) * na);
    std::memcpy(at(c).val.data() + i * (na + nb) + na, at(b).val.data() + i * nb,
                sizeof(double) * nb);
  }
  at(c).back = [a, b, c, m, na, nb](Graph& g) {
    const double* dc = g.at(c).grad.data();
    if (g.at(a).needs_grad) {
      double* da = g.at(a).grad.data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < na; ++j) da[i * na + j] += dc[i * (na + nb) + j];
    }
    if (g.at(b).needs_grad) {
      double* db = g.at(b).grad.data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < nb; ++j) db[i * nb + j] += dc[i * (na + nb) + na + j];
    }
  };
  return c;
}

Id Graph::broadcast_row(Id a, int m) {
  if (rows(a) != 1) throw GeomaeError("broadcast_row expects a row vector");
  const int n = cols(a);
  const Id c = make(m, n, at(a).needs_grad);
  for (int i = 0; i < m; ++i)
    std::memcpy(at(c).val.data() + i * n, at(a).val.data(), sizeof(double) * n);
  at(c).back = [a, c, m, n](Graph& g) {
    if (!g.at(a).needs_grad) return;
    double* da = g.at(a).grad.data();
    const double* dc = g.at(c).grad.data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) da[j] += dc[i * n + j];
  };
  return c;
}

Id Graph::segment_max(Id a, std::vector<std::pair<int, int>> spans) {
  const int n = cols(a);
  const int v = static_cast<int>(spans.size());
  const Id c = make(v, n, at(a).needs_grad);
  auto arg = std::make_shared<std::vector<int>>(static_cast<size_t>(v) * n);
  for (int s = 0; s < v; ++s) {
    const auto [lo, hi] = spans[s];
    if (lo >= hi) throw GeomaeError("segment_max on empty span");
    for (int j = 0; j < n; ++j) {
      double best = at(a).val[static_cast<size_t>(lo) * n + j];
      int bi = lo;
      for (int r = lo + 1; r < hi; ++r) {
        const double x = at(a).val[static_cast<size_t>(r) * n + j];
        if (x > best) {
          best = x;
          bi = r;
        }
      }
      at(c).val[static_cast<size_t>(s) * n + j] = best;
      (*arg)[static_cast<size_t>(s) * n + j] = bi;
    }
  }
  at(c).back = [a, c, n, v, arg](Graph& g) {
    if (!g.at(a).needs_grad) return;
    double* da = g.at(a).grad.data();
    const double* dc = g.at(c).grad.data();
    for (int s = 0; s < v; ++s)
      for (int j = 0; j < n; ++j)
        da[static_cast<size_t>((*arg)[static_cast<size_t>(s) * n + j]) * n + j] +=
            dc[static_cast<size_t>(s) * n + j];
  };
  return c;
}

Id Graph::segment_broadcast(Id a, std::vector<std::pair<int, int>> spans, int total_rows) {
  const int n = cols(a);
  const Id c = make(total_rows, n, at(a).needs_grad);
  for (size_t s = 0; s < spans.size(); ++s) {
    const auto [lo, hi] = spans[s];
    for (int r = lo; r < hi; ++r)
      std::memcpy(at(c).val.data() + static_cast<size_t>(r) * n,
                  at(a).val.data() + s * n, sizeof(double) * n);
  }
  auto sp = std::make_shared<std::vector<std::pair<int, int>>>(std::move(spans));
  at(c).back = [a, c, n, sp](Graph& g) {
    if (!g.at(a).needs_grad) return;
    double* da = g.at(a).grad.data();
    const double* dc = g.at(c).grad.data();
    for (size_t s = 0; s < sp->size(); ++s) {
      const auto [lo, hi] = (*sp)[s];
      for (int r = lo; r < hi; ++r)
        for (int j = 0; j < n; ++j) da[s * n + j] += dc[static_cast<size_t>(r) * n + j];
    }
  };
  return c;
}

Id Graph::mse_masked(Id pred, std::vector<double> target, std::vector<double> mask) {
  const size_t sz = at(pred).val.size();
  if (target.size() != sz || mask.size() != sz)
    throw GeomaeError("mse_masked size mismatch");
  double count = 0.0;
  for (double m : mask) count += m;
  const double denom = std::max(count, 1.0);
  const Id c = make(1, 1, at(pred).needs_grad);
  double sum = 0.0;
  for (size_t i = 0; i < sz; ++i) {
    const double d = at(pred).val[i] - target[i];
    sum += mask[i] * d * d;
  }
  at(c).val[0] = sum / denom;
  auto t = std::make_shared<std::vector<double>>(std::move(target));
  auto mk = std::make_shared<std::vector<double>>(std::move(mask));
  at(c).back = [pred, c, sz, denom, t, mk](Graph& g) {
    if (!g.at(pred).needs_grad) return;
    const double dl = g.at(c).grad[0];
    double* dp = g.at(pred).grad.data();
    const double* pv = g.at(pred).val.data();
    for (size_t i = 0; i < sz; ++i)
      dp[i] += dl * 2.0 * (*mk)[i] * (pv[i] - (*t)[i]) / denom;
  };
  return c;
}

Id Graph::mse_masked_signflip(Id pred, std::vector<double> target,
                              std::vector<double> row_mask) {
  const int m = rows(pred), n = cols(pred);
  if (target.size() != at(pred).val.size() || row_mask.size() != static_cast<size_t>(m))
    throw GeomaeError("mse_masked_signflip size mismatch");
  double count = 0.0;
  for (double v : row_mask) count += v;
  const double denom = std::max(count * n, 1.0);
  auto signs = std::make_shared<std::vector<double>>(m, 1.0);
  double sum = 0.0;
  for (int i = 0; i < m; ++i) {
    if (row_mask[i] == 0.0) continue;
    double sse_pos = 0.0, sse_neg = 0.0;
    for (int j = 0; j < n; ++j) {
      const double p = at(pred).val[i * n + j], t = target[i * n + j];
      sse_pos += (p - t) * (p - t);
      sse_neg += (p + t) * (p + t);
    }
    const double s = sse_neg < sse_pos ? -1.0 : 1.0;
    (*signs)[i] = s;
    sum += s < 0 ? sse_neg : sse_pos;
  }
  const Id c = make(1, 1, at(pred).needs_grad);
  at(c).val[0] = sum / denom;
  auto t = std::make_shared<std::vector<double>>(std::move(target));
  auto rm = std::make_shared<std::vector<double>>(std::move(row_mask));
  at(c).back = [pred, c, m, n, denom, t, rm, signs](Graph& g) {
    if (!g.at(pred).needs_grad) return;
    const double dl = g.at(c).grad[0];
    double* dp = g.at(pred).grad.data();
    const double* pv = g.at(pred).val.data();
    for (int i = 0; i < m; ++i) {
      if ((*rm)[i] == 0.0) continue;
      for (int j = 0; j < n; ++j)
        dp[i * n + j] +=
            dl * 2.0 * (pv[i * n + j] - (*signs)[i] * (*t)[i * n + j]) / denom;
    }
  };
  return c;
}

Id Graph::bce_logits_mean(Id logits, std::vector<double> targets) {
  const size_t sz = at(logits).val.size();
  if (targets.size() != sz) throw GeomaeError("bce size mismatch");
  const double denom = std::max<double>(static_cast<double>(sz), 1.0);
  const Id c = make(1, 1, at(logits).needs_grad);
  double sum = 0.0;
  for (size_t i = 0; i < sz; ++i) {
    const double z = at(logits).val[i], t = targets[i];
    sum += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  at(c).val[0] = sum / denom;
  auto t = std::make_shared<std::vector<double>>(std::move(targets));
  at(c).back = [logits, c, sz, denom, t](Graph& g) {
    if (!g.at(logits).needs_grad) return;
    const double dl = g.at(c).grad[0];
    double* dz = g.at(logits).grad.data();
    const double* z = g.at(logits).val.data();
    for (size_t i = 0; i < sz; ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-z[i]));
      dz[i] += dl * (sig - (*t)[i]) / denom;
    }
  };
  return c;
}

void Graph::backward(Id root) {
  if (backward_done_) throw GeomaeError("backward already ran on this graph");
  if (at(root).val.size() != 1) throw GeomaeError("backward root must be scalar");
  backward_done_ = true;
  at(root).grad[0] = 1.0;
  for (Id i = root; i >= 0; --i) {
    if (nodes_[i].back && nodes_[i].needs_grad) nodes_[i].back(*this);
  }
}

}  // namespace geomae::ad
