#pragma once

// Scalar double-precision reference implementations. Written directly from
// the formulas with plain loops and no calls into the float kernels, so they
// can serve as an independent oracle.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "stategate/numerics.hpp"

namespace stategate::reference {

struct Grid {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;
  Grid() = default;
  Grid(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  explicit Grid(const Matrix& m) : rows(m.rows()), cols(m.cols()), v(m.data().begin(), m.data().end()) {}
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

using Line = std::vector<double>;

inline Line line(const Vector& x) { return Line(x.begin(), x.end()); }

inline double logistic(double x) { return 0.5 * (1.0 + std::tanh(0.5 * x)); }

inline Grid matmul(const Grid& a, const Grid& b) {
  Grid out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j)
      for (std::size_t k = 0; k < a.cols; ++k) out.at(i, j) += a.at(i, k) * b.at(k, j);
  return out;
}

inline Grid softmax_rows(const Grid& m) {
  Grid out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < m.cols; ++j) mx = std::fmax(mx, m.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) z += std::exp(m.at(i, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < m.cols; ++j) out.at(i, j) = std::exp(m.at(i, j) - lse);
  }
  return out;
}

inline Line l2_rows(const Grid& m) {
  Line out(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) s += m.at(i, j) * m.at(i, j);
    out[i] = std::sqrt(s);
  }
  return out;
}

inline Line cosine_rows(const Grid& a, const Grid& b) {
  Line out(a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
      dot += a.at(i, j) * b.at(i, j);
      na += a.at(i, j) * a.at(i, j);
      nb += b.at(i, j) * b.at(i, j);
    }
    double c = dot / (std::sqrt(na) * std::sqrt(nb) + 1e-8);
    out[i] = c < -1.0 ? -1.0 : (c > 1.0 ? 1.0 : c);
  }
  return out;
}

inline Line sigmoid(const Line& x) {
  Line out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = logistic(x[i]);
  return out;
}

inline Grid scale_columns(const Grid& m, const Line& v) {
  Grid out = m;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out.at(i, j) = m.at(i, j) * v[j];
  return out;
}

inline Line max_rows(const Grid& m) {
  Line out(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double best = m.at(i, 0);
    for (std::size_t j = 1; j < m.cols; ++j)
      if (m.at(i, j) > best) best = m.at(i, j);
    out[i] = best;
  }
  return out;
}

inline Line temporal_mask(const Grid& curr, const Grid& prev, double tau, double eps_mean) {
  const std::size_t n = curr.rows;
  Line delta(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < curr.cols; ++j) {
      const double d = curr.at(i, j) - prev.at(i, j);
      s += d * d;
    }
    delta[i] = std::sqrt(s);
    total += delta[i];
  }
  const double mu = total / double(n);
  Line out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dh = mu >= eps_mean ? delta[i] / mu : 1.0;
    out[i] = logistic(dh - tau);
  }
  return out;
}

inline Line divergence(const Grid& curr, const Grid& prev) {
  Line c = cosine_rows(curr, prev);
  for (auto& x : c) x = 1.0 - x;
  return c;
}

inline Grid mean_abs_layers(const std::vector<Grid>& layers) {
  Grid out(layers[0].rows, layers[0].cols);
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) {
      double s = 0.0;
      for (const auto& l : layers) s += std::fabs(l.at(i, j));
      out.at(i, j) = s / double(layers.size());
    }
  return out;
}

inline Line spatial_mask(const Grid& attn, const Line& div, double gain, double bias) {
  Line out(attn.rows);
  for (std::size_t i = 0; i < attn.rows; ++i) {
    double best = attn.at(i, 0) * div[0];
    for (std::size_t k = 1; k < attn.cols; ++k) best = std::fmax(best, attn.at(i, k) * div[k]);
    out[i] = logistic(gain * best + bias);
  }
  return out;
}

inline Line fuse(const Line& a, const Line& b) {
  Line out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline Grid interpolate(const Grid& cand, const Grid& prev, const Line& m) {
  Grid out(cand.rows, cand.cols);
  for (std::size_t i = 0; i < cand.rows; ++i)
    for (std::size_t j = 0; j < cand.cols; ++j)
      out.at(i, j) = prev.at(i, j) + m[i] * (cand.at(i, j) - prev.at(i, j));
  return out;
}

struct DecoderParams {
  std::vector<Grid> q, k, v;
  Grid frame_positions;
  bool use_sink = true;
  double sink_logit = 0.0;
  bool convex = true;
};

struct DecodeResult {
  Grid candidate;
  std::vector<Grid> attention;
  std::vector<Grid> logits;
};

// present[k] == 0 removes key k from every softmax.
inline DecodeResult decode(const Grid& frame, const Grid& state, const DecoderParams& p,
                           const std::vector<std::uint8_t>& present) {
  const std::size_t n = state.rows, kk = frame.rows, c = state.cols;
  Grid x = state;
  DecodeResult res;
  for (std::size_t l = 0; l < p.q.size(); ++l) {
    Grid in(kk, c);
    for (std::size_t a = 0; a < kk; ++a)
      for (std::size_t b = 0; b < c; ++b) in.at(a, b) = frame.at(a, b) + p.frame_positions.at(a, b);
    Grid attn(n, kk), logit(n, kk), nx(n, c);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(kk, 0.0);
      double mx = p.use_sink ? p.sink_logit : -INFINITY;
      for (std::size_t j = 0; j < kk; ++j) {
        if (!present.empty() && !present[j]) continue;
        double acc = 0.0;
        for (std::size_t a = 0; a < c; ++a) {
          double qa = 0.0, ka = 0.0;
          for (std::size_t b = 0; b < c; ++b) {
            qa += x.at(i, b) * p.q[l].at(b, a);
            ka += in.at(j, b) * p.k[l].at(b, a);
          }
          acc += qa * ka;
        }
        s[j] = acc / std::sqrt(double(c));
        logit.at(i, j) = s[j];
        mx = std::fmax(mx, s[j]);
      }
      double z = p.use_sink ? std::exp(p.sink_logit - mx) : 0.0;
      for (std::size_t j = 0; j < kk; ++j)
        if (present.empty() || present[j]) z += std::exp(s[j] - mx);
      double taken = 0.0;
      for (std::size_t j = 0; j < kk; ++j) {
        if (!present.empty() && !present[j]) continue;
        attn.at(i, j) = z > 0.0 ? std::exp(s[j] - mx) / z : 0.0;
        taken += attn.at(i, j);
      }
      const double keep = p.convex ? 1.0 - taken : 1.0;
      for (std::size_t a = 0; a < c; ++a) {
        double val = keep * x.at(i, a);
        for (std::size_t j = 0; j < kk; ++j) {
          double vj = 0.0;
          for (std::size_t b = 0; b < c; ++b) vj += in.at(j, b) * p.v[l].at(b, a);
          val += attn.at(i, j) * vj;
        }
        nx.at(i, a) = val;
      }
    }
    x = nx;
    res.attention.push_back(attn);
    res.logits.push_back(logit);
  }
  res.candidate = x;
  return res;
}

}  // namespace stategate::reference
