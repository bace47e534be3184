#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "stategate/errors.hpp"
#include "stategate/numerics.hpp"
#include "stategate/random.hpp"
#include "stategate/state_core.hpp"

namespace stategate {

// How a layer folds attended values into the state tokens.
//   convex:   s <- s + sum_k a_k (v_k - s)   (the sink keeps the remainder)
//   additive: s <- s + sum_k a_k v_k
enum class WriteRule { convex, additive };

struct DecoderConfig {
  std::size_t state_tokens = 16;  // N
  std::size_t frame_tokens = 16;  // K
  std::size_t channels = 32;      // C
  std::size_t obs_channels = 16;  // C_obs
  std::size_t layers = 4;         // L
  float position_scale = 12.0f;
  float sink_logit = 8.5f;
  bool use_sink = true;
  float projection_jitter = 0.0f;
  WriteRule write_rule = WriteRule::convex;
  std::uint64_t seed = 7;

  void validate() const {
    if (state_tokens == 0) throw ConfigError("state_tokens: must be >= 1");
    if (frame_tokens == 0) throw ConfigError("frame_tokens: must be >= 1");
    if (channels == 0) throw ConfigError("channels: must be >= 1");
    if (obs_channels == 0 || obs_channels > channels) throw ConfigError("obs_channels: must be in [1, channels]");
    if (layers == 0) throw ConfigError("layers: must be >= 1");
    if (!(position_scale >= 0.0f)) throw ConfigError("position_scale: must be >= 0");
    if (!std::isfinite(sink_logit)) throw ConfigError("sink_logit: must be finite");
    if (!(projection_jitter >= 0.0f)) throw ConfigError("projection_jitter: must be >= 0");
  }
};

/// Immutable decoder parameters. Every token (state or frame) carries a fixed
/// positional code; content lives in the encoder's range and positions in its
/// orthogonal complement whenever the channel budget allows.
struct DecoderWeights {
  Matrix encoder;                  // C_obs x C
  std::vector<Matrix> query, key, value;  // per layer, C x C
  Matrix readout;                  // C x C
  Matrix state_positions;          // N x C
  Matrix frame_positions;          // K x C
  float sink_logit = 8.5f;
  bool use_sink = true;
  WriteRule write_rule = WriteRule::convex;
  std::uint64_t seed = 0;

  std::size_t channels() const noexcept { return readout.cols(); }
  std::size_t obs_channels() const noexcept { return encoder.rows(); }
  std::size_t layers() const noexcept { return query.size(); }
  std::size_t state_tokens() const noexcept { return state_positions.rows(); }
  std::size_t frame_tokens() const noexcept { return frame_positions.rows(); }

  PersistentState initial_state() const { return {state_positions}; }

  void validate() const {
    const std::size_t c = readout.cols();
    if (readout.rows() != c) throw ConfigError("readout: must be square");
    if (encoder.cols() != c) throw ConfigError("encoder: column count must equal channels");
    if (query.empty() || query.size() != key.size() || query.size() != value.size()) {
      throw ConfigError("layers: query/key/value lists must be non-empty and equal length");
    }
    for (std::size_t l = 0; l < query.size(); ++l) {
      for (const Matrix* w : {&query[l], &key[l], &value[l]}) {
        if (w->rows() != c || w->cols() != c) throw ConfigError("layer " + std::to_string(l) + ": projection must be CxC");
      }
    }
    if (state_positions.cols() != c || frame_positions.cols() != c) throw ConfigError("positions: column count must equal channels");
  }
};

namespace detail {

// Modified Gram-Schmidt on the columns of a square matrix.
inline Matrix orthonormal_columns(Matrix m) {
  const std::size_t n = m.rows();
  for (std::size_t j = 0; j < m.cols(); ++j) {
    for (std::size_t p = 0; p < j; ++p) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += double(m(i, j)) * m(i, p);
      for (std::size_t i = 0; i < n; ++i) m(i, j) -= static_cast<float>(dot * m(i, p));
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += double(m(i, j)) * m(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) m(i, j) = norm > 0.0 ? static_cast<float>(m(i, j) / norm) : 0.0f;
  }
  return m;
}

inline Matrix near_identity(Rng& rng, std::size_t c, float jitter) {
  Matrix w = Matrix::identity(c);
  if (jitter > 0.0f) {
    const double s = jitter / std::sqrt(double(c));
    for (auto& x : w.data()) x += static_cast<float>(rng.gaussian() * s);
  }
  return w;
}

}  // namespace detail

inline DecoderWeights make_decoder_weights(const DecoderConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.channels, co = cfg.obs_channels;
  Rng rng(derive_seed(cfg.seed, {0xdec0de}));

  const Matrix basis = detail::orthonormal_columns(rng.gaussian_matrix(c, c));

  DecoderWeights w;
  w.seed = cfg.seed;
  w.sink_logit = cfg.sink_logit;
  w.use_sink = cfg.use_sink;
  w.write_rule = cfg.write_rule;

  // encoder = G * Qc^T with G ~ N(0, 1/C_obs); readout projects onto span(Qc).
  const Matrix mixing = rng.gaussian_matrix(co, co, 1.0 / std::sqrt(double(co)));
  Matrix content_t(co, c);
  for (std::size_t j = 0; j < co; ++j)
    for (std::size_t i = 0; i < c; ++i) content_t(j, i) = basis(i, j);
  w.encoder = matmul(mixing, content_t);
  w.readout = Matrix(c, c);
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = 0; b < c; ++b) {
      float acc = 0.0f;
      for (std::size_t j = 0; j < co; ++j) acc += basis(a, j) * basis(b, j);
      w.readout(a, b) = acc;
    }

  // Positional codes: orthonormal directions in the complement of the content
  // subspace when there are enough spare channels, else unit Gaussian rows.
  const std::size_t slots = std::max(cfg.state_tokens, cfg.frame_tokens);
  const std::size_t spare = c - co;
  Matrix positions(slots, c);
  if (spare >= slots) {
    const Matrix coords = detail::orthonormal_columns(rng.gaussian_matrix(spare, spare));
    for (std::size_t s = 0; s < slots; ++s)
      for (std::size_t i = 0; i < c; ++i) {
        float acc = 0.0f;
        for (std::size_t j = 0; j < spare; ++j) acc += coords(j, s) * basis(i, co + j);
        positions(s, i) = acc * cfg.position_scale;
      }
  } else {
    Matrix g = rng.gaussian_matrix(slots, c);
    for (std::size_t s = 0; s < slots; ++s) {
      float n = 0.0f;
      for (float x : g.row(s)) n += x * x;
      n = std::sqrt(n);
      for (std::size_t i = 0; i < c; ++i) positions(s, i) = n > 0.0f ? g(s, i) / n * cfg.position_scale : 0.0f;
    }
  }
  w.state_positions = Matrix(cfg.state_tokens, c);
  w.frame_positions = Matrix(cfg.frame_tokens, c);
  for (std::size_t s = 0; s < cfg.state_tokens; ++s)
    std::copy(positions.row(s).begin(), positions.row(s).end(), w.state_positions.row(s).begin());
  for (std::size_t s = 0; s < cfg.frame_tokens; ++s)
    std::copy(positions.row(s).begin(), positions.row(s).end(), w.frame_positions.row(s).begin());

  // Queries and keys are tied per layer; values pass tokens through.
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Matrix qk = detail::near_identity(rng, c, cfg.projection_jitter);
    w.query.push_back(qk);
    w.key.push_back(std::move(qk));
    w.value.push_back(Matrix::identity(c));
  }
  return w;
}

/// Frame tokens plus which slots carry an observation this frame. Slots
/// without one are skipped by attention.
struct EncodedFrame {
  FrameTokens tokens;
  std::vector<std::uint8_t> present;  // length K; empty means all present
};

struct DecodeOutput {
  CandidateState candidate;
  AttentionTrace trace;
  std::vector<Matrix> layer_features;  // N x C after each layer
  std::vector<Vector> sink_mass;       // per layer, attention kept by the sink
};

inline FrameTokens encode_frame(const Matrix& observation, const DecoderWeights& w) {
  if (observation.cols() != w.obs_channels()) {
    throw ConfigError("encode_frame: observation has " + std::to_string(observation.cols()) +
                      " channels, encoder expects " + std::to_string(w.obs_channels()));
  }
  return {matmul(observation, w.encoder)};
}

inline DecodeOutput decode_step(const FrameTokens& frame, const PersistentState& state, const DecoderWeights& w,
                                const std::vector<std::uint8_t>& present = {}) {
  const std::size_t n = state.tokens.rows(), k = frame.tokens.rows(), c = w.channels();
  if (state.tokens.cols() != c || frame.tokens.cols() != c) throw ConfigError("decode_step: channel mismatch");
  if (n != w.state_tokens()) throw ConfigError("decode_step: state token count mismatch");
  if (k != w.frame_tokens()) throw ConfigError("decode_step: frame token count mismatch");
  if (!present.empty() && present.size() != k) throw ConfigError("decode_step: presence mask length mismatch");
  auto is_present = [&](std::size_t j) { return present.empty() || present[j] != 0; };

  const Matrix inputs = add(frame.tokens, w.frame_positions);
  const float inv_sqrt_c = 1.0f / std::sqrt(static_cast<float>(c));

  DecodeOutput out;
  Matrix x = state.tokens;
  for (std::size_t l = 0; l < w.layers(); ++l) {
    const Matrix q = matmul(x, w.query[l]);
    const Matrix keys = matmul(inputs, w.key[l]);
    const Matrix vals = matmul(inputs, w.value[l]);
    Matrix logits = matmul_transposed(q, keys);
    for (auto& v : logits.data()) v *= inv_sqrt_c;

    Matrix attn(n, k);
    Vector sink(n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
      float mx = w.use_sink ? w.sink_logit : -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j < k; ++j)
        if (is_present(j)) mx = std::max(mx, logits(i, j));
      float sum = 0.0f;
      for (std::size_t j = 0; j < k; ++j) {
        if (!is_present(j)) continue;
        attn(i, j) = std::exp(logits(i, j) - mx);
        sum += attn(i, j);
      }
      float s = w.use_sink ? std::exp(w.sink_logit - mx) : 0.0f;
      sum += s;
      if (sum > 0.0f) {
        for (std::size_t j = 0; j < k; ++j) attn(i, j) /= sum;
        s /= sum;
      }
      sink[i] = s;
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j)
        if (!is_present(j)) logits(i, j) = 0.0f;

    const Matrix attended = matmul(attn, vals);
    Matrix next(n, c);
    for (std::size_t i = 0; i < n; ++i) {
      float taken = 0.0f;
      for (std::size_t j = 0; j < k; ++j) taken += attn(i, j);
      const float keep = w.write_rule == WriteRule::convex ? 1.0f - taken : 1.0f;
      for (std::size_t ch = 0; ch < c; ++ch) next(i, ch) = keep * x(i, ch) + attended(i, ch);
    }
    x = std::move(next);
    out.trace.weights.push_back(std::move(attn));
    out.trace.logits.push_back(std::move(logits));
    out.sink_mass.push_back(std::move(sink));
    out.layer_features.push_back(x);
  }
  out.candidate.tokens = std::move(x);
  return out;
}

inline DecodeOutput decode_step(const EncodedFrame& frame, const PersistentState& state, const DecoderWeights& w) {
  return decode_step(frame.tokens, state, w, frame.present);
}

inline Matrix readout(const Matrix& tokens, const DecoderWeights& w) {
  if (tokens.cols() != w.readout.rows()) throw ConfigError("readout: channel mismatch");
  return matmul(tokens, w.readout);
}

inline Matrix readout(const CandidateState& s, const DecoderWeights& w) { return readout(s.tokens, w); }
inline Matrix readout(const PersistentState& s, const DecoderWeights& w) { return readout(s.tokens, w); }

}  // namespace stategate
