#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stategate/errors.hpp"
#include "stategate/numerics.hpp"

namespace stategate {

struct PersistentState {
  Matrix tokens;  // N x C, committed S_t
};

struct CandidateState {
  Matrix tokens;  // N x C, decoder proposal for the current frame
};

struct FrameTokens {
  Matrix tokens;  // K x C
};

enum class AttentionSource { post_softmax, pre_softmax_abs };

/// Per-layer N x K cross-attention. `weights` holds post-softmax values and
/// `logits` the scaled pre-softmax scores for the same entries.
struct AttentionTrace {
  std::vector<Matrix> weights;
  std::vector<Matrix> logits;

  std::size_t layer_count() const noexcept { return weights.size(); }
  const std::vector<Matrix>& layers(AttentionSource src) const noexcept {
    return src == AttentionSource::post_softmax ? weights : logits;
  }
};

enum class MaskKind { temporal, spatial, fused, uniform };

struct UpdateMask {
  Vector values;
  MaskKind kind = MaskKind::uniform;
};

enum class Strategy { uniform, temporal_only, spatial_only, fused };

inline constexpr Strategy kAllStrategies[] = {Strategy::uniform, Strategy::temporal_only,
                                              Strategy::spatial_only, Strategy::fused};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::uniform: return "uniform";
    case Strategy::temporal_only: return "temporal";
    case Strategy::spatial_only: return "spatial";
    case Strategy::fused: return "fused";
  }
  return "unknown";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "uniform") return Strategy::uniform;
  if (s == "temporal" || s == "temporal_only") return Strategy::temporal_only;
  if (s == "spatial" || s == "spatial_only") return Strategy::spatial_only;
  if (s == "fused") return Strategy::fused;
  throw ConfigError("strategy: unknown value '" + std::string(s) + "'");
}

inline std::string_view to_string(AttentionSource s) {
  return s == AttentionSource::post_softmax ? "post" : "preabs";
}

struct GateConfig {
  float tau = 1.0f;
  float eps_mean = 1e-8f;
  float spat_gain = 1.0f;
  float spat_bias = 0.0f;
  AttentionSource attn_source = AttentionSource::post_softmax;

  void validate() const {
    if (!(tau > 0.0f)) throw ConfigError("tau: must be > 0");
    if (!(eps_mean > 0.0f)) throw ConfigError("eps_mean: must be > 0");
    if (!(spat_gain > 0.0f)) throw ConfigError("spat_gain: must be > 0");
    if (!std::isfinite(spat_bias)) throw ConfigError("spat_bias: must be finite");
  }
};

// Normalized per-token delta magnitude. Falls back to all ones when the mean
// delta is below eps_mean.
inline Vector normalized_delta(const Matrix& curr, const Matrix& prev, float eps_mean) {
  if (!curr.same_shape(prev)) throw ConfigError("temporal_mask: candidate shape mismatch");
  Vector delta = rowwise_l2(subtract(curr, prev));
  const float mu = mean(delta);
  if (!(mu >= eps_mean)) return Vector(delta.size(), 1.0f);
  for (auto& d : delta) d /= mu;
  return delta;
}

inline UpdateMask temporal_mask(const CandidateState& curr, const CandidateState& prev,
                                const GateConfig& cfg) {
  Vector dh = normalized_delta(curr.tokens, prev.tokens, cfg.eps_mean);
  for (auto& d : dh) d -= cfg.tau;
  return {sigmoid(dh), MaskKind::temporal};
}

inline Vector feature_divergence(const FrameTokens& curr, const FrameTokens& prev) {
  if (!curr.tokens.same_shape(prev.tokens)) throw ConfigError("feature_divergence: frame shape mismatch");
  Vector d = rowwise_cosine(curr.tokens, prev.tokens);
  for (auto& x : d) x = 1.0f - x;
  return d;
}

inline Matrix aggregate_attention(const std::vector<Matrix>& layers) {
  if (layers.empty()) throw ConfigError("aggregate_attention: empty trace");
  Matrix out(layers.front().rows(), layers.front().cols());
  for (const auto& layer : layers) {
    if (!layer.same_shape(out)) throw ConfigError("aggregate_attention: layer shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += std::fabs(layer.data()[i]);
  }
  const float inv = 1.0f / static_cast<float>(layers.size());
  for (auto& x : out.data()) x *= inv;
  return out;
}

inline Matrix aggregate_attention(const AttentionTrace& trace, AttentionSource src = AttentionSource::post_softmax) {
  return aggregate_attention(trace.layers(src));
}

inline UpdateMask spatial_mask(const Matrix& attn, const Vector& divergence, const GateConfig& cfg) {
  if (attn.cols() != divergence.size()) {
    throw ConfigError("spatial_mask: attention has " + std::to_string(attn.cols()) +
                      " columns but divergence has length " + std::to_string(divergence.size()));
  }
  Vector raw = rowwise_max(col_broadcast_mul(attn, divergence));
  for (auto& r : raw) r = cfg.spat_gain * r + cfg.spat_bias;
  return {sigmoid(raw), MaskKind::spatial};
}

inline UpdateMask fuse_masks(const UpdateMask& temporal, const UpdateMask& spatial) {
  if (temporal.kind != MaskKind::temporal || spatial.kind != MaskKind::spatial) {
    throw ConfigError("fuse_masks: expected a temporal and a spatial mask");
  }
  if (temporal.values.size() != spatial.values.size()) throw ConfigError("fuse_masks: length mismatch");
  UpdateMask out{Vector(temporal.values.size()), MaskKind::fused};
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = temporal.values[i] * spatial.values[i];
  return out;
}

inline UpdateMask uniform_mask(std::size_t n) {
  if (n == 0) throw ConfigError("uniform_mask: n must be >= 1");
  return {Vector(n, 1.0f), MaskKind::uniform};
}

inline PersistentState apply_update(const CandidateState& candidate, const PersistentState& prev,
                                    const UpdateMask& mask) {
  const Matrix& c = candidate.tokens;
  const Matrix& p = prev.tokens;
  if (!c.same_shape(p)) throw ConfigError("apply_update: candidate/state shape mismatch");
  if (mask.values.size() != c.rows()) throw ConfigError("apply_update: mask length mismatch");
  PersistentState out{Matrix(c.rows(), c.cols())};
  for (std::size_t i = 0; i < c.rows(); ++i) {
    const float m = mask.values[i];
    if (!(m >= 0.0f && m <= 1.0f)) throw ConfigError("apply_update: mask value outside [0,1]");
    auto ci = c.row(i);
    auto pi = p.row(i);
    auto oi = out.tokens.row(i);
    if (m == 1.0f || m == 0.0f) {
      const auto src = m == 1.0f ? ci : pi;
      std::copy(src.begin(), src.end(), oi.begin());
      continue;
    }
    // The clamp absorbs rounding so the result never leaves [prev, candidate].
    for (std::size_t j = 0; j < ci.size(); ++j)
      oi[j] = std::clamp(m * ci[j] + (1.0f - m) * pi[j], std::min(ci[j], pi[j]), std::max(ci[j], pi[j]));
  }
  return out;
}

struct GateResult {
  PersistentState state;
  UpdateMask mask;
};

inline UpdateMask compute_mask(const CandidateState& candidate, const CandidateState& prev_candidate,
                               const FrameTokens& frame, const FrameTokens& prev_frame,
                               const AttentionTrace& trace, const GateConfig& cfg, Strategy strategy) {
  const std::size_t n = candidate.tokens.rows();
  switch (strategy) {
    case Strategy::uniform:
      return uniform_mask(n);
    case Strategy::temporal_only:
      return temporal_mask(candidate, prev_candidate, cfg);
    case Strategy::spatial_only:
      return spatial_mask(aggregate_attention(trace, cfg.attn_source), feature_divergence(frame, prev_frame), cfg);
    case Strategy::fused:
      return fuse_masks(temporal_mask(candidate, prev_candidate, cfg),
                        spatial_mask(aggregate_attention(trace, cfg.attn_source),
                                     feature_divergence(frame, prev_frame), cfg));
  }
  throw ConfigError("gate_step: unknown strategy");
}

/// One gated state update. On the first frame (both buffers absent) the
/// uniform mask is used whatever the strategy.
inline GateResult gate_step(const CandidateState& candidate, const CandidateState* prev_candidate,
                            const PersistentState& prev_state, const FrameTokens& frame,
                            const FrameTokens* prev_frame, const AttentionTrace& trace,
                            const GateConfig& cfg, Strategy strategy) {
  const bool cold = prev_candidate == nullptr && prev_frame == nullptr;
  if (!cold && (prev_candidate == nullptr || prev_frame == nullptr)) {
    throw StateMachineError("gate_step: candidate and frame buffers must both be present after frame 1");
  }
  UpdateMask mask = (cold || strategy == Strategy::uniform)
                        ? uniform_mask(candidate.tokens.rows())
                        : compute_mask(candidate, *prev_candidate, frame, *prev_frame, trace, cfg, strategy);
  PersistentState next = apply_update(candidate, prev_state, mask);
  return {std::move(next), std::move(mask)};
}

/// Per-stream buffers (S_{t-1}, previous candidate, previous frame).
/// Single writer: call step() from one thread per session.
class GateSession {
 public:
  GateSession(PersistentState initial, GateConfig cfg, Strategy strategy)
      : state_(std::move(initial)), cfg_(cfg), strategy_(strategy) {
    if (strategy_ != Strategy::uniform) cfg_.validate();
  }

  const UpdateMask& step(CandidateState candidate, FrameTokens frame, const AttentionTrace& trace) {
    GateResult r = gate_step(candidate, prev_candidate_ ? &*prev_candidate_ : nullptr, state_, frame,
                             prev_frame_ ? &*prev_frame_ : nullptr, trace, cfg_, strategy_);
    state_ = std::move(r.state);
    last_mask_ = std::move(r.mask);
    prev_candidate_ = std::move(candidate);
    prev_frame_ = std::move(frame);
    ++frames_;
    return last_mask_;
  }

  const PersistentState& state() const noexcept { return state_; }
  const UpdateMask& last_mask() const noexcept { return last_mask_; }
  std::size_t frames() const noexcept { return frames_; }
  Strategy strategy() const noexcept { return strategy_; }

 private:
  PersistentState state_;
  GateConfig cfg_;
  Strategy strategy_;
  std::optional<CandidateState> prev_candidate_;
  std::optional<FrameTokens> prev_frame_;
  UpdateMask last_mask_;
  std::size_t frames_ = 0;
};

}  // namespace stategate
