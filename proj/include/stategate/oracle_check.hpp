#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stategate/numerics.hpp"
#include "stategate/random.hpp"
#include "stategate/reference.hpp"
#include "stategate/state_core.hpp"
#include "stategate/toy_decoder.hpp"

namespace stategate {

struct OpReport {
  std::string op;
  std::size_t checks = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
};

struct OracleReport {
  std::vector<OpReport> ops;
  std::size_t instances = 0;
  double tolerance = 1e-5;

  bool passed() const {
    return std::all_of(ops.begin(), ops.end(), [](const OpReport& r) { return r.failures == 0 && r.checks > 0; });
  }
  std::size_t failures() const {
    std::size_t f = 0;
    for (const auto& r : ops) f += r.failures;
    return f;
  }
};

// |a - b| / max(1, |b|): relative where |b| >= 1, absolute below.
inline double rel_error(double got, double want) {
  if (std::isnan(got) || std::isnan(want)) return INFINITY;
  return std::fabs(got - want) / std::fmax(1.0, std::fabs(want));
}

namespace detail {

class OracleRecorder {
 public:
  explicit OracleRecorder(double tol) : tol_(tol) {}

  void compare(const std::string& op, const Matrix& got, const reference::Grid& want) {
    double worst = got.rows() == want.rows && got.cols() == want.cols ? 0.0 : INFINITY;
    if (std::isfinite(worst))
      for (std::size_t i = 0; i < want.v.size(); ++i) worst = std::fmax(worst, rel_error(got.data()[i], want.v[i]));
    record(op, worst);
  }

  void compare(const std::string& op, const Vector& got, const reference::Line& want) {
    double worst = got.size() == want.size() ? 0.0 : INFINITY;
    if (std::isfinite(worst))
      for (std::size_t i = 0; i < want.size(); ++i) worst = std::fmax(worst, rel_error(got[i], want[i]));
    record(op, worst);
  }

  OracleReport finish(std::size_t instances) {
    OracleReport rep;
    rep.ops = std::move(ops_);
    rep.instances = instances;
    rep.tolerance = tol_;
    return rep;
  }

 private:
  void record(const std::string& op, double err) {
    auto it = std::find_if(ops_.begin(), ops_.end(), [&](const OpReport& r) { return r.op == op; });
    if (it == ops_.end()) {
      ops_.push_back({op});
      it = ops_.end() - 1;
    }
    ++it->checks;
    if (!(err <= tol_)) ++it->failures;
    it->max_rel_error = std::fmax(it->max_rel_error, err);
  }

  double tol_;
  std::vector<OpReport> ops_;
};

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

inline Matrix nonnegative(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& x : m.data()) x = static_cast<float>(rng.uniform());
  return m;
}

}  // namespace detail

/// Runs every state_core/numerics/decoder kernel against the scalar
/// reference on `instances` seeded random problems with dims in [1, 8]
/// (decoder layers in [1, 3]).
inline OracleReport run_oracle_suite(std::size_t instances = 1000, std::uint64_t seed = 20240601,
                                     double tol = 1e-5) {
  namespace ref = reference;
  using G = ref::Grid;
  detail::OracleRecorder rec(tol);

  for (std::size_t inst = 0; inst < instances; ++inst) {
    Rng rng(derive_seed(seed, {inst}));
    const std::size_t n = detail::pick(rng, 1, 8), k = detail::pick(rng, 1, 8), c = detail::pick(rng, 1, 8);
    const std::size_t layers = detail::pick(rng, 1, 3);

    const Matrix a = rng.gaussian_matrix(n, c), b = rng.gaussian_matrix(c, k);
    rec.compare("matmul", matmul(a, b), ref::matmul(G(a), G(b)));

    const double spread = (inst % 4 == 0) ? 100.0 : 3.0;
    const Matrix logits = rng.gaussian_matrix(n, k, spread);
    rec.compare("row_softmax", row_softmax(logits), ref::softmax_rows(G(logits)));
    rec.compare("rowwise_l2", rowwise_l2(a), ref::l2_rows(G(a)));

    const Matrix a2 = rng.gaussian_matrix(n, c);
    rec.compare("rowwise_cosine", rowwise_cosine(a, a2), ref::cosine_rows(G(a), G(a2)));

    Vector sv(k);
    for (auto& x : sv) x = static_cast<float>(rng.gaussian() * 8.0);
    rec.compare("sigmoid", sigmoid(sv), ref::sigmoid(ref::line(sv)));

    const Matrix m = rng.gaussian_matrix(n, k);
    rec.compare("col_broadcast_mul", col_broadcast_mul(m, sv), ref::scale_columns(G(m), ref::line(sv)));
    rec.compare("rowwise_max", rowwise_max(m), ref::max_rows(G(m)));

    GateConfig cfg;
    cfg.tau = static_cast<float>(0.25 + 2.0 * rng.uniform());
    cfg.spat_gain = static_cast<float>(0.5 + 2.0 * rng.uniform());
    cfg.spat_bias = static_cast<float>(rng.gaussian());
    cfg.attn_source = (inst % 2) ? AttentionSource::pre_softmax_abs : AttentionSource::post_softmax;

    CandidateState curr{rng.gaussian_matrix(n, c)};
    CandidateState prev{inst % 10 == 0 ? curr.tokens : rng.gaussian_matrix(n, c)};
    rec.compare("temporal_mask", temporal_mask(curr, prev, cfg).values,
                ref::temporal_mask(G(curr.tokens), G(prev.tokens), cfg.tau, cfg.eps_mean));

    FrameTokens f1{rng.gaussian_matrix(k, c)}, f0{rng.gaussian_matrix(k, c)};
    rec.compare("feature_divergence", feature_divergence(f1, f0), ref::divergence(G(f1.tokens), G(f0.tokens)));

    AttentionTrace trace;
    std::vector<G> post, pre;
    for (std::size_t l = 0; l < layers; ++l) {
      trace.weights.push_back(detail::nonnegative(rng, n, k));
      trace.logits.push_back(rng.gaussian_matrix(n, k));
      post.emplace_back(trace.weights.back());
      pre.emplace_back(trace.logits.back());
    }
    const Matrix agg = aggregate_attention(trace, cfg.attn_source);
    const G agg_ref = ref::mean_abs_layers(cfg.attn_source == AttentionSource::post_softmax ? post : pre);
    rec.compare("aggregate_attention", agg, agg_ref);

    const Vector div = feature_divergence(f1, f0);
    const UpdateMask sm = spatial_mask(agg, div, cfg);
    rec.compare("spatial_mask", sm.values, ref::spatial_mask(G(agg), ref::line(div), cfg.spat_gain, cfg.spat_bias));

    const UpdateMask tm = temporal_mask(curr, prev, cfg);
    rec.compare("fuse_masks", fuse_masks(tm, sm).values, ref::fuse(ref::line(tm.values), ref::line(sm.values)));

    PersistentState ps{rng.gaussian_matrix(n, c)};
    Vector mv(n);
    for (auto& x : mv) x = static_cast<float>(rng.uniform());
    rec.compare("apply_update", apply_update(curr, ps, {mv, MaskKind::fused}).tokens,
                ref::interpolate(G(curr.tokens), G(ps.tokens), ref::line(mv)));

    rec.compare("uniform_mask", uniform_mask(n).values, ref::Line(n, 1.0));

    // Full gate composition for a random strategy after frame 1.
    const Strategy strat = kAllStrategies[inst % 4];
    GateResult gr = gate_step(curr, &prev, ps, f1, &f0, trace, cfg, strat);
    ref::Line want_mask;
    const ref::Line rt = ref::temporal_mask(G(curr.tokens), G(prev.tokens), cfg.tau, cfg.eps_mean);
    const ref::Line rs = ref::spatial_mask(agg_ref, ref::divergence(G(f1.tokens), G(f0.tokens)), cfg.spat_gain,
                                           cfg.spat_bias);
    switch (strat) {
      case Strategy::uniform: want_mask = ref::Line(n, 1.0); break;
      case Strategy::temporal_only: want_mask = rt; break;
      case Strategy::spatial_only: want_mask = rs; break;
      case Strategy::fused: want_mask = ref::fuse(rt, rs); break;
    }
    rec.compare("gate_step.mask", gr.mask.values, want_mask);
    rec.compare("gate_step.state", gr.state.tokens, ref::interpolate(G(curr.tokens), G(ps.tokens), want_mask));

    // Decoder with explicit random weights and a random presence pattern.
    DecoderWeights w;
    ref::DecoderParams rp;
    const double ws = 1.0 / std::sqrt(double(c));
    for (std::size_t l = 0; l < layers; ++l) {
      w.query.push_back(rng.gaussian_matrix(c, c, ws));
      w.key.push_back(rng.gaussian_matrix(c, c, ws));
      w.value.push_back(rng.gaussian_matrix(c, c, ws));
      rp.q.emplace_back(w.query.back());
      rp.k.emplace_back(w.key.back());
      rp.v.emplace_back(w.value.back());
    }
    w.encoder = rng.gaussian_matrix(c, c, ws);
    w.readout = Matrix::identity(c);
    w.state_positions = rng.gaussian_matrix(n, c);
    w.frame_positions = rng.gaussian_matrix(k, c);
    w.use_sink = rp.use_sink = inst % 3 != 0;
    w.sink_logit = static_cast<float>(rng.gaussian());
    rp.sink_logit = w.sink_logit;
    w.write_rule = inst % 5 == 0 ? WriteRule::additive : WriteRule::convex;
    rp.convex = w.write_rule == WriteRule::convex;
    rp.frame_positions = G(w.frame_positions);
    std::vector<std::uint8_t> present;
    if (inst % 2 == 0) {
      present.resize(k);
      for (auto& p : present) p = rng.uniform() < 0.7 ? 1 : 0;
    }
    const Matrix state = rng.gaussian_matrix(n, c);
    DecodeOutput dec = decode_step(f1, PersistentState{state}, w, present);
    ref::DecodeResult want = ref::decode(G(f1.tokens), G(state), rp, present);
    rec.compare("decode_step.candidate", dec.candidate.tokens, want.candidate);
    for (std::size_t l = 0; l < layers; ++l) {
      rec.compare("decode_step.attention", dec.trace.weights[l], want.attention[l]);
      rec.compare("decode_step.logits", dec.trace.logits[l], want.logits[l]);
    }
  }
  return rec.finish(instances);
}

}  // namespace stategate
