#include <gtest/gtest.h>

#include <cmath>

#include "stategate/random.hpp"
#include "stategate/reference.hpp"
#include "stategate/toy_decoder.hpp"

using namespace stategate;
namespace ref = stategate::reference;

namespace {

DecoderConfig small_config() {
  DecoderConfig c;
  c.state_tokens = 4;
  c.frame_tokens = 4;
  c.channels = 12;
  c.obs_channels = 4;
  c.layers = 2;
  c.position_scale = 6.0f;
  return c;
}

// N=1, K=2, C=2, identity projections, zero positions.
DecoderWeights hand_weights(bool sink, WriteRule rule) {
  DecoderWeights w;
  w.query = {Matrix::identity(2)};
  w.key = {Matrix::identity(2)};
  w.value = {Matrix::identity(2)};
  w.encoder = Matrix::identity(2);
  w.readout = Matrix::identity(2);
  w.state_positions = Matrix(1, 2);
  w.frame_positions = Matrix(2, 2);
  w.use_sink = sink;
  w.sink_logit = 0.0f;
  w.write_rule = rule;
  return w;
}

}  // namespace

TEST(EncodeFrame, ZeroObservationGivesZeroTokens) {
  DecoderWeights w = make_decoder_weights(small_config());
  EXPECT_EQ(encode_frame(Matrix(4, 4), w).tokens, Matrix(4, 12));
}

TEST(EncodeFrame, DeterministicAndLinear) {
  DecoderWeights w = make_decoder_weights(small_config());
  Rng rng(1);
  Matrix obs = rng.gaussian_matrix(4, 4);
  FrameTokens a = encode_frame(obs, w), b = encode_frame(obs, w);
  EXPECT_EQ(a.tokens, b.tokens);
  FrameTokens doubled = encode_frame(scale(obs, 2.0f), w);
  for (std::size_t i = 0; i < a.tokens.size(); ++i)
    EXPECT_NEAR(doubled.tokens.data()[i], 2.0f * a.tokens.data()[i], 1e-5);
}

TEST(EncodeFrame, ShapeMismatchThrows) {
  DecoderWeights w = make_decoder_weights(small_config());
  EXPECT_THROW(encode_frame(Matrix(4, 5), w), ConfigError);
}

TEST(DecodeStep, SingleKeyWithoutSinkGivesUnitAttention) {
  DecoderConfig c = small_config();
  c.frame_tokens = 1;
  c.use_sink = false;
  DecoderWeights w = make_decoder_weights(c);
  Rng rng(2);
  DecodeOutput out = decode_step(FrameTokens{rng.gaussian_matrix(1, 12)}, PersistentState{rng.gaussian_matrix(4, 12)}, w);
  for (const auto& layer : out.trace.weights)
    for (std::size_t i = 0; i < layer.rows(); ++i) EXPECT_EQ(layer(i, 0), 1.0f);
}

TEST(DecodeStep, AttentionRowsSumToOneIncludingSink) {
  DecoderWeights w = make_decoder_weights(small_config());
  Rng rng(3);
  DecodeOutput out = decode_step(FrameTokens{rng.gaussian_matrix(4, 12)}, PersistentState{rng.gaussian_matrix(4, 12)}, w);
  ASSERT_EQ(out.trace.layer_count(), 2u);
  ASSERT_EQ(out.layer_features.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    const Matrix& a = out.trace.weights[l];
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double sum = out.sink_mass[l][i];
      for (float v : a.row(i)) {
        EXPECT_GE(v, 0.0f);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-5);
    }
  }
}

TEST(DecodeStep, RowsSumToOneWithoutSink) {
  DecoderConfig c = small_config();
  c.use_sink = false;
  DecoderWeights w = make_decoder_weights(c);
  Rng rng(4);
  DecodeOutput out = decode_step(FrameTokens{rng.gaussian_matrix(4, 12)}, PersistentState{rng.gaussian_matrix(4, 12)}, w);
  for (const auto& a : out.trace.weights)
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double sum = 0.0;
      for (float v : a.row(i)) sum += v;
      EXPECT_NEAR(sum, 1.0, 1e-5);
    }
}

TEST(DecodeStep, HandComputedSingleTokenConvex) {
  DecodeOutput out = decode_step(FrameTokens{Matrix{{1, 0}, {0, 1}}}, PersistentState{Matrix{{1, 0}}},
                                 hand_weights(false, WriteRule::convex));
  EXPECT_NEAR(out.trace.weights[0](0, 0), 0.6697615493, 1e-6);
  EXPECT_NEAR(out.trace.weights[0](0, 1), 0.3302384507, 1e-6);
  EXPECT_NEAR(out.trace.logits[0](0, 0), 0.7071067812, 1e-6);
  EXPECT_NEAR(out.candidate.tokens(0, 0), 0.6697615493, 1e-6);
  EXPECT_NEAR(out.candidate.tokens(0, 1), 0.3302384507, 1e-6);
}

TEST(DecodeStep, HandComputedSingleTokenAdditive) {
  DecodeOutput out = decode_step(FrameTokens{Matrix{{1, 0}, {0, 1}}}, PersistentState{Matrix{{1, 0}}},
                                 hand_weights(false, WriteRule::additive));
  EXPECT_NEAR(out.candidate.tokens(0, 0), 1.6697615493, 1e-6);
  EXPECT_NEAR(out.candidate.tokens(0, 1), 0.3302384507, 1e-6);
}

TEST(DecodeStep, HandComputedSingleTokenWithSink) {
  DecodeOutput out = decode_step(FrameTokens{Matrix{{1, 0}, {0, 1}}}, PersistentState{Matrix{{1, 0}}},
                                 hand_weights(true, WriteRule::convex));
  EXPECT_NEAR(out.sink_mass[0][0], 0.2482550783, 1e-6);
  EXPECT_NEAR(out.trace.weights[0](0, 0), 0.5034898435, 1e-6);
  EXPECT_NEAR(out.candidate.tokens(0, 0), 0.7517449217, 1e-6);
  EXPECT_NEAR(out.candidate.tokens(0, 1), 0.2482550783, 1e-6);
}

TEST(DecodeStep, AbsentSlotsGetNoAttention) {
  DecoderWeights w = make_decoder_weights(small_config());
  Rng rng(5);
  const std::vector<std::uint8_t> present{1, 0, 1, 0};
  DecodeOutput out = decode_step(FrameTokens{rng.gaussian_matrix(4, 12)}, PersistentState{rng.gaussian_matrix(4, 12)}, w, present);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(out.trace.weights[l](i, 1), 0.0f);
      EXPECT_EQ(out.trace.weights[l](i, 3), 0.0f);
      EXPECT_EQ(out.trace.logits[l](i, 1), 0.0f);
    }
}

TEST(DecodeStep, NothingPresentKeepsState) {
  DecoderWeights w = make_decoder_weights(small_config());
  Rng rng(6);
  Matrix s = rng.gaussian_matrix(4, 12);
  DecodeOutput out = decode_step(FrameTokens{rng.gaussian_matrix(4, 12)}, PersistentState{s}, w, {0, 0, 0, 0});
  EXPECT_EQ(out.candidate.tokens, s);
}

TEST(DecodeStep, ShapeMismatchThrows) {
  DecoderWeights w = make_decoder_weights(small_config());
  EXPECT_THROW(decode_step(FrameTokens{Matrix(4, 11)}, PersistentState{Matrix(4, 12)}, w), ConfigError);
  EXPECT_THROW(decode_step(FrameTokens{Matrix(3, 12)}, PersistentState{Matrix(4, 12)}, w), ConfigError);
  EXPECT_THROW(decode_step(FrameTokens{Matrix(4, 12)}, PersistentState{Matrix(5, 12)}, w), ConfigError);
  EXPECT_THROW(decode_step(FrameTokens{Matrix(4, 12)}, PersistentState{Matrix(4, 12)}, w, {1, 1}), ConfigError);
}

TEST(DecodeStep, CandidateShapeMatchesState) {
  DecoderWeights w = make_decoder_weights(DecoderConfig{});
  PersistentState s = w.initial_state();
  Rng rng(7);
  for (int t = 0; t < 5; ++t) {
    DecodeOutput out = decode_step(encode_frame(rng.gaussian_matrix(16, 16), w), s, w);
    ASSERT_TRUE(out.candidate.tokens.same_shape(s.tokens));
    s = PersistentState{out.candidate.tokens};
  }
}

TEST(DecodeStep, SmallInstancesMatchScalarReference) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(derive_seed(31, {seed}));
    const std::size_t n = 1 + rng.below(3), k = 1 + rng.below(3), c = 1 + rng.below(3), layers = 1 + rng.below(3);
    DecoderWeights w;
    ref::DecoderParams p;
    for (std::size_t l = 0; l < layers; ++l) {
      w.query.push_back(rng.gaussian_matrix(c, c, 1.0 / std::sqrt(double(c))));
      w.key.push_back(rng.gaussian_matrix(c, c, 1.0 / std::sqrt(double(c))));
      w.value.push_back(rng.gaussian_matrix(c, c, 1.0 / std::sqrt(double(c))));
      p.q.emplace_back(w.query.back());
      p.k.emplace_back(w.key.back());
      p.v.emplace_back(w.value.back());
    }
    w.encoder = Matrix::identity(c);
    w.readout = Matrix::identity(c);
    w.state_positions = Matrix(n, c);
    w.frame_positions = rng.gaussian_matrix(k, c);
    p.frame_positions = ref::Grid(w.frame_positions);
    w.use_sink = p.use_sink = seed % 2 == 0;
    w.sink_logit = static_cast<float>(p.sink_logit = 0.5);
    w.write_rule = seed % 3 == 0 ? WriteRule::additive : WriteRule::convex;
    p.convex = w.write_rule == WriteRule::convex;

    Matrix frame = rng.gaussian_matrix(k, c), state = rng.gaussian_matrix(n, c);
    DecodeOutput got = decode_step(FrameTokens{frame}, PersistentState{state}, w);
    ref::DecodeResult want = ref::decode(ref::Grid(frame), ref::Grid(state), p, {});
    for (std::size_t i = 0; i < want.candidate.v.size(); ++i)
      EXPECT_NEAR(got.candidate.tokens.data()[i], want.candidate.v[i], 1e-5 * std::fmax(1.0, std::fabs(want.candidate.v[i])));
  }
}

TEST(Readout, IdentityZeroAndDeterminism) {
  DecoderWeights w = hand_weights(false, WriteRule::convex);
  Matrix s{{1.5f, -2.0f}};
  EXPECT_EQ(readout(CandidateState{s}, w), s);
  EXPECT_EQ(readout(CandidateState{Matrix(1, 2)}, w), Matrix(1, 2));
  DecoderWeights seeded = make_decoder_weights(DecoderConfig{});
  Rng rng(8);
  Matrix t = rng.gaussian_matrix(16, 32);
  EXPECT_EQ(readout(t, seeded), readout(t, make_decoder_weights(DecoderConfig{})));
  EXPECT_THROW(readout(Matrix(2, 3), w), ConfigError);
}

TEST(DecoderWeights, SameSeedSameWeights) {
  DecoderWeights a = make_decoder_weights(DecoderConfig{}), b = make_decoder_weights(DecoderConfig{});
  EXPECT_EQ(a.encoder, b.encoder);
  EXPECT_EQ(a.state_positions, b.state_positions);
  DecoderConfig other;
  other.seed = 8;
  EXPECT_NE(make_decoder_weights(other).encoder, a.encoder);
}

TEST(DecoderWeights, PositionsAreInvisibleToReadout) {
  DecoderWeights w = make_decoder_weights(DecoderConfig{});
  Matrix r = readout(w.state_positions, w);
  for (float x : r.data()) EXPECT_NEAR(x, 0.0f, 1e-4);
  // And the readout is identity on the encoder range.
  Rng rng(9);
  Matrix content = matmul(rng.gaussian_matrix(3, 16), w.encoder);
  Matrix back = readout(content, w);
  for (std::size_t i = 0; i < content.size(); ++i) EXPECT_NEAR(back.data()[i], content.data()[i], 1e-4);
}

TEST(DecoderWeights, JitterPerturbsTiedProjections) {
  DecoderConfig c;
  c.projection_jitter = 0.1f;
  DecoderWeights w = make_decoder_weights(c);
  EXPECT_NE(w.query[0], Matrix::identity(32));
  EXPECT_EQ(w.query[0], w.key[0]);
  EXPECT_EQ(make_decoder_weights(DecoderConfig{}).query[0], Matrix::identity(32));
}

TEST(DecoderConfig, RejectsBadSizes) {
  DecoderConfig c;
  c.layers = 0;
  EXPECT_THROW(make_decoder_weights(c), ConfigError);
  c = DecoderConfig{};
  c.obs_channels = 64;
  EXPECT_THROW(make_decoder_weights(c), ConfigError);
}
