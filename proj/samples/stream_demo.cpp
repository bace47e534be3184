// Streams one synthetic scene through the toy decoder under each update
// strategy and prints the retention error every 50 frames.

#include <cstdio>

#include "stategate/evaluation.hpp"

int main() {
  using namespace stategate;

  ExperimentSpec spec;
  const DecoderWeights weights = make_decoder_weights(spec.decoder);

  std::printf("%-9s", "frame");
  for (Strategy s : kAllStrategies) std::printf("%12s", std::string(to_string(s)).c_str());
  std::printf("\n");

  std::vector<SessionResult> results;
  for (Strategy s : kAllStrategies) results.push_back(run_session(spec, weights, s, 300, /*seed=*/1));

  for (std::size_t t = 50; t <= 300; t += 50) {
    std::printf("%-9zu", t);
    for (const auto& r : results) std::printf("%12.4f", r.per_frame_error[t - 1]);
    std::printf("\n");
  }
  return 0;
}
