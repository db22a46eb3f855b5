// Quickstart: load a model, run exact SSA and the two-time-scale scheme side by
// side, and print species means plus the CLR sensitivity to every parameter.
//
//   quickstart models/isomerization.json [t_final] [replicates]

#include <cstdio>
#include <string>

#include "stiffnet/stiffnet.hpp"

using namespace stiffnet;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s model.json [t_final] [replicates]\n", argv[0]);
    return 2;
  }
  try {
    const NetworkFile nf = load_network(argv[1]);
    if (!nf.initial) throw ValidationError("model has no initial state");
    const ReactionNetwork& net = nf.network;
    const double t = argc > 2 ? std::stod(argv[2]) : 0.5;
    const std::size_t n = argc > 3 ? std::stoul(argv[3]) : 500;
    const auto obs = species_observables(net);

    EnsembleOptions eo;
    eo.replicates = n;
    eo.seed = 2024;
    const EnsembleResult sts = run_ensemble(net, *nf.initial, t, obs, eo);

    TtsEnsembleOptions to;
    to.replicates = n;
    to.seed = 2025;
    const TtsEnsembleResult tts = run_tts_ensemble(net, *nf.initial, t, obs, to);

    const ColumnStats a = column_stats(sts.final().terminal);
    const ColumnStats b = column_stats(tts.snapshots.back().terminal);
    std::printf("epsilon %g, t = %g, %zu replicates\n", net.epsilon(), t, n);
    std::printf("%-8s %12s %8s %12s %8s\n", "species", "SSA mean", "se", "TTS mean", "se");
    for (std::size_t j = 0; j < obs.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      std::printf("%-8s %12.4f %8.4f %12.4f %8.4f\n", obs[j].name().c_str(), a.mean[jj], a.se[jj], b.mean[jj],
                  b.se[jj]);
    }
    std::printf("\nCLR d E[X(t)] / d theta (SSA | TTS)\n");
    for (std::size_t j = 0; j < obs.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const EstimatorOutput s = clr(sts.final().terminal.col(jj), sts.final().weights);
      const EstimatorOutput m = tts_sensitivity(tts.snapshots.back(), j, EstimatorMethod::CLR);
      std::printf("%-8s", obs[j].name().c_str());
      for (std::size_t p = 0; p < net.num_params(); ++p) {
        const auto pp = static_cast<Eigen::Index>(p);
        std::printf("  %s %8.3f | %8.3f", net.params().names[p].c_str(), s.estimate[pp], m.estimate[pp]);
      }
      std::printf("\n");
    }
    std::printf("\nTTS: %zu macro steps, %zu micro jumps\n", tts.macro_steps, tts.micro_jumps);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "quickstart: %s\n", e.what());
    return 1;
  }
  return 0;
}
