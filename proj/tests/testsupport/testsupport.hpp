#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sv/layers.hpp"
#include "sv/rng.hpp"

namespace ts {

// Minimal PCM16 mono WAV writer for fixtures.
void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate = 16000);

// Names of the synthesizable command words, in class-id order.
const std::vector<std::string>& command_words();

// Formant-synthesized utterance of the given command class: impulse-train or
// noise excitation through two resonators, with per-utterance pitch, formant
// and timing jitter driven by the seed. Always shorter than 1 s.
std::vector<double> synth_command(std::size_t class_id, std::uint64_t seed,
                                  int sample_rate = 16000);

struct CorpusSpec {
  std::size_t n_classes = 5;
  std::size_t clips_per_class = 40;
  double test_fraction = 0.2;
  std::uint64_t seed = 7;
};

// Writes <dir>/<word>/<word>_<i>.wav for every class plus manifest.tsv with a
// "# classes:" header; the last test_fraction of each class is the test split.
// Returns the manifest path.
std::filesystem::path build_corpus(const std::filesystem::path& dir, const CorpusSpec& spec);

// Fills every parameter with small uniform values in [-scale, scale].
void randomize_params(std::vector<sv::nn::Param*> params, sv::Rng& rng, double scale = 0.1);

// Central finite differences on up to samples_per_param coordinates of each
// parameter: returns the max relative error between numeric and analytic
// gradients. grad_fn must zero and repopulate the grads; loss_fn must be a
// pure function of the current parameter values.
double max_grad_rel_err(std::vector<sv::nn::Param*> params,
                        const std::function<double()>& loss_fn,
                        const std::function<void()>& grad_fn, std::size_t samples_per_param,
                        sv::Rng& rng, double step = 1e-4);

}  // namespace ts
