#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "annoembed/corpus.hpp"
#include "annoembed/tensor.hpp"

namespace annoembed {

struct PopulationConfig {
    std::size_t n_annotators = 12;
    std::size_t n_texts = 400;
    std::size_t n_labels = 3;
    std::size_t vocab_size = 30;
    // 0 = every annotator has an independent bias matrix.
    std::size_t groups = 0;
    double bias_strength = 0.4;
    std::size_t annotations_per_text = 12;
    std::uint64_t seed = 0;
    bool demographics = true;
};

// Throws std::invalid_argument when the config cannot be generated.
void validate(const PopulationConfig& cfg);

struct GroundTruth {
    // Base label per text, text order.
    std::vector<std::size_t> base_labels;
    // Row-stochastic MxM label-emission matrix per annotator.
    std::vector<Array2> bias;
    // Group per annotator; equals the annotator index in idiosyncratic mode.
    std::vector<std::size_t> group;
};

struct Population {
    Dataset dataset;
    GroundTruth truth;
};

// Texts are sequences of tokens "w<k>"; token k signals class k mod M and the
// base label is the strict plurality class of the text. Each annotator's
// label is drawn from row `base` of their bias matrix
//   B = (1 - s) I + s P,  s = bias_strength,
// with P a random row-stochastic matrix (rows uniform on the simplex), one
// per group or one per annotator. Group g holds annotators {a : a mod G = g}.
//
// Independent streams from the seed: derive_seed(seed, 0) mixing matrices,
// 1 texts, 2 annotator assignment, 3 labels, 4 demographics.
Population generate_population(const PopulationConfig& cfg);

// Same, with caller-supplied mixing matrices P (one per group, or one per
// annotator when groups == 0).
Population generate_population(const PopulationConfig& cfg, const std::vector<Array2>& mixing);

// Sidecar written next to the corpus: config, base labels, bias matrices.
std::string ground_truth_json(const PopulationConfig& cfg, const Population& pop);

}  // namespace annoembed
