#include "annoembed/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace annoembed {

namespace {

constexpr std::size_t kMinTextLen = 5;
constexpr std::size_t kMaxTextLen = 10;
constexpr double kSignalRate = 0.8;

const std::vector<std::string> kRegions = {"north", "south", "east", "west"};

std::string padded(char prefix, std::size_t i, int width) {
    std::string digits = std::to_string(i);
    if (digits.size() < static_cast<std::size_t>(width)) digits.insert(0, width - digits.size(), '0');
    return std::string(1, prefix) + digits;
}

Array2 random_stochastic(std::size_t m, Rng& rng) {
    Array2 p(m, m);
    for (std::size_t r = 0; r < m; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            double u = rng.uniform01();
            while (u <= 0.0) u = rng.uniform01();
            p(r, c) = -std::log(u);
            total += p(r, c);
        }
        for (std::size_t c = 0; c < m; ++c) p(r, c) /= total;
    }
    return p;
}

std::size_t sample_row(std::span<const double> row, Rng& rng) {
    const double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
        acc += row[c];
        if (u < acc) return c;
    }
    // Rounding left u above the last partial sum; take the last non-zero entry.
    for (std::size_t c = row.size(); c-- > 0;)
        if (row[c] > 0.0) return c;
    return 0;
}

std::vector<std::size_t> make_text(std::size_t base, const PopulationConfig& cfg, Rng& rng) {
    const std::size_t m = cfg.n_labels;
    const std::size_t per_class_min = cfg.vocab_size / m;
    for (;;) {
        const std::size_t len = kMinTextLen + rng.uniform_index(kMaxTextLen - kMinTextLen + 1);
        std::vector<std::size_t> tokens(len);
        std::vector<std::size_t> votes(m, 0);
        for (auto& tok : tokens) {
            if (rng.bernoulli(kSignalRate)) {
                // Tokens of class `base` are base, base + M, base + 2M, ... below vocab_size.
                const std::size_t count = per_class_min + (base < cfg.vocab_size % m ? 1 : 0);
                tok = base + m * rng.uniform_index(count);
            } else {
                tok = rng.uniform_index(cfg.vocab_size);
            }
            ++votes[tok % m];
        }
        const std::size_t top = votes[base];
        bool plurality = true;
        for (std::size_t c = 0; c < m; ++c)
            if (c != base && votes[c] >= top) plurality = false;
        if (plurality) return tokens;
    }
}

}  // namespace

void validate(const PopulationConfig& cfg) {
    if (cfg.n_labels < 2) throw std::invalid_argument("synthgen: need at least 2 labels");
    if (cfg.vocab_size < cfg.n_labels)
        throw std::invalid_argument("synthgen: vocab_size must be at least n_labels to carry class signals");
    if (cfg.n_annotators == 0 || cfg.n_texts == 0) throw std::invalid_argument("synthgen: empty population");
    if (cfg.groups > cfg.n_annotators) throw std::invalid_argument("synthgen: more groups than annotators");
    if (!(cfg.bias_strength >= 0.0 && cfg.bias_strength <= 1.0))
        throw std::invalid_argument("synthgen: bias_strength must be in [0, 1]");
    if (cfg.annotations_per_text == 0 || cfg.annotations_per_text > cfg.n_annotators)
        throw std::invalid_argument("synthgen: annotations_per_text must be in [1, n_annotators]");
}

Population generate_population(const PopulationConfig& cfg) {
    validate(cfg);
    Rng rng(derive_seed(cfg.seed, 0));
    const std::size_t count = cfg.groups > 0 ? cfg.groups : cfg.n_annotators;
    std::vector<Array2> mixing;
    mixing.reserve(count);
    for (std::size_t i = 0; i < count; ++i) mixing.push_back(random_stochastic(cfg.n_labels, rng));
    return generate_population(cfg, mixing);
}

Population generate_population(const PopulationConfig& cfg, const std::vector<Array2>& mixing) {
    validate(cfg);
    const std::size_t m = cfg.n_labels;
    const std::size_t n = cfg.n_annotators;
    const std::size_t expected = cfg.groups > 0 ? cfg.groups : n;
    if (mixing.size() != expected)
        throw std::invalid_argument("synthgen: expected " + std::to_string(expected) + " mixing matrices");

    GroundTruth truth;
    truth.group.resize(n);
    truth.bias.reserve(n);
    for (std::size_t a = 0; a < n; ++a) {
        truth.group[a] = cfg.groups > 0 ? a % cfg.groups : a;
        const Array2& p = mixing[truth.group[a]];
        if (p.rows != m || p.cols != m) throw std::invalid_argument("synthgen: mixing matrix must be MxM");
        Array2 b(m, m);
        for (std::size_t r = 0; r < m; ++r) {
            double row_sum = 0.0;
            for (std::size_t c = 0; c < m; ++c) {
                b(r, c) = cfg.bias_strength * p(r, c) + (r == c ? 1.0 - cfg.bias_strength : 0.0);
                row_sum += p(r, c);
            }
            if (std::abs(row_sum - 1.0) > 1e-9) throw std::invalid_argument("synthgen: mixing row does not sum to 1");
        }
        truth.bias.push_back(std::move(b));
    }

    Rng text_rng(derive_seed(cfg.seed, 1));
    Rng assign_rng(derive_seed(cfg.seed, 2));
    Rng label_rng(derive_seed(cfg.seed, 3));
    Rng demo_rng(derive_seed(cfg.seed, 4));

    std::vector<std::map<std::string, std::string>> demographics(n);
    if (cfg.demographics) {
        for (std::size_t a = 0; a < n; ++a) {
            // Cohort tracks the group most of the time; region is unrelated noise.
            const std::size_t cohort = demo_rng.bernoulli(0.8) ? truth.group[a] % std::max<std::size_t>(cfg.groups, 1)
                                                               : demo_rng.uniform_index(std::max<std::size_t>(cfg.groups, 1));
            demographics[a]["cohort"] = "c" + std::to_string(cohort);
            demographics[a]["region"] = kRegions[demo_rng.uniform_index(kRegions.size())];
        }
    }

    std::vector<AnnotatedExample> examples;
    examples.reserve(cfg.n_texts * cfg.annotations_per_text);
    truth.base_labels.reserve(cfg.n_texts);
    std::vector<std::size_t> annotators(n);
    for (std::size_t t = 0; t < cfg.n_texts; ++t) {
        const std::size_t base = text_rng.uniform_index(m);
        truth.base_labels.push_back(base);
        const auto tokens = make_text(base, cfg, text_rng);
        std::string text;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i) text += ' ';
            text += "w" + std::to_string(tokens[i]);
        }

        std::iota(annotators.begin(), annotators.end(), 0);
        std::vector<std::size_t> chosen;
        if (cfg.annotations_per_text == n) {
            chosen = annotators;
        } else {
            for (std::size_t i = 0; i < cfg.annotations_per_text; ++i) {
                const std::size_t j = i + assign_rng.uniform_index(n - i);
                std::swap(annotators[i], annotators[j]);
            }
            chosen.assign(annotators.begin(), annotators.begin() + static_cast<std::ptrdiff_t>(cfg.annotations_per_text));
            std::sort(chosen.begin(), chosen.end());
        }
        for (std::size_t a : chosen) {
            AnnotatedExample ex;
            ex.example_id = padded('t', t, 4);
            ex.text = text;
            ex.annotator_id = padded('a', a, 3);
            ex.label = sample_row(truth.bias[a].row(base), label_rng);
            ex.demographics = demographics[a];
            examples.push_back(std::move(ex));
        }
    }

    std::vector<std::string> label_names;
    for (std::size_t l = 0; l < m; ++l) label_names.push_back("L" + std::to_string(l));
    return {Dataset("synthetic", std::move(label_names), std::move(examples)), std::move(truth)};
}

std::string ground_truth_json(const PopulationConfig& cfg, const Population& pop) {
    using nlohmann::ordered_json;
    auto matrix = [](const Array2& a) {
        ordered_json rows = ordered_json::array();
        for (std::size_t r = 0; r < a.rows; ++r)
            rows.push_back(std::vector<double>(a.row(r).begin(), a.row(r).end()));
        return rows;
    };
    ordered_json j;
    j["config"] = {{"n_annotators", cfg.n_annotators}, {"n_texts", cfg.n_texts},
                   {"n_labels", cfg.n_labels},         {"vocab_size", cfg.vocab_size},
                   {"groups", cfg.groups},             {"bias_strength", cfg.bias_strength},
                   {"annotations_per_text", cfg.annotations_per_text},
                   {"seed", cfg.seed},                 {"demographics", cfg.demographics}};
    ordered_json base = ordered_json::object();
    for (std::size_t t = 0; t < pop.truth.base_labels.size(); ++t)
        base[padded('t', t, 4)] = pop.truth.base_labels[t];
    j["base_labels"] = base;
    ordered_json annotators = ordered_json::array();
    for (std::size_t a = 0; a < pop.truth.bias.size(); ++a)
        annotators.push_back({{"annotator_id", padded('a', a, 3)}, {"group", pop.truth.group[a]},
                              {"bias", matrix(pop.truth.bias[a])}});
    j["annotators"] = annotators;
    if (cfg.groups > 0) {
        ordered_json groups = ordered_json::array();
        for (std::size_t g = 0; g < cfg.groups; ++g)
            groups.push_back({{"group", g}, {"bias", matrix(pop.truth.bias[g])}});
        j["groups"] = groups;
    }
    return j.dump(2) + "\n";
}

}  // namespace annoembed
