#include "annoembed/metrics.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "annoembed/rng.hpp"

namespace annoembed {

void ConfusionMatrix::add(std::size_t gold, std::size_t predicted) {
    if (gold >= m_ || predicted >= m_) throw std::out_of_range("confusion matrix: label out of range");
    ++counts_[gold * m_ + predicted];
}

std::size_t ConfusionMatrix::total() const {
    return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::correct() const {
    std::size_t c = 0;
    for (std::size_t i = 0; i < m_; ++i) c += at(i, i);
    return c;
}

double ConfusionMatrix::em_accuracy() const {
    const std::size_t n = total();
    return n ? static_cast<double>(correct()) / static_cast<double>(n) : 0.0;
}

double ConfusionMatrix::f1(std::size_t label) const {
    const std::size_t tp = at(label, label);
    std::size_t fp = 0, fn = 0;
    for (std::size_t j = 0; j < m_; ++j) {
        if (j == label) continue;
        fp += at(j, label);
        fn += at(label, j);
    }
    const std::size_t denom = 2 * tp + fp + fn;
    return denom ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
}

double ConfusionMatrix::macro_f1() const {
    if (m_ == 0) return 0.0;
    double s = 0.0;
    for (std::size_t c = 0; c < m_; ++c) s += f1(c);
    return s / static_cast<double>(m_);
}

ConfusionMatrix confusion_from(std::span<const std::size_t> gold, std::span<const std::size_t> predicted,
                               std::size_t n_labels) {
    if (gold.size() != predicted.size()) throw std::invalid_argument("confusion: length mismatch");
    ConfusionMatrix cm(n_labels);
    for (std::size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], predicted[i]);
    return cm;
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd r;
    if (values.empty()) return r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return r;
}

std::size_t majority_label(std::span<const std::size_t> label_counts) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < label_counts.size(); ++i)
        if (label_counts[i] > label_counts[best]) best = i;
    return best;
}

double majority_baseline(std::span<const std::size_t> reference_label_counts, const Dataset& eval) {
    if (eval.empty()) return 0.0;
    const std::size_t label = majority_label(reference_label_counts);
    std::size_t hits = 0;
    for (const auto& ex : eval.examples()) hits += ex.label == label;
    return static_cast<double>(hits) / static_cast<double>(eval.size());
}

MeanStd random_baseline(const Dataset& eval, std::uint64_t seed, std::size_t resamples) {
    std::vector<double> runs;
    if (eval.empty()) return {};
    for (std::size_t r = 0; r < resamples; ++r) {
        Rng rng(derive_seed(seed, r));
        std::size_t hits = 0;
        for (const auto& ex : eval.examples()) hits += rng.uniform_index(eval.label_count()) == ex.label;
        runs.push_back(static_cast<double>(hits) / static_cast<double>(eval.size()));
    }
    return mean_std(runs);
}

namespace {
std::vector<std::size_t> label_counts(const Dataset& d) {
    std::vector<std::size_t> counts(d.label_count(), 0);
    for (const auto& ex : d.examples()) ++counts[ex.label];
    return counts;
}
}  // namespace

Baselines baselines(const Dataset& d, std::uint64_t seed) {
    return baselines(d, d, seed);
}

Baselines baselines(const Dataset& train, const Dataset& test, std::uint64_t seed) {
    const auto counts = label_counts(train);
    Baselines b;
    const MeanStd random = random_baseline(test, seed);
    b.random_em = random.mean;
    b.random_stddev = random.stddev;
    b.majority_label = majority_label(counts);
    b.majority_em = majority_baseline(counts, test);
    return b;
}

}  // namespace annoembed
