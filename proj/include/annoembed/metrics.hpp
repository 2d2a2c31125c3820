#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "annoembed/corpus.hpp"

namespace annoembed {

// Rows are gold labels, columns predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t n_labels = 0) : m_(n_labels), counts_(n_labels * n_labels, 0) {}

    void add(std::size_t gold, std::size_t predicted);
    std::size_t at(std::size_t gold, std::size_t predicted) const { return counts_[gold * m_ + predicted]; }
    std::size_t labels() const { return m_; }
    std::size_t total() const;
    std::size_t correct() const;

    double em_accuracy() const;
    // 2TP / (2TP + FP + FN); a class that never occurs as gold or prediction scores 0.
    double f1(std::size_t label) const;
    // Unweighted mean of f1 over all M classes.
    double macro_f1() const;

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t m_;
    std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion_from(std::span<const std::size_t> gold, std::span<const std::size_t> predicted,
                               std::size_t n_labels);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation, 0 for a single value
};
MeanStd mean_std(std::span<const double> values);

constexpr std::size_t kRandomBaselineResamples = 10;

struct Baselines {
    double random_em = 0.0;
    double random_stddev = 0.0;
    double majority_em = 0.0;
    std::size_t majority_label = 0;
};

// Label with the highest count; ties go to the lowest index.
std::size_t majority_label(std::span<const std::size_t> label_counts);

// Accuracy of always predicting the reference majority label on `eval`.
double majority_baseline(std::span<const std::size_t> reference_label_counts, const Dataset& eval);

// Accuracy of uniform label draws, averaged over `resamples` seeded draws.
MeanStd random_baseline(const Dataset& eval, std::uint64_t seed, std::size_t resamples = kRandomBaselineResamples);

// Majority taken from `d` itself.
Baselines baselines(const Dataset& d, std::uint64_t seed);
// Majority taken from `train`, scored on `test`.
Baselines baselines(const Dataset& train, const Dataset& test, std::uint64_t seed);

}  // namespace annoembed
