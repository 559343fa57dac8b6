#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "streamprobe/loss.hpp"

namespace streamprobe {

struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> std;  // population std, floored at kMinStd
};

inline constexpr double kMinStd = 1e-6;

// Per-dimension mean and std over every token of every exchange.
NormalizationStats compute_normalization(std::span<const LabeledExchange> exchanges);

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double wall_seconds = 0.0;
};

struct TrainingResult {
    ProbeParameters probe;
    std::vector<EpochRecord> log;
};

// Minibatch Adam on the mean sequence loss. Deterministic for a given seed:
// the seed drives the per-epoch shuffle, and minibatch gradients are summed in
// exchange order. Throws DataError on an empty or single-class dataset and
// DimensionError when exchanges disagree on their layer map.
TrainingResult train_probe(std::span<const LabeledExchange> exchanges, const TrainingConfig& cfg);

// "epoch<TAB>mean_loss<TAB>wall_seconds" lines.
void write_training_log(const std::filesystem::path& path, std::span<const EpochRecord> log);

}  // namespace streamprobe
