#pragma once

#include <string>
#include <vector>

#include "vand/random.hpp"
#include "vand/tensor.hpp"

namespace vand {

/// One demonstration: time-indexed observation/label pairs.
struct Trajectory {
    std::string id;
    Tensor x; // [T x |X|]
    Tensor y; // [T x |Y|]

    int steps() const { return x.ndim() == 2 ? x.dim(0) : 0; }
    int x_dim() const { return x.ndim() == 2 ? x.dim(1) : 0; }
    int y_dim() const { return y.ndim() == 2 ? y.dim(1) : 0; }
};

using Dataset = std::vector<Trajectory>;

/// Per-dimension standardization statistics, fit on training data only.
struct NormStats {
    Tensor x_mean, x_std; // [|X|]
    Tensor y_mean, y_std; // [|Y|]
};

/// UTF-8, one JSON object per line: {"id": ..., "x": [[...]...], "y": [[...]...]}.
Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& dataset);

/// Mean/std per dimension over all (n, t); std floored at 1e-8.
NormStats fit_norm(const Dataset& dataset);

Tensor apply_norm(const Tensor& rows, const Tensor& mean, const Tensor& std);
Tensor invert_norm(const Tensor& rows, const Tensor& mean, const Tensor& std);
Trajectory normalize_trajectory(const Trajectory& traj, const NormStats& stats);
Dataset normalize_dataset(const Dataset& dataset, const NormStats& stats);

/// Start-offset augmentation: start step s drawn uniformly from {1..10}
/// (1-based), view covers steps s..s+T-11 so every view has length T-10.
Trajectory augment_offset(const Trajectory& traj, RandomStream& rng);

/// Time-major minibatch of augmented trajectories.
struct Batch {
    Tensor x; // [T' x B x |X|]
    Tensor y; // [T' x B x |Y|]
    int steps = 0;
    int batch = 0;
};

/// B trajectories sampled with replacement, each independently offset, stacked
/// time-major. When lengths differ the batch is truncated to the shortest view.
Batch make_batch(const Dataset& dataset, int batch_size, RandomStream& rng);
std::vector<Batch> make_batches(const Dataset& dataset, int batch_size, int count,
                                RandomStream& rng);

} // namespace vand
