// SPDX-License-Identifier: Apache-2.0
//
// Layer similarity analysis: per-layer 2-D distributions of the normalized
// cache space (PCA to the plane, 200x200 histogram), Jensen-Shannon
// divergences between them, and grouping of adjacent layers under a
// per-pair threshold and a chain-sum budget.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "core/capture.hpp"
#include "core/json_util.hpp"

namespace csr {

constexpr int kHistogramBins = 200;

struct NormalizeResult {
    Eigen::MatrixXf rows; // unit-norm rows, zero rows removed
    int64_t dropped = 0;
};

NormalizeResult normalize_rows(const Eigen::MatrixXf& X);

struct Pca2 {
    Eigen::VectorXd mean;
    Eigen::MatrixXd directions; // dim x 2, orthonormal, descending eigenvalue
    Eigen::Vector2d eigenvalues;
};

// Deterministic 2-component PCA: symmetric eigendecomposition of the sample
// covariance, eigenvalue order descending, each direction's sign fixed so its
// largest-magnitude entry is positive.
Pca2 pca2_fit(const Eigen::MatrixXf& X);

Eigen::MatrixXd pca2_project(const Pca2& pca, const Eigen::MatrixXf& X);

struct Bounds2 {
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
};

// Smallest box holding every point of both sets, expanded by 1% total.
Bounds2 shared_bounds(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Normalized counts over bins x bins cells. Points on the upper edge land in
// the last bin; points outside the box clamp to the edge bins.
Eigen::MatrixXd histogram2d(const Eigen::MatrixXd& points, const Bounds2& bounds,
                            int bins = kHistogramBins);

// Jensen-Shannon divergence, log base 2 so the range is [0, 1].
double jsd(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q);

enum class HeadAggregation { Pooled, PerHeadMean };

double layer_pair_jsd(const CaptureDataset& dataset, int layer_a, int layer_b,
                      HeadAggregation agg, int64_t sample_cap, uint64_t seed);

struct MergePlan {
    std::vector<std::vector<int>> groups; // contiguous ascending runs covering all layers
    double delta1 = 0.20;
    double delta2 = 1.0;
    CaptureKind kind = CaptureKind::Key;

    int num_layers() const;
    int group_of(int layer) const; // throws IndexOutOfRange when absent
    void validate_structure(int expect_layers) const;

    json to_json() const;
    static MergePlan from_json(const json& j);
};

MergePlan build_merge_plan(const CaptureDataset& dataset, double delta1, double delta2,
                           HeadAggregation agg, int64_t sample_cap, uint64_t seed);

// Re-evaluates both grouping constraints on an existing plan.
void validate_plan(const MergePlan& plan, const CaptureDataset& dataset, HeadAggregation agg,
                   int64_t sample_cap, uint64_t seed);

} // namespace csr
