// SPDX-License-Identifier: Apache-2.0
//
// Offline dictionary learning: k-means initialization, then gradient descent
// on reconstruction MSE plus an adaptive diversity penalty, with the sparse
// codes recomputed by matching pursuit every batch and held fixed while
// differentiating. Training math runs in double throughout; the learned
// atoms are narrowed to f32 when they become a Dictionary.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "core/json_util.hpp"
#include "core/mp.hpp"
#include "core/rng.hpp"

namespace csr {

struct TrainConfig {
    int num_atoms = 256;
    int s_train = 8;
    int s_n = 1;
    int epochs = 20;
    int batch_size = 256;
    double learning_rate = 0.01;
    double beta_cap = 1.0;
    double beta_scale = 0.1;
    uint64_t seed = 0;
    int kmeans_iters = 25;

    void validate() const;
    json to_json() const;
    static TrainConfig from_json(const json& j);
};

struct TrainState {
    Eigen::MatrixXd W; // chunk_dim x num_atoms, unit columns after every step
    double beta = 0.0;
    double last_mse = 0.0;
    double last_div = 0.0;
    int64_t epoch = 0;
    int64_t step = 0;
};

struct TrainReport {
    double init_train_mse = 0.0; // mean per sample at the k-means init
    double init_val_mse = 0.0;
    std::vector<double> train_mse; // per epoch, mean per sample
    std::vector<double> val_mse;
    std::vector<double> div_loss;
    std::vector<double> beta;
    std::vector<double> epoch_seconds;
    bool converged = false;

    json to_json() const;
};

// k-means++ seeding, `iters` Lloyd iterations, centroids as columns, then
// renorm. When N exceeds the number of distinct rows the leftover columns are
// random unit vectors.
Eigen::MatrixXd kmeans_init(const Eigen::MatrixXd& X, int N, uint64_t seed, int iters);

// Scales every column to unit norm; (numerically) zero columns are replaced
// with fresh random unit directions. Returns how many were replaced.
int renorm(Eigen::MatrixXd& W, Rng& rng);

struct MseLossResult {
    double sum = 0.0; // summed over the batch
    std::vector<ChunkEncodeResult> codes;
};

// MP-encodes every row of batch against W at sparsity s and accumulates the
// squared residuals. Codes (with residuals) are returned for gradient reuse.
MseLossResult loss_mse(const Eigen::MatrixXd& W, const Eigen::MatrixXd& batch, int s);

double mean_mse(const Eigen::MatrixXd& W, const Eigen::MatrixXd& X, int s);

// (1/N^2) * ||I - W^T W||_F^2
double loss_div(const Eigen::MatrixXd& W);

double adaptive_beta(double last_mse, double last_div, double beta_scale = 0.1,
                     double beta_cap = 1.0);

// -2 * sum_i residual_i * r_i^T, codes fixed
Eigen::MatrixXd mse_gradient(const MseLossResult& loss, int chunk_dim, int num_atoms);

// (4/N^2) * W (W^T W - I)
Eigen::MatrixXd div_gradient(const Eigen::MatrixXd& W);

// One descent step on L = L_mse + beta * L_div at the incoming state's beta,
// then beta is refreshed from this batch's detached losses and the columns
// are renormalized.
void grad_step(TrainState& state, const Eigen::MatrixXd& batch, const TrainConfig& cfg, Rng& rng);

struct TrainResult {
    Eigen::MatrixXd W;
    TrainReport report;
};

// X and validation carry chunk_dim-wide rows; validation may be empty.
TrainResult train_neural_dict(const Eigen::MatrixXd& X, const TrainConfig& cfg,
                              const Eigen::MatrixXd& validation);

} // namespace csr
