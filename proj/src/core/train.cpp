// SPDX-License-Identifier: Apache-2.0

#include "core/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace csr {

void TrainConfig::validate() const {
    CSR_REQUIRE(num_atoms >= 1 && num_atoms <= kMaxAtoms, ErrorCode::ConfigError,
                "num_atoms must be in [1, 65535]");
    CSR_REQUIRE(s_train >= 1, ErrorCode::ConfigError, "s_train must be positive");
    CSR_REQUIRE(s_n >= 1, ErrorCode::ConfigError, "s_n must be positive");
    CSR_REQUIRE(epochs >= 0, ErrorCode::ConfigError, "epochs must be >= 0");
    CSR_REQUIRE(batch_size >= 1, ErrorCode::ConfigError, "batch_size must be positive");
    CSR_REQUIRE(learning_rate > 0, ErrorCode::ConfigError, "learning_rate must be positive");
    CSR_REQUIRE(beta_cap >= 0, ErrorCode::ConfigError, "beta_cap must be >= 0");
    CSR_REQUIRE(beta_scale >= 0, ErrorCode::ConfigError, "beta_scale must be >= 0");
    CSR_REQUIRE(kmeans_iters >= 1, ErrorCode::ConfigError, "kmeans_iters must be positive");
}

json TrainConfig::to_json() const {
    return json{{"num_atoms", num_atoms},
                {"s_train", s_train},
                {"s_n", s_n},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"beta_cap", beta_cap},
                {"beta_scale", beta_scale},
                {"seed", seed},
                {"kmeans_iters", kmeans_iters}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    check_keys(j, "train config",
               {"num_atoms", "s_train", "s_n", "epochs", "batch_size", "learning_rate",
                "beta_cap", "beta_scale", "seed", "kmeans_iters"});
    TrainConfig c;
    c.num_atoms = json_get_or(j, "num_atoms", c.num_atoms, "train config");
    c.s_train = json_get_or(j, "s_train", c.s_train, "train config");
    c.s_n = json_get_or(j, "s_n", c.s_n, "train config");
    c.epochs = json_get_or(j, "epochs", c.epochs, "train config");
    c.batch_size = json_get_or(j, "batch_size", c.batch_size, "train config");
    c.learning_rate = json_get_or(j, "learning_rate", c.learning_rate, "train config");
    c.beta_cap = json_get_or(j, "beta_cap", c.beta_cap, "train config");
    c.beta_scale = json_get_or(j, "beta_scale", c.beta_scale, "train config");
    c.seed = json_get_or(j, "seed", c.seed, "train config");
    c.kmeans_iters = json_get_or(j, "kmeans_iters", c.kmeans_iters, "train config");
    c.validate();
    return c;
}

json TrainReport::to_json() const {
    return json{{"init_train_mse", init_train_mse},
                {"init_val_mse", init_val_mse},
                {"train_mse", train_mse},
                {"val_mse", val_mse},
                {"div_loss", div_loss},
                {"beta", beta},
                {"epoch_seconds", epoch_seconds},
                {"converged", converged}};
}

Eigen::MatrixXd kmeans_init(const Eigen::MatrixXd& X, int N, uint64_t seed, int iters) {
    CSR_REQUIRE(X.rows() >= 1, ErrorCode::InvalidArgument, "kmeans_init: empty sample matrix");
    CSR_REQUIRE(N >= 1, ErrorCode::InvalidArgument, "kmeans_init: N must be positive");
    CSR_REQUIRE(iters >= 1, ErrorCode::InvalidArgument, "kmeans_init: iters must be positive");

    const int64_t n = X.rows();
    const int d = int(X.cols());
    Rng rng(mix_seed(seed, 0x6b6d65616e73ull));

    Eigen::MatrixXd C(d, N);
    Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());

    int chosen = 0;
    auto add_center = [&](int64_t row) {
        C.col(chosen) = X.row(row).transpose();
        for (int64_t i = 0; i < n; ++i) {
            double dist = (X.row(i).transpose() - C.col(chosen)).squaredNorm();
            if (dist < d2[i]) d2[i] = dist;
        }
        ++chosen;
    };

    add_center(rng.uniform_int(n));
    while (chosen < N) {
        double total = d2.sum();
        if (!(total > 0.0)) break; // every row coincides with a chosen center
        double t = rng.uniform() * total;
        int64_t pick = n - 1;
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (t < acc) {
                pick = i;
                break;
            }
        }
        add_center(pick);
    }
    // not enough distinct rows: pad with random unit directions
    for (; chosen < N;) {
        C.col(chosen) = rng.unit_vector(d);
        ++chosen;
    }

    std::vector<int> assign(size_t(n), 0);
    for (int it = 0; it < iters; ++it) {
        for (int64_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = (X.row(i).transpose() - C.col(0)).squaredNorm();
            for (int k = 1; k < N; ++k) {
                double dist = (X.row(i).transpose() - C.col(k)).squaredNorm();
                if (dist < best_d) {
                    best_d = dist;
                    best = k;
                }
            }
            assign[size_t(i)] = best;
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(d, N);
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(N);
        for (int64_t i = 0; i < n; ++i) {
            sums.col(assign[size_t(i)]) += X.row(i).transpose();
            counts[assign[size_t(i)]] += 1.0;
        }
        for (int k = 0; k < N; ++k) {
            if (counts[k] > 0) C.col(k) = sums.col(k) / counts[k]; // empty clusters keep theirs
        }
    }

    renorm(C, rng);
    return C;
}

int renorm(Eigen::MatrixXd& W, Rng& rng) {
    int refreshed = 0;
    for (Eigen::Index c = 0; c < W.cols(); ++c) {
        double n = W.col(c).norm();
        if (n < 1e-12) {
            W.col(c) = rng.unit_vector(int(W.rows()));
            ++refreshed;
        } else {
            W.col(c) /= n;
        }
    }
    return refreshed;
}

MseLossResult loss_mse(const Eigen::MatrixXd& W, const Eigen::MatrixXd& batch, int s) {
    CSR_REQUIRE(batch.cols() == W.rows(), ErrorCode::DimensionMismatch,
                "batch width does not match dictionary dimension");
    MseLossResult out;
    out.codes.reserve(size_t(batch.rows()));
    for (Eigen::Index i = 0; i < batch.rows(); ++i) {
        ChunkEncodeResult code = mp_encode_chunk(batch.row(i).transpose().eval(), W, s);
        out.sum += code.residual.squaredNorm();
        out.codes.push_back(std::move(code));
    }
    return out;
}

double mean_mse(const Eigen::MatrixXd& W, const Eigen::MatrixXd& X, int s) {
    if (X.rows() == 0) return 0.0;
    return loss_mse(W, X, s).sum / double(X.rows());
}

double loss_div(const Eigen::MatrixXd& W) {
    const double N = double(W.cols());
    Eigen::MatrixXd G = W.transpose() * W;
    G.diagonal().array() -= 1.0;
    return G.squaredNorm() / (N * N);
}

double adaptive_beta(double last_mse, double last_div, double beta_scale, double beta_cap) {
    return std::min(beta_scale * last_mse / std::max(last_div, 1e-12), beta_cap);
}

Eigen::MatrixXd mse_gradient(const MseLossResult& loss, int chunk_dim, int num_atoms) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(chunk_dim, num_atoms);
    for (const ChunkEncodeResult& code : loss.codes) {
        for (const MpEntry& e : code.entries) {
            g.col(e.index) -= 2.0 * e.coeff * code.residual;
        }
    }
    return g;
}

Eigen::MatrixXd div_gradient(const Eigen::MatrixXd& W) {
    const double N = double(W.cols());
    Eigen::MatrixXd G = W.transpose() * W;
    G.diagonal().array() -= 1.0;
    return (4.0 / (N * N)) * (W * G);
}

void grad_step(TrainState& state, const Eigen::MatrixXd& batch, const TrainConfig& cfg, Rng& rng) {
    CSR_REQUIRE(batch.rows() >= 1, ErrorCode::InvalidArgument, "grad_step: empty batch");

    MseLossResult mse = loss_mse(state.W, batch, cfg.s_train);
    double div = loss_div(state.W);

    Eigen::MatrixXd grad = mse_gradient(mse, int(state.W.rows()), int(state.W.cols()));
    grad.noalias() += state.beta * div_gradient(state.W);
    CSR_REQUIRE(grad.allFinite(), ErrorCode::NonFinite,
                "non-finite gradient at step " + std::to_string(state.step) +
                    " (mse=" + std::to_string(mse.sum) + ", div=" + std::to_string(div) + ")");

    state.W -= cfg.learning_rate * grad;
    state.beta = adaptive_beta(mse.sum, div, cfg.beta_scale, cfg.beta_cap);
    renorm(state.W, rng);

    state.last_mse = mse.sum;
    state.last_div = div;
    ++state.step;
}

TrainResult train_neural_dict(const Eigen::MatrixXd& X, const TrainConfig& cfg,
                              const Eigen::MatrixXd& validation) {
    cfg.validate();
    CSR_REQUIRE(X.rows() >= 1, ErrorCode::InvalidArgument, "training data is empty");
    CSR_REQUIRE(validation.rows() == 0 || validation.cols() == X.cols(),
                ErrorCode::DimensionMismatch, "validation width differs from training width");

    TrainResult out;
    out.W = kmeans_init(X, cfg.num_atoms, mix_seed(cfg.seed, 1), cfg.kmeans_iters);
    out.report.init_train_mse = mean_mse(out.W, X, cfg.s_train);
    out.report.init_val_mse = mean_mse(out.W, validation, cfg.s_train);

    if (cfg.epochs == 0) return out;

    TrainState state;
    state.W = out.W;
    Rng shuffle_rng(mix_seed(cfg.seed, 2));
    Rng refresh_rng(mix_seed(cfg.seed, 3));

    const int64_t n = X.rows();
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        for (int64_t i = n - 1; i > 0; --i) {
            std::swap(order[size_t(i)], order[size_t(shuffle_rng.uniform_int(i + 1))]);
        }

        double epoch_sum = 0.0;
        for (int64_t at = 0; at < n; at += cfg.batch_size) {
            int64_t len = std::min<int64_t>(cfg.batch_size, n - at);
            Eigen::MatrixXd batch(len, X.cols());
            for (int64_t r = 0; r < len; ++r) batch.row(r) = X.row(order[size_t(at + r)]);

            if (state.step == 0) {
                // the first batch has no previous losses; seed beta from its own
                state.beta = adaptive_beta(loss_mse(state.W, batch, cfg.s_train).sum,
                                           loss_div(state.W), cfg.beta_scale, cfg.beta_cap);
            }
            grad_step(state, batch, cfg, refresh_rng);
            epoch_sum += state.last_mse;
        }
        state.epoch = epoch + 1;

        out.report.train_mse.push_back(epoch_sum / double(n));
        out.report.val_mse.push_back(mean_mse(state.W, validation, cfg.s_train));
        out.report.div_loss.push_back(loss_div(state.W));
        out.report.beta.push_back(state.beta);
        auto t1 = std::chrono::steady_clock::now();
        out.report.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    }

    const auto& tm = out.report.train_mse;
    if (tm.size() >= 2) {
        double prev = tm[tm.size() - 2];
        double cur = tm.back();
        out.report.converged = std::abs(prev - cur) <= 1e-3 * std::max(prev, 1e-12);
    }

    out.W = state.W;
    return out;
}

} // namespace csr
