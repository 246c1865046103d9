// SPDX-License-Identifier: Apache-2.0
//
// Shared test utilities: a scratch-directory guard and reference
// implementations kept deliberately naive so they cannot share bugs with the
// library code they check.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "core/error.hpp"

namespace testutil {

class TmpDir {
  public:
    TmpDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "csrtestXXXXXX").string();
        std::vector<char> buf(tmpl.begin(), tmpl.end());
        buf.push_back('\0');
        if (::mkdtemp(buf.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
        path_ = buf.data();
    }
    ~TmpDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TmpDir(const TmpDir&) = delete;
    TmpDir& operator=(const TmpDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

  private:
    std::filesystem::path path_;
};

struct NaiveMpStep {
    int index = 0;
    double abs_corr = 0.0; // |correlation| at selection time
};

struct NaiveMpResult {
    std::vector<NaiveMpStep> steps;               // one per iteration, in order
    std::vector<std::pair<int, double>> entries;  // accumulated per atom, selection order
    std::vector<double> x_hat;                    // running reconstruction
    double residual_norm = 0.0;
};

// Plain-loop matching pursuit over std::vector storage. The residual is
// recomputed from scratch every iteration instead of being updated in place.
inline NaiveMpResult naive_mp(const std::vector<double>& x,
                              const std::vector<std::vector<double>>& atoms, int s) {
    const size_t dim = x.size();
    NaiveMpResult out;
    out.x_hat.assign(dim, 0.0);

    for (int it = 0; it < s; ++it) {
        std::vector<double> residual(dim);
        for (size_t d = 0; d < dim; ++d) residual[d] = x[d] - out.x_hat[d];

        int best = -1;
        double best_abs = 0.0, best_corr = 0.0;
        for (size_t n = 0; n < atoms.size(); ++n) {
            double corr = 0.0;
            for (size_t d = 0; d < dim; ++d) corr += residual[d] * atoms[n][d];
            if (std::fabs(corr) > best_abs) {
                best_abs = std::fabs(corr);
                best_corr = corr;
                best = int(n);
            }
        }
        if (best < 0 || best_abs == 0.0) break;

        out.steps.push_back({best, best_abs});
        bool found = false;
        for (auto& e : out.entries) {
            if (e.first == best) {
                e.second += best_corr;
                found = true;
                break;
            }
        }
        if (!found) out.entries.emplace_back(best, best_corr);
        for (size_t d = 0; d < dim; ++d) out.x_hat[d] += best_corr * atoms[best][d];
    }

    double norm2 = 0.0;
    for (size_t d = 0; d < dim; ++d) {
        double r = x[d] - out.x_hat[d];
        norm2 += r * r;
    }
    out.residual_norm = std::sqrt(norm2);
    return out;
}

// Central finite difference of f over every entry of W.
template <typename F>
Eigen::MatrixXd finite_difference(const Eigen::MatrixXd& W, F f, double h = 1e-5) {
    Eigen::MatrixXd g(W.rows(), W.cols());
    Eigen::MatrixXd probe = W;
    for (Eigen::Index c = 0; c < W.cols(); ++c) {
        for (Eigen::Index r = 0; r < W.rows(); ++r) {
            double keep = probe(r, c);
            probe(r, c) = keep + h;
            double up = f(probe);
            probe(r, c) = keep - h;
            double down = f(probe);
            probe(r, c) = keep;
            g(r, c) = (up - down) / (2.0 * h);
        }
    }
    return g;
}

inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double denom = std::max(1.0, b.norm());
    return (a - b).norm() / denom;
}

// Deterministic orthonormal basis: QR of a seeded Gaussian matrix, with
// column signs fixed so the factorization is unique.
inline Eigen::MatrixXf random_orthonormal(int dim, uint64_t seed) {
    Eigen::MatrixXd g(dim, dim);
    uint64_t state = seed * 6364136223846793005ull + 1442695040888963407ull;
    for (Eigen::Index c = 0; c < dim; ++c) {
        for (Eigen::Index r = 0; r < dim; ++r) {
            state = state * 6364136223846793005ull + 1442695040888963407ull;
            // two halves of the state give a crude but adequate uniform pair
            double u1 = double((state >> 11) & ((1ull << 26) - 1)) / double(1ull << 26);
            state = state * 6364136223846793005ull + 1442695040888963407ull;
            double u2 = double((state >> 11) & ((1ull << 26) - 1)) / double(1ull << 26);
            g(r, c) = std::sqrt(-2.0 * std::log(std::max(u1, 1e-12))) *
                      std::cos(2.0 * M_PI * u2);
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
    for (Eigen::Index c = 0; c < dim; ++c) {
        if (q(0, c) < 0) q.col(c) = -q.col(c);
    }
    return q.cast<float>();
}

} // namespace testutil

// Asserts that expr throws csr::Error with the given code. Relies on the
// including test file having pulled in doctest.h first.
#define CHECK_CSR_ERROR(expr, expected_code)              \
    do {                                                  \
        try {                                             \
            (void)(expr);                                 \
            FAIL("expected csr::Error from " #expr);      \
        } catch (const ::csr::Error& e_) {                \
            CHECK(e_.code() == (expected_code));          \
        }                                                 \
    } while (0)
