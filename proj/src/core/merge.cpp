// SPDX-License-Identifier: Apache-2.0

#include "core/merge.hpp"

#include <cmath>
#include <map>

#include "core/rng.hpp"

namespace csr {

NormalizeResult normalize_rows(const Eigen::MatrixXf& X) {
    NormalizeResult out;
    out.rows.resize(X.rows(), X.cols());
    Eigen::Index kept = 0;
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        double n = X.row(r).cast<double>().norm();
        if (n <= 1e-12) {
            ++out.dropped;
            continue;
        }
        out.rows.row(kept++) = (X.row(r).cast<double>() / n).cast<float>();
    }
    out.rows.conservativeResize(kept, X.cols());
    return out;
}

Pca2 pca2_fit(const Eigen::MatrixXf& X) {
    CSR_REQUIRE(X.rows() >= 3, ErrorCode::InvalidArgument, "pca needs at least 3 rows");
    CSR_REQUIRE(X.cols() >= 2, ErrorCode::InvalidArgument, "pca needs at least 2 columns");

    Eigen::MatrixXd Xd = X.cast<double>();
    Pca2 out;
    out.mean = Xd.colwise().mean();
    Eigen::MatrixXd centered = Xd.rowwise() - out.mean.transpose();
    Eigen::MatrixXd cov =
        centered.transpose() * centered / double(Xd.rows() - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    CSR_REQUIRE(eig.info() == Eigen::Success, ErrorCode::Internal, "eigendecomposition failed");

    const Eigen::Index d = cov.rows();
    double top = eig.eigenvalues()[d - 1];
    CSR_REQUIRE(top > 1e-14, ErrorCode::DegenerateData,
                "degenerate covariance: all rows are (numerically) equal");

    out.directions.resize(d, 2);
    out.directions.col(0) = eig.eigenvectors().col(d - 1);
    out.directions.col(1) = eig.eigenvectors().col(d - 2);
    out.eigenvalues = Eigen::Vector2d(eig.eigenvalues()[d - 1], eig.eigenvalues()[d - 2]);

    for (int c = 0; c < 2; ++c) {
        Eigen::Index imax = 0;
        out.directions.col(c).cwiseAbs().maxCoeff(&imax);
        if (out.directions(imax, c) < 0) out.directions.col(c) = -out.directions.col(c);
    }
    return out;
}

Eigen::MatrixXd pca2_project(const Pca2& pca, const Eigen::MatrixXf& X) {
    CSR_REQUIRE(X.cols() == pca.directions.rows(), ErrorCode::DimensionMismatch,
                "projection input width does not match pca basis");
    Eigen::MatrixXd centered = X.cast<double>().rowwise() - pca.mean.transpose();
    return centered * pca.directions;
}

namespace {

void expand(double& lo, double& hi) {
    double range = hi - lo;
    if (range <= 1e-12) {
        lo -= 0.5;
        hi += 0.5;
        return;
    }
    lo -= 0.005 * range;
    hi += 0.005 * range;
}

} // namespace

Bounds2 shared_bounds(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    CSR_REQUIRE(a.rows() > 0 && b.rows() > 0, ErrorCode::InvalidArgument,
                "bounds need at least one point per set");
    Bounds2 out;
    out.xmin = std::min(a.col(0).minCoeff(), b.col(0).minCoeff());
    out.xmax = std::max(a.col(0).maxCoeff(), b.col(0).maxCoeff());
    out.ymin = std::min(a.col(1).minCoeff(), b.col(1).minCoeff());
    out.ymax = std::max(a.col(1).maxCoeff(), b.col(1).maxCoeff());
    expand(out.xmin, out.xmax);
    expand(out.ymin, out.ymax);
    return out;
}

Eigen::MatrixXd histogram2d(const Eigen::MatrixXd& points, const Bounds2& bounds, int bins) {
    CSR_REQUIRE(points.rows() >= 1, ErrorCode::InvalidArgument, "histogram needs points");
    CSR_REQUIRE(points.cols() == 2, ErrorCode::DimensionMismatch, "points must be n x 2");
    CSR_REQUIRE(bins >= 1, ErrorCode::InvalidArgument, "bins must be positive");
    CSR_REQUIRE(bounds.xmax > bounds.xmin && bounds.ymax > bounds.ymin,
                ErrorCode::InvalidArgument, "bounds must be non-degenerate");

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(bins, bins);
    double sx = double(bins) / (bounds.xmax - bounds.xmin);
    double sy = double(bins) / (bounds.ymax - bounds.ymin);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        int bx = int(std::floor((points(i, 0) - bounds.xmin) * sx));
        int by = int(std::floor((points(i, 1) - bounds.ymin) * sy));
        bx = std::clamp(bx, 0, bins - 1);
        by = std::clamp(by, 0, bins - 1);
        h(bx, by) += 1.0;
    }
    return h / double(points.rows());
}

double jsd(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q) {
    CSR_REQUIRE(P.rows() == Q.rows() && P.cols() == Q.cols(), ErrorCode::DimensionMismatch,
                "histogram shapes differ");
    CSR_REQUIRE(std::abs(P.sum() - 1.0) <= 1e-6 && std::abs(Q.sum() - 1.0) <= 1e-6,
                ErrorCode::InvalidArgument, "histograms must sum to 1");

    double acc = 0.0;
    for (Eigen::Index i = 0; i < P.size(); ++i) {
        double p = P(i);
        double q = Q(i);
        double m = 0.5 * (p + q);
        if (p > 0) acc += 0.5 * p * std::log2(p / m);
        if (q > 0) acc += 0.5 * q * std::log2(q / m);
    }
    return std::clamp(acc, 0.0, 1.0);
}

namespace {

// All heads of one layer, normalized, subsampled to sample_cap. The sample is
// a deterministic function of (seed, layer) only, so comparing a layer with
// itself sees the identical point set.
Eigen::MatrixXf gather_layer(const CaptureDataset& dataset, int layer, int head_or_all,
                             int64_t sample_cap, uint64_t seed) {
    int64_t total = 0;
    std::vector<const CaptureBlock*> parts;
    int h0 = head_or_all < 0 ? 0 : head_or_all;
    int h1 = head_or_all < 0 ? dataset.header.num_heads : head_or_all + 1;
    for (int h = h0; h < h1; ++h) {
        const CaptureBlock& b = dataset.block(layer, h);
        parts.push_back(&b);
        total += b.vectors.rows();
    }
    Eigen::MatrixXf all(total, dataset.header.head_dim);
    int64_t at = 0;
    for (const CaptureBlock* b : parts) {
        all.middleRows(at, b->vectors.rows()) = b->vectors;
        at += b->vectors.rows();
    }

    Eigen::MatrixXf unit = normalize_rows(all).rows;
    if (sample_cap <= 0 || unit.rows() <= sample_cap) return unit;

    Rng rng(mix_seed(seed, 0x6c70646aull, uint64_t(layer), uint64_t(head_or_all + 1)));
    std::vector<int64_t> keep = rng.sample_without_replacement(unit.rows(), sample_cap);
    Eigen::MatrixXf out(sample_cap, unit.cols());
    for (int64_t i = 0; i < sample_cap; ++i) out.row(i) = unit.row(keep[size_t(i)]);
    return out;
}

double pair_jsd_on(const Eigen::MatrixXf& A, const Eigen::MatrixXf& B) {
    Eigen::MatrixXf both(A.rows() + B.rows(), A.cols());
    both.topRows(A.rows()) = A;
    both.bottomRows(B.rows()) = B;

    Pca2 pca = pca2_fit(both);
    Eigen::MatrixXd pa = pca2_project(pca, A);
    Eigen::MatrixXd pb = pca2_project(pca, B);
    Bounds2 bounds = shared_bounds(pa, pb);
    return jsd(histogram2d(pa, bounds), histogram2d(pb, bounds));
}

} // namespace

double layer_pair_jsd(const CaptureDataset& dataset, int layer_a, int layer_b,
                      HeadAggregation agg, int64_t sample_cap, uint64_t seed) {
    CSR_REQUIRE(layer_a >= 0 && layer_a < dataset.header.num_layers && layer_b >= 0 &&
                    layer_b < dataset.header.num_layers,
                ErrorCode::IndexOutOfRange, "layer index outside header range");

    if (agg == HeadAggregation::Pooled) {
        return pair_jsd_on(gather_layer(dataset, layer_a, -1, sample_cap, seed),
                           gather_layer(dataset, layer_b, -1, sample_cap, seed));
    }
    double acc = 0.0;
    for (int h = 0; h < dataset.header.num_heads; ++h) {
        acc += pair_jsd_on(gather_layer(dataset, layer_a, h, sample_cap, seed),
                           gather_layer(dataset, layer_b, h, sample_cap, seed));
    }
    return acc / double(dataset.header.num_heads);
}

int MergePlan::num_layers() const {
    int n = 0;
    for (const auto& g : groups) n += int(g.size());
    return n;
}

int MergePlan::group_of(int layer) const {
    for (size_t i = 0; i < groups.size(); ++i) {
        for (int l : groups[i]) {
            if (l == layer) return int(i);
        }
    }
    throw Error(ErrorCode::IndexOutOfRange,
                "layer " + std::to_string(layer) + " is not in the merge plan");
}

void MergePlan::validate_structure(int expect_layers) const {
    CSR_REQUIRE(delta1 >= 0 && delta2 >= 0, ErrorCode::FormatError,
                "merge thresholds must be non-negative");
    int next = 0;
    for (const auto& g : groups) {
        CSR_REQUIRE(!g.empty(), ErrorCode::FormatError, "merge plan holds an empty group");
        for (int l : g) {
            CSR_REQUIRE(l == next, ErrorCode::FormatError,
                        "merge plan groups must be contiguous ascending runs covering all layers");
            ++next;
        }
    }
    CSR_REQUIRE(next == expect_layers, ErrorCode::FormatError,
                "merge plan covers " + std::to_string(next) + " layers, expected " +
                    std::to_string(expect_layers));
}

json MergePlan::to_json() const {
    return json{
        {"kind", kind_name(kind)}, {"delta1", delta1}, {"delta2", delta2}, {"groups", groups}};
}

MergePlan MergePlan::from_json(const json& j) {
    check_keys(j, "merge plan", {"kind", "delta1", "delta2", "groups"});
    MergePlan plan;
    plan.kind = parse_kind(json_get<std::string>(j, "kind", "merge plan"));
    plan.delta1 = json_get<double>(j, "delta1", "merge plan");
    plan.delta2 = json_get<double>(j, "delta2", "merge plan");
    plan.groups = json_get<std::vector<std::vector<int>>>(j, "groups", "merge plan");
    plan.validate_structure(plan.num_layers());
    return plan;
}

MergePlan build_merge_plan(const CaptureDataset& dataset, double delta1, double delta2,
                           HeadAggregation agg, int64_t sample_cap, uint64_t seed) {
    CSR_REQUIRE(delta1 >= 0 && delta2 >= 0, ErrorCode::InvalidArgument,
                "merge thresholds must be non-negative");
    const int L = dataset.header.num_layers;

    std::map<std::pair<int, int>, double> memo;
    auto pair_jsd = [&](int a, int b) {
        auto key = std::minmax(a, b);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        double v = layer_pair_jsd(dataset, key.first, key.second, agg, sample_cap, seed);
        memo.emplace(key, v);
        return v;
    };

    MergePlan plan;
    plan.delta1 = delta1;
    plan.delta2 = delta2;
    plan.kind = dataset.header.kind;

    std::vector<int> group{0};
    double chain = 0.0;
    for (int layer = 1; layer < L; ++layer) {
        double next_chain = chain + pair_jsd(layer - 1, layer);
        bool ok = next_chain <= delta2;
        for (size_t i = 0; ok && i < group.size(); ++i) {
            ok = pair_jsd(group[i], layer) <= delta1;
        }
        if (ok) {
            group.push_back(layer);
            chain = next_chain;
        } else {
            plan.groups.push_back(std::move(group));
            group = {layer};
            chain = 0.0;
        }
    }
    plan.groups.push_back(std::move(group));
    plan.validate_structure(L);
    return plan;
}

void validate_plan(const MergePlan& plan, const CaptureDataset& dataset, HeadAggregation agg,
                   int64_t sample_cap, uint64_t seed) {
    plan.validate_structure(dataset.header.num_layers);
    CSR_REQUIRE(plan.kind == dataset.header.kind, ErrorCode::SchemaMismatch,
                "merge plan kind does not match the dataset");
    for (const auto& g : plan.groups) {
        double chain = 0.0;
        for (size_t i = 0; i < g.size(); ++i) {
            for (size_t j = i + 1; j < g.size(); ++j) {
                double v = layer_pair_jsd(dataset, g[i], g[j], agg, sample_cap, seed);
                CSR_REQUIRE(v <= plan.delta1, ErrorCode::FormatError,
                            "group pair (" + std::to_string(g[i]) + ", " + std::to_string(g[j]) +
                                ") violates the per-pair threshold");
            }
            if (i + 1 < g.size()) {
                chain += layer_pair_jsd(dataset, g[i], g[i + 1], agg, sample_cap, seed);
            }
        }
        CSR_REQUIRE(chain <= plan.delta2, ErrorCode::FormatError,
                    "group starting at layer " + std::to_string(g.front()) +
                        " violates the chain budget");
    }
}

} // namespace csr
