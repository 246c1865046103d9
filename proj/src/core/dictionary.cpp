// SPDX-License-Identifier: Apache-2.0

#include "core/dictionary.hpp"

namespace csr {

Dictionary::Dictionary(Eigen::MatrixXf atoms, CaptureKind kind, Provenance provenance,
                       int offline_count)
    : atoms_(std::move(atoms)),
      kind_(kind),
      provenance_(provenance),
      offline_count_(offline_count) {
    atoms64_ = atoms_.cast<double>();
    validate();
}

void Dictionary::validate() const {
    CSR_REQUIRE(atoms_.rows() >= 1 && atoms_.cols() >= 1, ErrorCode::InvalidArgument,
                "dictionary must have at least one atom");
    CSR_REQUIRE(atoms_.cols() <= kMaxAtoms, ErrorCode::IndexSpaceOverflow,
                "dictionary exceeds the u16 index space");
    CSR_REQUIRE(atoms_.allFinite(), ErrorCode::NonFinite, "dictionary holds non-finite values");
    for (int c = 0; c < atoms_.cols(); ++c) {
        double n = atoms64_.col(c).norm();
        CSR_REQUIRE(std::abs(n - 1.0) <= 1e-5, ErrorCode::InvalidArgument,
                    "atom " + std::to_string(c) + " is not unit norm (|" + std::to_string(n) +
                        "| - 1 > 1e-5)");
    }
    if (provenance_ == Provenance::Composite) {
        CSR_REQUIRE(offline_count_ >= 0 && offline_count_ <= atoms_.cols(),
                    ErrorCode::InvalidArgument, "composite offline_count out of range");
    }
}

} // namespace csr
