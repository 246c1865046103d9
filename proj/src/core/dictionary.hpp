// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include "core/capture.hpp"
#include "core/error.hpp"

namespace csr {

enum class Provenance { Offline, Online, Outlier, Composite };

// A basis for one channel chunk: columns are unit-norm atoms. Atoms are
// canonically f32; a f64 copy is kept alongside because encoding runs its
// inner products in double (argmax selection must not depend on summation
// order quirks of float).
//
// Indices are stored as u16 with 65535 reserved as the outlier sentinel,
// which caps num_atoms at 65535.
class Dictionary {
  public:
    Dictionary() = default;
    Dictionary(Eigen::MatrixXf atoms, CaptureKind kind, Provenance provenance,
               int offline_count = -1);

    const Eigen::MatrixXf& atoms() const { return atoms_; }
    const Eigen::MatrixXd& atoms64() const { return atoms64_; }
    int chunk_dim() const { return int(atoms_.rows()); }
    int num_atoms() const { return int(atoms_.cols()); }
    CaptureKind kind() const { return kind_; }
    Provenance provenance() const { return provenance_; }
    // For Composite dictionaries: columns [0, offline_count) came from the
    // offline store, the rest are the per-prompt online part.
    int offline_count() const { return offline_count_; }

    void validate() const;

  private:
    Eigen::MatrixXf atoms_;
    Eigen::MatrixXd atoms64_;
    CaptureKind kind_ = CaptureKind::Key;
    Provenance provenance_ = Provenance::Offline;
    int offline_count_ = -1;
};

constexpr int kMaxAtoms = 65535;
constexpr uint16_t kOutlierSentinel = 65535;

} // namespace csr
