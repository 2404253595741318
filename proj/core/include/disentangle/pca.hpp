#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace disentangle {

struct PcaResult {
  std::size_t samples = 0;
  std::size_t features = 0;
  std::size_t dims = 0;
  std::vector<double> mean;         // [features]
  std::vector<double> components;   // [dims, features] row-major, orthonormal rows
  std::vector<double> eigenvalues;  // [dims], descending; covariance uses N-1
  std::vector<double> projections;  // [samples, dims] = (x - mean) . components^T
  bool degenerate = false;          // every row identical
};

/// Principal components of a row-major [samples, features] matrix.
///
/// Components are the leading eigenvectors of the sample covariance, sorted
/// by descending eigenvalue; each is sign-fixed so that its largest-magnitude
/// entry is positive. Identical rows yield degenerate=true, axis-aligned
/// components and all-zero projections. Throws ContractError when
/// samples < 2 or features < dims.
PcaResult pca_embed(std::span<const double> rows, std::size_t samples, std::size_t features, std::size_t dims = 2);

}  // namespace disentangle
