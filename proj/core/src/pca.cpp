#include "disentangle/pca.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "disentangle/error.hpp"

namespace disentangle {

PcaResult pca_embed(std::span<const double> rows, std::size_t samples, std::size_t features, std::size_t dims) {
  if (samples < 2) throw ContractError("pca: need at least 2 samples, got " + std::to_string(samples));
  if (dims == 0 || features < dims) {
    throw ContractError("pca: cannot extract " + std::to_string(dims) + " components from " + std::to_string(features) +
                        " features");
  }
  if (rows.size() != samples * features) throw ContractError("pca: matrix size does not match samples x features");

  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMatrix> x(rows.data(), static_cast<Eigen::Index>(samples), static_cast<Eigen::Index>(features));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const RowMatrix centered = x.rowwise() - mean;

  PcaResult r;
  r.samples = samples;
  r.features = features;
  r.dims = dims;
  r.mean.assign(mean.data(), mean.data() + features);
  r.components.assign(dims * features, 0.0);
  r.eigenvalues.assign(dims, 0.0);
  r.projections.assign(samples * dims, 0.0);

  if (centered.cwiseAbs().maxCoeff() == 0.0) {
    r.degenerate = true;
    for (std::size_t d = 0; d < dims; ++d) r.components[d * features + d] = 1.0;
    return r;
  }

  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(samples - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("pca: eigendecomposition did not converge");

  // eigenvalues come back ascending
  for (std::size_t d = 0; d < dims; ++d) {
    const Eigen::Index col = static_cast<Eigen::Index>(features - 1 - d);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index top = 0;
    v.cwiseAbs().maxCoeff(&top);
    if (v(top) < 0) v = -v;
    for (std::size_t f = 0; f < features; ++f) r.components[d * features + f] = v(static_cast<Eigen::Index>(f));
    r.eigenvalues[d] = solver.eigenvalues()(col);
  }

  const Eigen::Map<const RowMatrix> comps(r.components.data(), static_cast<Eigen::Index>(dims),
                                          static_cast<Eigen::Index>(features));
  Eigen::Map<RowMatrix> proj(r.projections.data(), static_cast<Eigen::Index>(samples), static_cast<Eigen::Index>(dims));
  proj.noalias() = centered * comps.transpose();
  return r;
}

}  // namespace disentangle
