#pragma once

// Column-batched network evaluation used by training and dense evaluation.
//
// Each column of the input is one sample. The forward pass optionally carries
// three spatial tangent streams (d/dxn_j); backward() then accumulates the
// parameter gradient of any loss expressed through the outputs and their
// spatial derivatives. The scalar tape in autodiff.hpp computes the same
// quantities one sample at a time and serves as the reference for this path.

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "myoreg/mechanics.hpp"
#include "myoreg/model.hpp"
#include "myoreg/volume.hpp"

namespace myoreg {

class BatchEvaluator {
 public:
  BatchEvaluator(const NetworkConfig& config, const Parameters& params);

  // xn: 3 x B normalized coordinates, t: B times.
  void forward(const Eigen::Matrix3Xd& xn, const Eigen::RowVectorXd& t, bool with_tangents);

  // u_n, 3 x B.
  const Eigen::Matrix3Xd& output() const { return output_; }
  // d u_n / d xn_j, each 3 x B. Only valid after forward(..., true).
  const std::array<Eigen::Matrix3Xd, 3>& output_tangents() const { return output_tangents_; }

  // Accumulates into grad (size params.size()). tangent_adjoint may be null
  // when the loss does not depend on spatial derivatives.
  void backward(const Eigen::Matrix3Xd& output_adjoint, const std::array<Eigen::Matrix3Xd, 3>* tangent_adjoint,
                std::span<double> grad) const;

 private:
  struct LayerCache {
    Eigen::ArrayXXd d1;                   // g'(z)
    Eigen::ArrayXXd d2;                   // g''(z), tangent mode only
    std::array<Eigen::ArrayXXd, 3> dh;    // d h_j / d z, modulated tangent mode only
    Eigen::MatrixXd act;                  // a = g(z)
    std::array<Eigen::MatrixXd, 3> dz;    // tangent of z
    std::array<Eigen::MatrixXd, 3> dact;  // tangent of a
  };

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor& weights(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> biases(std::size_t layer) const;

  const NetworkConfig& config_;
  const Parameters& params_;
  std::vector<RowMajor> weights_;
  bool tangents_ = false;
  Eigen::MatrixXd input_;
  std::array<Eigen::MatrixXd, 3> input_tangents_;
  // Per-sample modulation quantities (1 x B) and their xn-gradients (3 x B).
  Eigen::ArrayXXd alpha_, phase_, dalpha_, dphase_;
  std::vector<LayerCache> hidden_;
  Eigen::Matrix3Xd output_;
  std::array<Eigen::Matrix3Xd, 3> output_tangents_;
};

// Dense evaluation of phi (physical) over many points, in fixed-size chunks.
std::vector<Vec3> map_points(const DeformationModel& model, std::span<const Vec3> points, double t);

// Physical deformation gradients F = I + D (d u_n / d xn) D^-1 with D = diag(L / 2).
std::vector<Matrix3<double>> deformation_gradients(const DeformationModel& model, std::span<const Vec3> points,
                                                   double t);

}  // namespace myoreg
