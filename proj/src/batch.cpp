#include "myoreg/batch.hpp"

#include <cmath>

namespace myoreg {

BatchEvaluator::BatchEvaluator(const NetworkConfig& config, const Parameters& params)
    : config_(config), params_(params) {
  config_.validate();
  // Owned copies keep the SIMD alignment, and hence the rounding, independent of the parameter buffer.
  for (const LayerShape& s : params_.layers()) {
    weights_.emplace_back(Eigen::Map<const RowMajor>(params_.flat().data() + s.weight_offset, s.out, s.in));
  }
}

const BatchEvaluator::RowMajor& BatchEvaluator::weights(std::size_t layer) const { return weights_[layer]; }

Eigen::Map<const Eigen::VectorXd> BatchEvaluator::biases(std::size_t layer) const {
  const LayerShape& s = params_.layers()[layer];
  return {params_.flat().data() + s.bias_offset, s.out};
}

void BatchEvaluator::forward(const Eigen::Matrix3Xd& xn, const Eigen::RowVectorXd& t, bool with_tangents) {
  const Eigen::Index n = xn.cols();
  if (t.size() != n) throw UsageError("BatchEvaluator::forward: time row does not match batch size");
  tangents_ = with_tangents;
  const Activation kind = config_.activation;

  // Fourier projection shared by FF-S input encoding and modulation.
  Eigen::ArrayXXd cos_bx, sin_bx;
  Eigen::Matrix<double, Eigen::Dynamic, 3> bmat;
  if (config_.encoder) {
    const FourierEncoder& enc = *config_.encoder;
    bmat.resize(enc.features(), 3);
    for (int i = 0; i < enc.features(); ++i) {
      for (int j = 0; j < 3; ++j) bmat(i, j) = enc.b(i, j);
    }
    const Eigen::MatrixXd bx = bmat * xn;
    cos_bx = bx.array().cos();
    sin_bx = bx.array().sin();
  }

  if (kind == Activation::FFSiren) {
    const Eigen::Index m = cos_bx.rows();
    input_.resize(2 * m + 1, n);
    input_.topRows(m) = cos_bx.matrix();
    input_.middleRows(m, m) = sin_bx.matrix();
    input_.row(2 * m) = t;
    if (with_tangents) {
      for (int j = 0; j < 3; ++j) {
        input_tangents_[j].resize(2 * m + 1, n);
        input_tangents_[j].topRows(m) = (-(sin_bx.colwise() * bmat.col(j).array())).matrix();
        input_tangents_[j].middleRows(m, m) = (cos_bx.colwise() * bmat.col(j).array()).matrix();
        input_tangents_[j].row(2 * m).setZero();
      }
    }
  } else {
    input_.resize(4, n);
    input_.topRows(3) = xn;
    input_.row(3) = t;
    if (with_tangents) {
      for (int j = 0; j < 3; ++j) {
        input_tangents_[j] = Eigen::MatrixXd::Zero(4, n);
        input_tangents_[j].row(j).setOnes();
      }
    }
  }

  if (is_modulated(kind)) {
    const Eigen::ArrayXXd cs = cos_bx + sin_bx;
    const Eigen::ArrayXd energy = (cs * cs).colwise().sum().transpose();
    const Eigen::ArrayXd sum_sin = sin_bx.colwise().sum().transpose();
    const Eigen::ArrayXd sum_cos = cos_bx.colwise().sum().transpose();
    alpha_.resize(1, n);
    phase_.resize(1, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      alpha_(0, k) = 1.0 / (1.0 + std::exp(-energy(k)));
      phase_(0, k) = (sum_sin(k) == 0.0 && sum_cos(k) == 0.0) ? 0.0 : std::atan2(sum_sin(k), sum_cos(k));
    }
    if (with_tangents) {
      const Eigen::MatrixXd bt = bmat.transpose();
      const Eigen::ArrayXXd denergy = (bt * (2.0 * cs * (cos_bx - sin_bx)).matrix()).array();
      const Eigen::ArrayXXd dsum_sin = (bt * cos_bx.matrix()).array();
      const Eigen::ArrayXXd dsum_cos = -(bt * sin_bx.matrix()).array();
      dalpha_.resize(3, n);
      dphase_.resize(3, n);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double a = alpha_(0, k);
        dalpha_.col(k) = a * (1.0 - a) * denergy.col(k);
        const double r2 = sum_sin(k) * sum_sin(k) + sum_cos(k) * sum_cos(k);
        if (r2 == 0.0) {
          dphase_.col(k).setZero();
        } else {
          dphase_.col(k) = (sum_cos(k) * dsum_sin.col(k) - sum_sin(k) * dsum_cos.col(k)) / r2;
        }
      }
    }
  }

  const std::size_t n_layers = params_.layers().size();
  hidden_.resize(n_layers - 1);
  const double w0 = is_sinusoidal(kind) ? config_.omega0 : 1.0;

  const Eigen::MatrixXd* prev = &input_;
  const std::array<Eigen::MatrixXd, 3>* prev_t = &input_tangents_;
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    LayerCache& c = hidden_[l];
    Eigen::MatrixXd z = weights(l) * *prev;
    z.colwise() += biases(l);
    const Eigen::ArrayXXd za = z.array();

    Eigen::ArrayXXd a, d1, d2;
    std::array<Eigen::ArrayXXd, 3> h;
    switch (kind) {
      case Activation::Tanh:
        a = za.tanh();
        d1 = 1.0 - a * a;
        if (with_tangents) d2 = -2.0 * a * d1;
        break;
      case Activation::Siren:
      case Activation::FFSiren: {
        const Eigen::ArrayXXd q = w0 * za;
        a = q.sin();
        d1 = w0 * q.cos();
        if (with_tangents) d2 = -(w0 * w0) * a;
        break;
      }
      case Activation::AM: {
        const Eigen::ArrayXXd q = w0 * za;
        const Eigen::ArrayXXd sq = q.sin();
        const Eigen::ArrayXXd cq = q.cos();
        a = sq.rowwise() * alpha_.row(0);
        d1 = (w0 * cq).rowwise() * alpha_.row(0);
        if (with_tangents) {
          d2 = (-(w0 * w0) * sq).rowwise() * alpha_.row(0);
          for (int j = 0; j < 3; ++j) {
            h[j] = sq.rowwise() * dalpha_.row(j);
            c.dh[j] = (w0 * cq).rowwise() * dalpha_.row(j);
          }
        }
        break;
      }
      case Activation::PSK: {
        const Eigen::ArrayXXd q = (w0 * za).rowwise() + phase_.row(0);
        a = q.sin();
        const Eigen::ArrayXXd cq = q.cos();
        d1 = w0 * cq;
        if (with_tangents) {
          d2 = -(w0 * w0) * a;
          for (int j = 0; j < 3; ++j) {
            h[j] = cq.rowwise() * dphase_.row(j);
            c.dh[j] = (-w0 * a).rowwise() * dphase_.row(j);
          }
        }
        break;
      }
      case Activation::QPSK: {
        const Eigen::ArrayXXd q = (w0 * za).rowwise() + phase_.row(0);
        const Eigen::ArrayXXd sq = q.sin();
        const Eigen::ArrayXXd cq = q.cos();
        a = sq + cq;
        const Eigen::ArrayXXd minus = cq - sq;
        d1 = w0 * minus;
        if (with_tangents) {
          d2 = -(w0 * w0) * a;
          for (int j = 0; j < 3; ++j) {
            h[j] = minus.rowwise() * dphase_.row(j);
            c.dh[j] = (-w0 * a).rowwise() * dphase_.row(j);
          }
        }
        break;
      }
    }
    c.act = a.matrix();
    c.d1 = std::move(d1);
    c.d2 = std::move(d2);
    if (with_tangents) {
      for (int j = 0; j < 3; ++j) {
        c.dz[j].noalias() = weights(l) * (*prev_t)[j];
        Eigen::ArrayXXd da = c.d1 * c.dz[j].array();
        if (is_modulated(kind)) da += h[j];
        c.dact[j] = da.matrix();
      }
    }
    prev = &c.act;
    prev_t = &c.dact;
  }

  const std::size_t last = n_layers - 1;
  output_.noalias() = weights(last) * *prev;
  output_.colwise() += biases(last);
  if (with_tangents) {
    for (int j = 0; j < 3; ++j) output_tangents_[j].noalias() = weights(last) * (*prev_t)[j];
  }
}

void BatchEvaluator::backward(const Eigen::Matrix3Xd& output_adjoint,
                              const std::array<Eigen::Matrix3Xd, 3>* tangent_adjoint, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw UsageError("BatchEvaluator::backward: gradient size mismatch");
  if (tangent_adjoint != nullptr && !tangents_) {
    throw UsageError("BatchEvaluator::backward: tangent adjoints need a forward pass with tangents");
  }
  const bool use_t = tangent_adjoint != nullptr;
  const std::size_t n_layers = params_.layers().size();

  Eigen::MatrixXd abar = output_adjoint;
  std::array<Eigen::MatrixXd, 3> dabar;
  if (use_t) {
    for (int j = 0; j < 3; ++j) dabar[j] = (*tangent_adjoint)[j];
  }

  for (std::size_t l = n_layers; l-- > 0;) {
    const LayerShape& s = params_.layers()[l];
    const bool is_output = l + 1 == n_layers;
    const Eigen::MatrixXd& prev = l == 0 ? input_ : hidden_[l - 1].act;
    const std::array<Eigen::MatrixXd, 3>& prev_t = l == 0 ? input_tangents_ : hidden_[l - 1].dact;

    Eigen::MatrixXd zbar;
    std::array<Eigen::MatrixXd, 3> dzbar;
    if (is_output) {
      zbar = abar;
      if (use_t) dzbar = dabar;
    } else {
      const LayerCache& c = hidden_[l];
      Eigen::ArrayXXd zb = abar.array() * c.d1;
      if (use_t) {
        for (int j = 0; j < 3; ++j) {
          Eigen::ArrayXXd second = c.d2 * c.dz[j].array();
          if (is_modulated(config_.activation)) second += c.dh[j];
          zb += dabar[j].array() * second;
          dzbar[j] = (dabar[j].array() * c.d1).matrix();
        }
      }
      zbar = zb.matrix();
    }

    RowMajor wgrad = zbar * prev.transpose();
    if (use_t) {
      for (int j = 0; j < 3; ++j) wgrad.noalias() += dzbar[j] * prev_t[j].transpose();
    }
    const Eigen::VectorXd bgrad = zbar.rowwise().sum();
    double* gw = grad.data() + s.weight_offset;
    for (Eigen::Index r = 0; r < s.out; ++r) {
      for (Eigen::Index c = 0; c < s.in; ++c) gw[r * s.in + c] += wgrad(r, c);
    }
    for (Eigen::Index r = 0; r < s.out; ++r) grad[s.bias_offset + static_cast<std::size_t>(r)] += bgrad(r);

    if (l == 0) break;
    const RowMajor& w = weights(l);
    abar.noalias() = w.transpose() * zbar;
    if (use_t) {
      for (int j = 0; j < 3; ++j) dabar[j].noalias() = w.transpose() * dzbar[j];
    }
  }
}

namespace {
constexpr Eigen::Index kDenseChunk = 4096;

template <class Fn>
void for_each_chunk(const DeformationModel& model, std::span<const Vec3> points, double t, bool tangents, Fn&& fn) {
  BatchEvaluator eval(model.config, model.params);
  for (std::size_t start = 0; start < points.size(); start += kDenseChunk) {
    const Eigen::Index n = static_cast<Eigen::Index>(std::min<std::size_t>(kDenseChunk, points.size() - start));
    Eigen::Matrix3Xd xn(3, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Vec3 q = model.norm.to_normalized(points[start + static_cast<std::size_t>(k)]);
      xn.col(k) << q[0], q[1], q[2];
    }
    eval.forward(xn, Eigen::RowVectorXd::Constant(n, t), tangents);
    fn(start, n, eval);
  }
}
}  // namespace

std::vector<Vec3> map_points(const DeformationModel& model, std::span<const Vec3> points, double t) {
  std::vector<Vec3> out(points.size());
  for_each_chunk(model, points, t, false, [&](std::size_t start, Eigen::Index n, const BatchEvaluator& eval) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const std::size_t idx = start + static_cast<std::size_t>(k);
      for (int a = 0; a < 3; ++a) {
        out[idx][a] = points[idx][a] + eval.output()(a, k) * model.norm.displacement_scale(a);
      }
    }
  });
  return out;
}

std::vector<Matrix3<double>> deformation_gradients(const DeformationModel& model, std::span<const Vec3> points,
                                                   double t) {
  std::vector<Matrix3<double>> out(points.size());
  for_each_chunk(model, points, t, true, [&](std::size_t start, Eigen::Index n, const BatchEvaluator& eval) {
    for (Eigen::Index k = 0; k < n; ++k) {
      Matrix3<double>& F = out[start + static_cast<std::size_t>(k)];
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          const double scale = model.norm.displacement_scale(i) / model.norm.displacement_scale(j);
          F[i][j] = (i == j ? 1.0 : 0.0) + scale * eval.output_tangents()[j](i, k);
        }
      }
    }
  });
  return out;
}

}  // namespace myoreg
