#include "myoreg/training.hpp"

#include <cmath>
#include <thread>

#include "myoreg/batch.hpp"
#include "myoreg/sampling.hpp"

namespace myoreg {

void TrainConfig::validate() const {
  if (!(mu >= 0.0) || !(lambda >= 0.0)) throw ConfigError("train: mu and lambda must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (iterations < 0) throw ConfigError("train: iterations must be non-negative");
  if (similarity_batch < 1 || reg_batch < 1) throw ConfigError("train: batch sizes must be at least 1");
  if (history_every < 1) throw ConfigError("train: history interval must be at least 1");
  if (chunk_size < 1) throw ConfigError("train: chunk size must be at least 1");
  if (threads < 1) throw ConfigError("train: thread count must be at least 1");
}

std::vector<std::size_t> mask_voxels(const CineSequence& seq) {
  const ImageVolume& ref = seq.reference();
  if (!ref.mask) throw ConfigError("reference frame has no LV mask");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ref.mask->data.size(); ++i) {
    if (ref.mask->data[i] != 0) out.push_back(i);
  }
  if (out.empty()) throw ConfigError("reference LV mask is empty");
  return out;
}

CollocationBatch draw_batch(const CineSequence& seq, std::span<const std::size_t> mask_voxels,
                            const TrainConfig& config, std::mt19937_64& rng) {
  CollocationBatch b;
  const std::size_t n = voxel_count(seq.reference().dims);
  std::uniform_int_distribution<std::size_t> all(0, n - 1);
  std::uniform_int_distribution<std::size_t> inside(0, mask_voxels.size() - 1);
  b.similarity_voxels.resize(static_cast<std::size_t>(config.similarity_batch));
  for (auto& v : b.similarity_voxels) v = all(rng);
  b.reg_voxels.resize(static_cast<std::size_t>(config.reg_batch));
  for (auto& v : b.reg_voxels) v = mask_voxels[inside(rng)];
  return b;
}

namespace {

Vec3 center_of(const ImageVolume& vol, std::size_t linear) {
  const std::size_t nx = static_cast<std::size_t>(vol.dims[0]);
  const std::size_t ny = static_cast<std::size_t>(vol.dims[1]);
  const int i = static_cast<int>(linear % nx);
  const int j = static_cast<int>((linear / nx) % ny);
  const int k = static_cast<int>(linear / (nx * ny));
  return voxel_center(vol.spacing, i, j, k);
}

double smooth_abs_value(double r) {
  return std::sqrt(r * r + ad::kSmoothAbsEps * ad::kSmoothAbsEps) - ad::kSmoothAbsEps;
}

void check_frame(const CineSequence& seq, int frame_index) {
  if (frame_index < 0 || static_cast<std::size_t>(frame_index) >= seq.frames.size()) {
    throw UsageError("loss: frame index out of range");
  }
}

struct ChunkResult {
  double sum = 0.0;
  int inversions = 0;
  std::vector<double> grad;
};

ChunkResult similarity_chunk(const DeformationModel& model, const ImageVolume& ref, const ImageVolume& tmpl, double t,
                             std::span<const std::size_t> voxels, double weight) {
  const Eigen::Index n = static_cast<Eigen::Index>(voxels.size());
  Eigen::Matrix3Xd xn(3, n);
  std::vector<Vec3> x(voxels.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    x[static_cast<std::size_t>(k)] = center_of(ref, voxels[static_cast<std::size_t>(k)]);
    const Vec3 q = model.norm.to_normalized(x[static_cast<std::size_t>(k)]);
    xn.col(k) << q[0], q[1], q[2];
  }
  BatchEvaluator eval(model.config, model.params);
  eval.forward(xn, Eigen::RowVectorXd::Constant(n, t), false);
  Eigen::Matrix3Xd adj(3, n);
  ChunkResult r;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vec3& p = x[static_cast<std::size_t>(k)];
    Vec3 phi;
    for (int a = 0; a < 3; ++a) phi[a] = p[a] + eval.output()(a, k) * model.norm.displacement_scale(a);
    const SampleWithGradient s = trilinear_sample_with_gradient(tmpl, phi);
    const double residual = static_cast<double>(ref.intensities[voxels[static_cast<std::size_t>(k)]]) - s.value;
    const double root = std::sqrt(residual * residual + ad::kSmoothAbsEps * ad::kSmoothAbsEps);
    r.sum += root - ad::kSmoothAbsEps;
    const double dl = weight * residual / root;
    for (int a = 0; a < 3; ++a) adj(a, k) = -dl * s.gradient[a] * model.norm.displacement_scale(a);
  }
  r.grad.assign(model.params.size(), 0.0);
  eval.backward(adj, nullptr, r.grad);
  return r;
}

ChunkResult regularization_chunk(const DeformationModel& model, const ImageVolume& ref, double t,
                                 std::span<const std::size_t> voxels, const MaterialParams& mat, double weight) {
  const Eigen::Index n = static_cast<Eigen::Index>(voxels.size());
  Eigen::Matrix3Xd xn(3, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vec3 q = model.norm.to_normalized(center_of(ref, voxels[static_cast<std::size_t>(k)]));
    xn.col(k) << q[0], q[1], q[2];
  }
  BatchEvaluator eval(model.config, model.params);
  eval.forward(xn, Eigen::RowVectorXd::Constant(n, t), true);
  std::array<Eigen::Matrix3Xd, 3> tadj;
  for (auto& m : tadj) m.resize(3, n);
  ChunkResult r;
  for (Eigen::Index k = 0; k < n; ++k) {
    Matrix3<double> F;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double scale = model.norm.displacement_scale(i) / model.norm.displacement_scale(j);
        F[i][j] = (i == j ? 1.0 : 0.0) + scale * eval.output_tangents()[j](i, k);
      }
    }
    const EnergyWithGradient e = neo_hookean_with_gradient(F, mat);
    r.sum += e.energy;
    if (e.inverted) ++r.inversions;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double scale = model.norm.displacement_scale(i) / model.norm.displacement_scale(j);
        tadj[j](i, k) = weight * e.dF[i][j] * scale;
      }
    }
  }
  r.grad.assign(model.params.size(), 0.0);
  eval.backward(Eigen::Matrix3Xd::Zero(3, n), &tadj, r.grad);
  return r;
}

template <class Task>
std::vector<ChunkResult> run_chunks(std::size_t count, int threads, Task&& task) {
  std::vector<ChunkResult> results(count);
  if (threads <= 1 || count <= 1) {
    for (std::size_t c = 0; c < count; ++c) results[c] = task(c);
    return results;
  }
  std::vector<std::thread> workers;
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  for (std::size_t w = 0; w < n_workers; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t c = w; c < count; c += n_workers) results[c] = task(c);
    });
  }
  for (auto& th : workers) th.join();
  return results;
}

}  // namespace

LossAndGradient loss(const DeformationModel& model, const CineSequence& seq, int frame_index,
                     const CollocationBatch& batch, const TrainConfig& config) {
  check_frame(seq, frame_index);
  if (batch.similarity_voxels.empty()) throw UsageError("loss: empty similarity batch");
  const ImageVolume& ref = seq.reference();
  const ImageVolume& tmpl = seq.frames[static_cast<std::size_t>(frame_index)];
  const double t = seq.times[static_cast<std::size_t>(frame_index)];
  const MaterialParams mat{config.lambda};
  const std::size_t chunk = static_cast<std::size_t>(config.chunk_size);

  const std::size_t n_sim = batch.similarity_voxels.size();
  const std::size_t n_reg = config.mu > 0.0 ? batch.reg_voxels.size() : 0;
  if (config.mu > 0.0 && n_reg == 0) throw ConfigError("loss: empty regularization batch");
  const std::size_t sim_chunks = (n_sim + chunk - 1) / chunk;
  const std::size_t reg_chunks = (n_reg + chunk - 1) / chunk;

  const double sim_weight = 1.0 / static_cast<double>(n_sim);
  const double reg_weight = n_reg > 0 ? config.mu / static_cast<double>(n_reg) : 0.0;
  std::vector<ChunkResult> parts = run_chunks(sim_chunks + reg_chunks, config.threads, [&](std::size_t c) {
    if (c < sim_chunks) {
      const std::size_t a = c * chunk, b = std::min(n_sim, a + chunk);
      return similarity_chunk(model, ref, tmpl, t,
                              std::span<const std::size_t>(batch.similarity_voxels).subspan(a, b - a), sim_weight);
    }
    const std::size_t a = (c - sim_chunks) * chunk, b = std::min(n_reg, a + chunk);
    return regularization_chunk(model, ref, t, std::span<const std::size_t>(batch.reg_voxels).subspan(a, b - a),
                                mat, reg_weight);
  });

  LossAndGradient out;
  out.gradient.assign(model.params.size(), 0.0);
  double sim_sum = 0.0, reg_sum = 0.0;
  for (std::size_t c = 0; c < parts.size(); ++c) {
    (c < sim_chunks ? sim_sum : reg_sum) += parts[c].sum;
    out.loss.inversions += parts[c].inversions;
    for (std::size_t i = 0; i < out.gradient.size(); ++i) out.gradient[i] += parts[c].grad[i];
  }
  out.loss.similarity = sim_sum / static_cast<double>(n_sim);
  out.loss.regularization = n_reg > 0 ? reg_sum / static_cast<double>(n_reg) : 0.0;
  out.loss.total = out.loss.similarity + config.mu * out.loss.regularization;
  return out;
}

LossAndGradient loss_tape(const DeformationModel& model, const CineSequence& seq, int frame_index,
                          const CollocationBatch& batch, const TrainConfig& config) {
  check_frame(seq, frame_index);
  const ImageVolume& ref = seq.reference();
  const ImageVolume& tmpl = seq.frames[static_cast<std::size_t>(frame_index)];
  const double t = seq.times[static_cast<std::size_t>(frame_index)];
  const MaterialParams mat{config.lambda};

  ad::Tape tape;
  std::vector<ad::Var> theta;
  theta.reserve(model.params.size());
  for (double v : model.params.flat()) theta.push_back(tape.variable(v));
  const std::span<const ad::Var> theta_span(theta);

  LossAndGradient out;
  ad::Var sim_sum = tape.constant(0.0);
  for (std::size_t idx : batch.similarity_voxels) {
    const Vec3 x = center_of(ref, idx);
    const Vec3 q = model.norm.to_normalized(x);
    const std::array<ad::Var, 3> xn{tape.constant(q[0]), tape.constant(q[1]), tape.constant(q[2])};
    const std::array<ad::Var, 3> u =
        evaluate_network<ad::Var, ad::Var>(model.config, model.params.layers(), theta_span, xn, tape.constant(t));
    std::array<ad::Var, 3> phi;
    for (int a = 0; a < 3; ++a) phi[a] = u[a] * model.norm.displacement_scale(a) + x[a];
    const ad::Var residual = static_cast<double>(ref.intensities[idx]) - trilinear_sample(tmpl, phi);
    sim_sum = sim_sum + smooth_abs(residual);
  }
  ad::Var total = sim_sum / static_cast<double>(batch.similarity_voxels.size());
  out.loss.similarity = total.value();

  if (config.mu > 0.0) {
    ad::Var reg_sum = tape.constant(0.0);
    for (std::size_t idx : batch.reg_voxels) {
      const Vec3 x = center_of(ref, idx);
      const TapeJacobian tj =
          forward_with_jacobian_tape(tape, model.config, model.params.layers(), theta_span, model.norm, x, t);
      const DeformationState<ad::Var> st = deformation_state<ad::Var>(tj.F);
      if (st.J.value() > 0.0) {
        reg_sum = reg_sum + neo_hookean_energy(st, mat, x);
      } else {
        ++out.loss.inversions;
        reg_sum = reg_sum + inversion_penalty(st.J);
      }
    }
    const ad::Var reg = reg_sum / static_cast<double>(batch.reg_voxels.size());
    out.loss.regularization = reg.value();
    total = total + config.mu * reg;
  }
  out.loss.total = total.value();
  const ad::Gradient g = tape.backward(total);
  out.gradient.reserve(theta.size());
  for (const ad::Var& v : theta) out.gradient.push_back(g[v]);
  return out;
}

LossBreakdown loss_value(const DeformationModel& model, const CineSequence& seq, int frame_index,
                         const CollocationBatch& batch, const TrainConfig& config) {
  check_frame(seq, frame_index);
  const ImageVolume& ref = seq.reference();
  const ImageVolume& tmpl = seq.frames[static_cast<std::size_t>(frame_index)];
  const double t = seq.times[static_cast<std::size_t>(frame_index)];
  const MaterialParams mat{config.lambda};
  LossBreakdown out;
  double sim = 0.0;
  for (std::size_t idx : batch.similarity_voxels) {
    const Vec3 x = center_of(ref, idx);
    const Vec3 phi = model.map(x, t);
    sim += smooth_abs_value(static_cast<double>(ref.intensities[idx]) - trilinear_sample<double>(tmpl, phi));
  }
  out.similarity = sim / static_cast<double>(batch.similarity_voxels.size());
  if (config.mu > 0.0) {
    double reg = 0.0;
    for (std::size_t idx : batch.reg_voxels) {
      const Vec3 x = center_of(ref, idx);
      const JacobianResult jr = forward_with_jacobian(model.config, model.params, model.norm, x, t);
      const DeformationState<double> st = deformation_state<double>(jr.F);
      if (st.J > 0.0) {
        reg += neo_hookean_energy(st, mat);
      } else {
        ++out.inversions;
        reg += inversion_penalty(st.J);
      }
    }
    out.regularization = reg / static_cast<double>(batch.reg_voxels.size());
  }
  out.total = out.similarity + config.mu * out.regularization;
  return out;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double learning_rate,
               const AdamConfig& adam) {
  if (params.size() != grads.size()) throw UsageError("adam_step: gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw UsageError("adam_step: optimizer state size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingError("adam_step: non-finite gradient at parameter " + std::to_string(i), Parameters(),
                          state.step);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = adam.beta1 * state.m[i] + (1.0 - adam.beta1) * g;
    state.v[i] = adam.beta2 * state.v[i] + (1.0 - adam.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + adam.epsilon);
  }
}

TrainResult train(const NetworkConfig& network, const CineSequence& seq, const TrainConfig& config,
                  const ProgressCallback& progress) {
  network.validate();
  config.validate();
  seq.validate();
  TrainResult result{{network, init_params(network, config.seed), Normalization{seq.reference().extent()}}, {}};
  DeformationModel& model = result.model;
  const std::vector<std::size_t> inside = mask_voxels(seq);

  // Separate stream from initialization so batch draws do not depend on network size.
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> frame_dist(0, static_cast<int>(seq.frames.size()) - 1);
  AdamState adam;
  HistoryEntry window;
  int in_window = 0;

  for (int it = 1; it <= config.iterations; ++it) {
    const int frame = frame_dist(rng);
    const CollocationBatch batch = draw_batch(seq, inside, config, rng);
    LossAndGradient lg = loss(model, seq, frame, batch, config);
    if (!std::isfinite(lg.loss.total)) {
      throw TrainingError("train: non-finite loss at iteration " + std::to_string(it), model.params, it);
    }
    try {
      adam_step(model.params.flat(), lg.gradient, adam, config.learning_rate, config.adam);
    } catch (const TrainingError& e) {
      // adam_step validates before mutating, so the current parameters are the last good ones.
      throw TrainingError(e.what(), model.params, it);
    }
    window.total += lg.loss.total;
    window.similarity += lg.loss.similarity;
    window.regularization += lg.loss.regularization;
    window.inversions += lg.loss.inversions;
    ++in_window;
    if (it % config.history_every == 0 || it == config.iterations) {
      HistoryEntry e = window;
      e.iteration = it;
      e.total /= in_window;
      e.similarity /= in_window;
      e.regularization /= in_window;
      result.history.entries.push_back(e);
      if (progress) progress(e);
      window = HistoryEntry{};
      in_window = 0;
    }
  }
  return result;
}

}  // namespace myoreg
