#include "prior/denoiser.hpp"

#include <cmath>

#include "core/error.hpp"

namespace dps4un {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd silu(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return v * sigmoid(v); });
}

Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

Eigen::MatrixXd affine(const Eigen::MatrixXd& w, const Eigen::MatrixXd& b, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y(w.rows(), x.cols());
  y.noalias() = w * x;
  y.colwise() += b.col(0);
  return y;
}

void uniform_init(Eigen::MatrixXd& m, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

}  // namespace

DenoiserModel::DenoiserModel(const DenoiserConfig& config, NoiseSchedule schedule, std::uint64_t seed, bool zero_head)
    : config_(config), schedule_(std::move(schedule)) {
  require(config.bands >= 1 && config.clusters >= 1 && config.stages >= 0 && config.hidden >= 1 &&
              config.time_dim >= 2 && config.label_dim >= 1,
          ErrorCode::InvalidArgument, "invalid denoiser configuration");
  const int dt = config.time_dim, dl = config.label_dim, hc = config.time_dim;
  int mod_dim = 0;
  for (int s = 0; s < config.stages; ++s) mod_dim += 2 * stage_input_dim(s);

  std::mt19937_64 rng(seed);
  auto add = [&](const std::string& name, int rows, int cols, int fan_in) {
    Eigen::MatrixXd m(rows, cols);
    uniform_init(m, fan_in, rng);
    params_.push_back(std::move(m));
    names_.push_back(name);
  };
  add("time.w1", dt, dt, dt);
  add("time.b1", dt, 1, dt);
  add("time.w2", dt, dt, dt);
  add("time.b2", dt, 1, dt);
  {
    Eigen::MatrixXd table(dl, config.clusters);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = normal(rng);
    params_.push_back(std::move(table));
    names_.push_back("label.table");
  }
  add("cond.w", hc, dt + dl, dt + dl);
  add("cond.b", hc, 1, dt + dl);
  add("mod.w", mod_dim, hc, hc);
  add("mod.b", mod_dim, 1, hc);
  for (int s = 0; s < config.stages; ++s) {
    add("stage" + std::to_string(s) + ".w", config.hidden, stage_input_dim(s), stage_input_dim(s));
    add("stage" + std::to_string(s) + ".b", config.hidden, 1, stage_input_dim(s));
  }
  add("head.w", config.bands, feature_dim(), feature_dim());
  add("head.b", config.bands, 1, feature_dim());
  if (zero_head) {
    params_[head_weight()].setZero();
    params_[head_weight() + 1].setZero();
  }
}

std::size_t DenoiserModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

void DenoiserModel::round_to_f32() {
  for (auto& p : params_) p = p.cast<float>().cast<double>();
}

int DenoiserModel::modulation_offset(int s) const {
  int off = 0;
  for (int i = 0; i < s; ++i) off += 2 * stage_input_dim(i);
  return off;
}

Eigen::MatrixXd sinusoidal_embedding(std::span<const int> t, int dim) {
  const int half = dim / 2;
  Eigen::MatrixXd emb = Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(t.size()));
  for (std::size_t j = 0; j < t.size(); ++j) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double arg = t[j] * freq;
      emb(i, static_cast<Eigen::Index>(j)) = std::sin(arg);
      emb(half + i, static_cast<Eigen::Index>(j)) = std::cos(arg);
    }
  }
  return emb;
}

Eigen::MatrixXd denoiser_forward(const DenoiserModel& model, const Eigen::MatrixXd& a_t, std::span<const int> t,
                                 std::span<const int> c, double dropout, std::mt19937_64* rng, ForwardCache* cache) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  const Eigen::Index batch = a_t.cols();
  require(a_t.rows() == cfg.bands, ErrorCode::Dimension,
          "denoiser expects " + std::to_string(cfg.bands) + " bands, got " + std::to_string(a_t.rows()));
  require(static_cast<Eigen::Index>(t.size()) == batch && static_cast<Eigen::Index>(c.size()) == batch,
          ErrorCode::Dimension, "denoiser: timestep/label batch size mismatch");
  for (Eigen::Index j = 0; j < batch; ++j) {
    require(c[static_cast<std::size_t>(j)] >= 0 && c[static_cast<std::size_t>(j)] < cfg.clusters,
            ErrorCode::InvalidArgument, "denoiser: condition id out of range");
    require(t[static_cast<std::size_t>(j)] >= 1 && t[static_cast<std::size_t>(j)] <= model.schedule().steps,
            ErrorCode::InvalidArgument, "denoiser: timestep out of range");
  }

  ForwardCache local;
  ForwardCache& k = cache ? *cache : local;
  k.input = a_t;
  k.labels.assign(c.begin(), c.end());
  k.dropout = rng ? dropout : 0.0;

  k.phi = sinusoidal_embedding(t, cfg.time_dim);
  k.z_time = affine(p[DenoiserModel::kTimeW1], p[DenoiserModel::kTimeB1], k.phi);
  k.temb = affine(p[DenoiserModel::kTimeW2], p[DenoiserModel::kTimeB2], silu(k.z_time));
  k.u.resize(cfg.time_dim + cfg.label_dim, batch);
  k.u.topRows(cfg.time_dim) = k.temb;
  for (Eigen::Index j = 0; j < batch; ++j) {
    k.u.col(j).tail(cfg.label_dim) = p[DenoiserModel::kLabelTable].col(c[static_cast<std::size_t>(j)]);
  }
  k.zc = affine(p[DenoiserModel::kCondW], p[DenoiserModel::kCondB], silu(k.u));
  k.hc = silu(k.zc);
  k.mod = affine(p[DenoiserModel::kModW], p[DenoiserModel::kModB], k.hc);

  k.f_in.assign(static_cast<std::size_t>(cfg.stages), {});
  k.v.assign(static_cast<std::size_t>(cfg.stages), {});
  k.z.assign(static_cast<std::size_t>(cfg.stages), {});
  k.mask.assign(static_cast<std::size_t>(cfg.stages), {});
  Eigen::MatrixXd f = a_t;
  std::bernoulli_distribution keep(1.0 - k.dropout);
  for (int s = 0; s < cfg.stages; ++s) {
    const auto si = static_cast<std::size_t>(s);
    const int d = model.stage_input_dim(s);
    const int off = model.modulation_offset(s);
    const auto alpha = k.mod.middleRows(off, d);
    const auto gamma = k.mod.middleRows(off + d, d);
    k.v[si] = f.cwiseProduct((alpha.array() + 1.0).matrix()) + gamma;
    k.z[si] = affine(p[model.stage_weight(s)], p[model.stage_weight(s) + 1], k.v[si]);
    Eigen::MatrixXd h = silu(k.z[si]);
    if (k.dropout > 0.0) {
      k.mask[si].resize(h.rows(), h.cols());
      const double scale = 1.0 / (1.0 - k.dropout);
      for (Eigen::Index i = 0; i < h.size(); ++i) k.mask[si].data()[i] = keep(*rng) ? scale : 0.0;
      h.array() *= k.mask[si].array();
    }
    k.f_in[si] = std::move(f);
    f.resize(cfg.bands + cfg.hidden, batch);
    f.topRows(cfg.bands) = a_t;
    f.bottomRows(cfg.hidden) = h;
  }
  k.f_out = std::move(f);
  return affine(p[model.head_weight()], p[model.head_weight() + 1], k.f_out);
}

void denoiser_backward(const DenoiserModel& model, const ForwardCache& k, const Eigen::MatrixXd& d_out,
                       std::vector<Eigen::MatrixXd>* grads, Eigen::MatrixXd* d_input) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  const Eigen::Index batch = d_out.cols();
  auto acc = [&](std::size_t slot, const Eigen::MatrixXd& dy, const Eigen::MatrixXd& x) {
    if (!grads) return;
    (*grads)[slot].noalias() += dy * x.transpose();
    (*grads)[slot + 1].col(0) += dy.rowwise().sum();
  };

  const std::size_t head = model.head_weight();
  acc(head, d_out, k.f_out);
  Eigen::MatrixXd df = p[head].transpose() * d_out;
  Eigen::MatrixXd d_a = Eigen::MatrixXd::Zero(cfg.bands, batch);
  Eigen::MatrixXd d_mod = Eigen::MatrixXd::Zero(k.mod.rows(), batch);

  for (int s = cfg.stages - 1; s >= 0; --s) {
    const auto si = static_cast<std::size_t>(s);
    d_a += df.topRows(cfg.bands);
    Eigen::MatrixXd dz = df.bottomRows(cfg.hidden);
    if (k.mask[si].size() > 0) dz.array() *= k.mask[si].array();
    dz.array() *= silu_grad(k.z[si]).array();
    acc(model.stage_weight(s), dz, k.v[si]);
    const Eigen::MatrixXd dv = p[model.stage_weight(s)].transpose() * dz;
    const int d = model.stage_input_dim(s);
    const int off = model.modulation_offset(s);
    d_mod.middleRows(off, d) = dv.cwiseProduct(k.f_in[si]);
    d_mod.middleRows(off + d, d) = dv;
    df = dv.cwiseProduct((k.mod.middleRows(off, d).array() + 1.0).matrix());
  }
  d_a += df;
  if (d_input) *d_input = std::move(d_a);
  if (!grads) return;

  acc(DenoiserModel::kModW, d_mod, k.hc);
  Eigen::MatrixXd dzc = p[DenoiserModel::kModW].transpose() * d_mod;
  dzc.array() *= silu_grad(k.zc).array();
  acc(DenoiserModel::kCondW, dzc, silu(k.u));
  Eigen::MatrixXd du = p[DenoiserModel::kCondW].transpose() * dzc;
  du.array() *= silu_grad(k.u).array();
  for (Eigen::Index j = 0; j < batch; ++j) {
    (*grads)[DenoiserModel::kLabelTable].col(k.labels[static_cast<std::size_t>(j)]) += du.col(j).tail(cfg.label_dim);
  }
  const Eigen::MatrixXd d_temb = du.topRows(cfg.time_dim);
  acc(DenoiserModel::kTimeW2, d_temb, silu(k.z_time));
  Eigen::MatrixXd dz1 = p[DenoiserModel::kTimeW2].transpose() * d_temb;
  dz1.array() *= silu_grad(k.z_time).array();
  acc(DenoiserModel::kTimeW1, dz1, k.phi);
}

Eigen::MatrixXd denoise(const DenoiserModel& model, const Eigen::MatrixXd& a_t, std::span<const int> t,
                        std::span<const int> c, bool train_mode, double dropout, std::mt19937_64* rng) {
  if (train_mode) {
    require(rng != nullptr, ErrorCode::InvalidArgument, "train-mode denoise needs an RNG");
    return denoiser_forward(model, a_t, t, c, dropout, rng, nullptr);
  }
  require(static_cast<Eigen::Index>(t.size()) == a_t.cols() && static_cast<Eigen::Index>(c.size()) == a_t.cols(),
          ErrorCode::Dimension, "denoiser: timestep/label batch size mismatch");
  Eigen::MatrixXd out(model.config().bands, a_t.cols());
  for (Eigen::Index j = 0; j < a_t.cols(); ++j) {
    const auto js = static_cast<std::size_t>(j);
    Eigen::MatrixXd col = a_t.col(j);
    out.col(j) = denoiser_forward(model, col, t.subspan(js, 1), c.subspan(js, 1), 0.0, nullptr, nullptr);
  }
  return out;
}

Eigen::MatrixXd score(const DenoiserModel& model, const Eigen::MatrixXd& a_t, std::span<const int> t,
                      std::span<const int> c) {
  Eigen::MatrixXd eps = denoise(model, a_t, t, c);
  for (Eigen::Index j = 0; j < eps.cols(); ++j) {
    eps.col(j) *= -1.0 / std::sqrt(1.0 - model.schedule().alpha_bar_at(t[static_cast<std::size_t>(j)]));
  }
  return eps;
}

Eigen::MatrixXd denoise_vjp(const DenoiserModel& model, const Eigen::MatrixXd& a_t, std::span<const int> t,
                            std::span<const int> c, const Eigen::MatrixXd& upstream, Eigen::MatrixXd* eps) {
  require(upstream.rows() == a_t.rows() && upstream.cols() == a_t.cols(), ErrorCode::Dimension,
          "denoise_vjp: upstream shape mismatch");
  Eigen::MatrixXd grad(a_t.rows(), a_t.cols());
  if (eps) eps->resize(model.config().bands, a_t.cols());
  for (Eigen::Index j = 0; j < a_t.cols(); ++j) {
    const auto js = static_cast<std::size_t>(j);
    ForwardCache cache;
    Eigen::MatrixXd col = a_t.col(j);
    Eigen::MatrixXd out = denoiser_forward(model, col, t.subspan(js, 1), c.subspan(js, 1), 0.0, nullptr, &cache);
    if (eps) eps->col(j) = out;
    Eigen::MatrixXd up = upstream.col(j);
    Eigen::MatrixXd g;
    denoiser_backward(model, cache, up, nullptr, &g);
    grad.col(j) = g;
  }
  return grad;
}

std::vector<Eigen::MatrixXd> zero_gradients(const DenoiserModel& model) {
  std::vector<Eigen::MatrixXd> g;
  g.reserve(model.params().size());
  for (const auto& p : model.params()) g.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
  return g;
}

}  // namespace dps4un
