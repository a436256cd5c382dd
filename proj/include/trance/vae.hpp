#pragma once

// Small fully connected VAE used as the concept reducer.
//
// Encoder  c -> ceil(c/2) -> ceil(c/4) -> {mu, logvar} (c')
// Decoder  c' -> ceil(c/4) -> ceil(c/2) -> c
//
// Hidden layers use ReLU, the decoder output uses a sigmoid so reconstructions
// live in the normalized [0,1] domain. Latent codes are rectified: training
// feeds ReLU(mu + sigma * eps) to the decoder, inference uses ReLU(mu).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trance/container.hpp"
#include "trance/error.hpp"
#include "trance/linalg.hpp"

namespace trance {

struct VaeLayout {
  std::size_t input = 0;
  std::size_t hidden1 = 0;
  std::size_t hidden2 = 0;
  std::size_t latent = 0;

  static VaeLayout for_channels(std::size_t c, std::size_t c_prime) {
    require(c >= 1 && c_prime >= 1, ErrorCode::InvalidArgument, "channel counts must be positive");
    return {c, (c + 1) / 2, (c + 3) / 4, c_prime};
  }

  friend bool operator==(const VaeLayout&, const VaeLayout&) = default;
};

struct TrainConfig {
  int epochs_max = 100;
  double lr_initial = 0.005;
  int batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double kl_weight = 1e-4;  // larger weights collapse the posterior on normalized activations
  double val_fraction = 0.2;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;

  void check() const {
    require(epochs_max >= 1, ErrorCode::InvalidArgument, "epochs_max must be >= 1");
    require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be >= 1");
    require(val_fraction > 0.0 && val_fraction < 1.0, ErrorCode::InvalidArgument,
            "val_fraction must lie in (0, 1)");
    require(lr_initial > 0.0, ErrorCode::InvalidArgument, "lr_initial must be positive");
    require(kl_weight >= 0.0, ErrorCode::InvalidArgument, "kl_weight must be non-negative");
  }
};

/// Cosine annealing from lr_initial at epoch 0 down to 0 at epochs_max.
inline double cosine_lr(double lr_initial, int epoch, int epochs_max) {
  return lr_initial * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs_max)));
}

template <typename T>
struct Dense {
  RowMatrix<T> weight;  // out x in
  Vector<T> bias;       // out

  Dense() = default;
  Dense(std::size_t in, std::size_t out)
      : weight(RowMatrix<T>::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
        bias(Vector<T>::Zero(static_cast<Eigen::Index>(out))) {}

  RowMatrix<T> apply(const RowMatrix<T>& x) const {
    RowMatrix<T> out = x * weight.transpose();
    out.rowwise() += bias.transpose();
    return out;
  }
};

template <typename T>
struct VaeParameters {
  Dense<T> enc1, enc2, mu, logvar, dec1, dec2, dec3;

  VaeParameters() = default;
  explicit VaeParameters(const VaeLayout& l)
      : enc1(l.input, l.hidden1),
        enc2(l.hidden1, l.hidden2),
        mu(l.hidden2, l.latent),
        logvar(l.hidden2, l.latent),
        dec1(l.latent, l.hidden2),
        dec2(l.hidden2, l.hidden1),
        dec3(l.hidden1, l.input) {}

  /// Visits every layer as (name, layer) in a fixed order.
  template <typename F>
  void for_each_layer(F&& f) {
    f(std::string_view("enc1"), enc1);
    f(std::string_view("enc2"), enc2);
    f(std::string_view("mu"), mu);
    f(std::string_view("logvar"), logvar);
    f(std::string_view("dec1"), dec1);
    f(std::string_view("dec2"), dec2);
    f(std::string_view("dec3"), dec3);
  }
  template <typename F>
  void for_each_layer(F&& f) const {
    const_cast<VaeParameters*>(this)->for_each_layer(
        [&](std::string_view name, Dense<T>& d) { f(name, static_cast<const Dense<T>&>(d)); });
  }

  /// Visits every weight and bias buffer as (data pointer, length).
  template <typename F>
  void for_each_buffer(F&& f) {
    for_each_layer([&](std::string_view, Dense<T>& d) {
      f(d.weight.data(), static_cast<std::size_t>(d.weight.size()));
      f(d.bias.data(), static_cast<std::size_t>(d.bias.size()));
    });
  }

  bool all_finite() const {
    bool ok = true;
    for_each_layer([&](std::string_view, const Dense<T>& d) {
      ok = ok && d.weight.allFinite() && d.bias.allFinite();
    });
    return ok;
  }

  friend bool operator==(const VaeParameters& a, const VaeParameters& b) {
    bool same = true;
    auto la = collect(a);
    auto lb = collect(b);
    for (std::size_t i = 0; i < la.size(); ++i)
      same = same && la[i]->weight.rows() == lb[i]->weight.rows() &&
             la[i]->weight.cols() == lb[i]->weight.cols() && la[i]->weight == lb[i]->weight &&
             la[i]->bias == lb[i]->bias;
    return same;
  }

 private:
  static std::vector<const Dense<T>*> collect(const VaeParameters& p) {
    std::vector<const Dense<T>*> out;
    p.for_each_layer([&](std::string_view, const Dense<T>& d) { out.push_back(&d); });
    return out;
  }
};

// ---------------------------------------------------------------------------
// Loss

struct ElboTerms {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// recon = mean squared error over all entries; kl = batch mean of the
/// closed-form KL(N(mu, exp(logvar)) || N(0, I)); total = recon + beta * kl.
template <typename T>
ElboTerms elbo_loss(const RowMatrix<T>& x, const RowMatrix<T>& x_hat, const RowMatrix<T>& mu,
                    const RowMatrix<T>& logvar, double beta_kl) {
  require(x.rows() == x_hat.rows() && x.cols() == x_hat.cols(), ErrorCode::ShapeMismatch,
          "x and x_hat differ in shape");
  require(mu.rows() == logvar.rows() && mu.cols() == logvar.cols() && mu.rows() == x.rows(),
          ErrorCode::ShapeMismatch, "mu/logvar shape mismatch");
  ElboTerms t;
  const double n = static_cast<double>(x.size());
  t.recon = n > 0 ? (x_hat - x).template cast<double>().squaredNorm() / n : 0.0;
  double kl_sum = 0.0;
  for (Eigen::Index i = 0; i < mu.rows(); ++i)
    for (Eigen::Index j = 0; j < mu.cols(); ++j) {
      const double m = mu(i, j);
      const double lv = logvar(i, j);
      kl_sum += -0.5 * (1.0 + lv - m * m - std::exp(lv));
    }
  t.kl = mu.rows() > 0 ? kl_sum / static_cast<double>(mu.rows()) : 0.0;
  t.total = t.recon + beta_kl * t.kl;
  return t;
}

template <typename T>
struct ElboGradients {
  RowMatrix<T> d_x_hat;
  RowMatrix<T> d_mu;
  RowMatrix<T> d_logvar;
};

/// Partial derivatives of elbo_loss().total with respect to x_hat, mu and logvar.
template <typename T>
ElboGradients<T> elbo_gradients(const RowMatrix<T>& x, const RowMatrix<T>& x_hat,
                                const RowMatrix<T>& mu, const RowMatrix<T>& logvar, double beta_kl) {
  ElboGradients<T> g;
  const T n = static_cast<T>(x.size());
  const T b = static_cast<T>(mu.rows());
  const T beta = static_cast<T>(beta_kl);
  g.d_x_hat = (x_hat - x) * (T(2) / n);
  g.d_mu = mu * (beta / b);
  g.d_logvar = (logvar.array().exp() - T(1)).matrix() * (beta / (T(2) * b));
  return g;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename T>
struct VaeForward {
  RowMatrix<T> a1, h1, a2, h2;  // encoder
  RowMatrix<T> mu, logvar;
  RowMatrix<T> pre_z, z;        // pre-rectification latent and rectified code
  RowMatrix<T> a3, h3, a4, h4, a5, x_hat;
};

namespace detail {

template <typename T>
RowMatrix<T> relu(const RowMatrix<T>& a) {
  return a.cwiseMax(T(0));
}

template <typename T>
RowMatrix<T> relu_mask(const RowMatrix<T>& a) {
  return (a.array() > T(0)).template cast<T>().matrix();
}

template <typename T>
RowMatrix<T> sigmoid(const RowMatrix<T>& a) {
  return a.unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
}

template <typename T>
void accumulate(Dense<T>& grad, const RowMatrix<T>& d_out, const RowMatrix<T>& input) {
  grad.weight.noalias() += d_out.transpose() * input;
  grad.bias.noalias() += d_out.colwise().sum().transpose();
}

}  // namespace detail

template <typename T>
void encode_hidden(const VaeParameters<T>& p, const RowMatrix<T>& x, VaeForward<T>& f) {
  f.a1 = p.enc1.apply(x);
  f.h1 = detail::relu(f.a1);
  f.a2 = p.enc2.apply(f.h1);
  f.h2 = detail::relu(f.a2);
  f.mu = p.mu.apply(f.h2);
  f.logvar = p.logvar.apply(f.h2);
}

template <typename T>
void decode_into(const VaeParameters<T>& p, const RowMatrix<T>& z, VaeForward<T>& f) {
  f.a3 = p.dec1.apply(z);
  f.h3 = detail::relu(f.a3);
  f.a4 = p.dec2.apply(f.h3);
  f.h4 = detail::relu(f.a4);
  f.a5 = p.dec3.apply(f.h4);
  f.x_hat = detail::sigmoid(f.a5);
}

/// Full pass. With `eps` the latent is ReLU(mu + exp(logvar/2) * eps),
/// without it the deterministic code ReLU(mu).
template <typename T>
VaeForward<T> vae_forward(const VaeParameters<T>& p, const RowMatrix<T>& x, const RowMatrix<T>* eps) {
  VaeForward<T> f;
  encode_hidden(p, x, f);
  if (eps) {
    f.pre_z = f.mu + ((f.logvar.array() * T(0.5)).exp() * eps->array()).matrix();
  } else {
    f.pre_z = f.mu;
  }
  f.z = detail::relu(f.pre_z);
  decode_into(p, f.z, f);
  return f;
}

/// Backpropagates elbo_loss(x, x_hat, mu, logvar).total into `grads`
/// (accumulated, so zero them first). `eps` must be the noise used in forward.
template <typename T>
void vae_backward(const VaeParameters<T>& p, const VaeForward<T>& f, const RowMatrix<T>& x,
                  const RowMatrix<T>* eps, double beta_kl, VaeParameters<T>& grads) {
  using detail::accumulate;
  using detail::relu_mask;
  const auto eg = elbo_gradients<T>(x, f.x_hat, f.mu, f.logvar, beta_kl);

  RowMatrix<T> d_a5 = (eg.d_x_hat.array() * f.x_hat.array() * (T(1) - f.x_hat.array())).matrix();
  accumulate(grads.dec3, d_a5, f.h4);
  RowMatrix<T> d_a4 = ((d_a5 * p.dec3.weight).array() * relu_mask(f.a4).array()).matrix();
  accumulate(grads.dec2, d_a4, f.h3);
  RowMatrix<T> d_a3 = ((d_a4 * p.dec2.weight).array() * relu_mask(f.a3).array()).matrix();
  accumulate(grads.dec1, d_a3, f.z);
  RowMatrix<T> d_pre = ((d_a3 * p.dec1.weight).array() * relu_mask(f.pre_z).array()).matrix();

  RowMatrix<T> d_mu = d_pre + eg.d_mu;
  RowMatrix<T> d_logvar = eg.d_logvar;
  if (eps)
    d_logvar.array() += d_pre.array() * eps->array() * (f.logvar.array() * T(0.5)).exp() * T(0.5);

  accumulate(grads.mu, d_mu, f.h2);
  accumulate(grads.logvar, d_logvar, f.h2);
  RowMatrix<T> d_a2 =
      ((d_mu * p.mu.weight + d_logvar * p.logvar.weight).array() * relu_mask(f.a2).array()).matrix();
  accumulate(grads.enc2, d_a2, f.h1);
  RowMatrix<T> d_a1 = ((d_a2 * p.enc2.weight).array() * relu_mask(f.a1).array()).matrix();
  accumulate(grads.enc1, d_a1, x);
}

// ---------------------------------------------------------------------------
// Model

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> learning_rate;
  int stopped_epoch = 0;
  int best_epoch = 0;
};

template <typename T>
class BasicVae {
 public:
  BasicVae() = default;

  /// Kaiming-uniform (fan-in) weights and zero biases from the seeded RNG.
  BasicVae(const VaeLayout& layout, std::uint64_t seed) : layout_(layout), params_(layout), seed_(seed) {
    std::mt19937_64 rng(seed);
    params_.for_each_layer([&](std::string_view, Dense<T>& d) {
      const double bound = std::sqrt(6.0 / static_cast<double>(d.weight.cols()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < d.weight.size(); ++i) d.weight.data()[i] = static_cast<T>(dist(rng));
      d.bias.setZero();
    });
  }

  const VaeLayout& layout() const { return layout_; }
  const VaeParameters<T>& parameters() const { return params_; }
  VaeParameters<T>& parameters() { return params_; }
  std::uint64_t seed() const { return seed_; }
  bool fitted() const { return fitted_; }
  void mark_fitted(bool f = true) { fitted_ = f; }
  const TrainConfig& config() const { return config_; }
  void set_config(const TrainConfig& cfg) { config_ = cfg; }

  /// Rectified deterministic code ReLU(mu(x)), shape rows x c'.
  RowMatrix<T> encode(const RowMatrix<T>& x) const {
    require(fitted_, ErrorCode::NotFitted, "VAE has not been fitted");
    require(static_cast<std::size_t>(x.cols()) == layout_.input, ErrorCode::ShapeMismatch,
            "expected " + std::to_string(layout_.input) + " columns, got " + std::to_string(x.cols()));
    VaeForward<T> f;
    encode_hidden(params_, x, f);
    return detail::relu(f.mu);
  }

  RowMatrix<T> decode(const RowMatrix<T>& z) const {
    require(fitted_, ErrorCode::NotFitted, "VAE has not been fitted");
    require(static_cast<std::size_t>(z.cols()) == layout_.latent, ErrorCode::ShapeMismatch,
            "expected latent width " + std::to_string(layout_.latent) + ", got " + std::to_string(z.cols()));
    VaeForward<T> f;
    decode_into(params_, z, f);
    return f.x_hat;
  }

  /// Weight matrix of the mean head (c' x ceil(c/4)).
  const RowMatrix<T>& bottleneck_weights() const { return params_.mu.weight; }

  /// Jacobian d mu / d x (c' x c) of the encoder mean at `x0`; the linear
  /// map the encoder applies to small displacements around that point.
  RowMatrix<T> mean_jacobian(const Vector<T>& x0) const {
    require(static_cast<std::size_t>(x0.size()) == layout_.input, ErrorCode::ShapeMismatch,
            "jacobian point has wrong length");
    const RowMatrix<T> row = x0.transpose();
    VaeForward<T> f;
    encode_hidden(params_, row, f);
    const Vector<T> m1 = detail::relu_mask(f.a1).row(0).transpose();
    const Vector<T> m2 = detail::relu_mask(f.a2).row(0).transpose();
    const RowMatrix<T> j1 = m1.asDiagonal() * params_.enc1.weight;         // h1 x c
    const RowMatrix<T> j2 = m2.asDiagonal() * (params_.enc2.weight * j1);  // h2 x c
    return params_.mu.weight * j2;                                          // c' x c
  }

 private:
  VaeLayout layout_{};
  VaeParameters<T> params_{};
  TrainConfig config_{};
  std::uint64_t seed_ = 0;
  bool fitted_ = false;
};

using VaeModel = BasicVae<float>;

// ---------------------------------------------------------------------------
// Training

template <typename T>
class AdamState {
 public:
  explicit AdamState(const VaeLayout& layout) : m_(layout), v_(layout) {}

  void step(VaeParameters<T>& params, VaeParameters<T>& grads, const TrainConfig& cfg, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    std::vector<std::pair<T*, std::size_t>> p, g, m, v;
    params.for_each_buffer([&](T* d, std::size_t n) { p.emplace_back(d, n); });
    grads.for_each_buffer([&](T* d, std::size_t n) { g.emplace_back(d, n); });
    m_.for_each_buffer([&](T* d, std::size_t n) { m.emplace_back(d, n); });
    v_.for_each_buffer([&](T* d, std::size_t n) { v.emplace_back(d, n); });
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    for (std::size_t k = 0; k < p.size(); ++k) {
      for (std::size_t i = 0; i < p[k].second; ++i) {
        const T gi = g[k].first[i];
        T& mi = m[k].first[i];
        T& vi = v[k].first[i];
        mi = b1 * mi + (T(1) - b1) * gi;
        vi = b2 * vi + (T(1) - b2) * gi * gi;
        const double mhat = static_cast<double>(mi) / c1;
        const double vhat = static_cast<double>(vi) / c2;
        p[k].first[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
      }
    }
  }

 private:
  VaeParameters<T> m_, v_;
  long long t_ = 0;
};

template <typename T>
void zero_gradients(VaeParameters<T>& grads) {
  grads.for_each_buffer([](T* d, std::size_t n) { std::fill(d, d + n, T(0)); });
}

template <typename T>
RowMatrix<T> gather_rows(const RowMatrix<T>& x, const std::vector<Eigen::Index>& idx, std::size_t begin,
                         std::size_t end) {
  RowMatrix<T> out(static_cast<Eigen::Index>(end - begin), x.cols());
  for (std::size_t r = begin; r < end; ++r) out.row(static_cast<Eigen::Index>(r - begin)) = x.row(idx[r]);
  return out;
}

/// Deterministic validation objective: decoder fed ReLU(mu), KL from (mu, logvar).
template <typename T>
double validation_loss(const VaeParameters<T>& p, const RowMatrix<T>& x, double beta_kl) {
  const auto f = vae_forward<T>(p, x, nullptr);
  return elbo_loss<T>(x, f.x_hat, f.mu, f.logvar, beta_kl).total;
}

template <typename T>
struct FitResult {
  BasicVae<T> model;
  TrainHistory history;
};

/// Trains a VAE on the normalized matrix `xn` (entries in [0,1]).
/// Rows are shuffled once with the seed; the last val_fraction of them form
/// the validation set. Returns the parameters of the best validation epoch.
template <typename T>
FitResult<T> vae_fit(const RowMatrix<T>& xn, std::size_t c_prime, const TrainConfig& cfg) {
  cfg.check();
  const auto rows = static_cast<std::size_t>(xn.rows());
  const auto c = static_cast<std::size_t>(xn.cols());
  require(rows >= static_cast<std::size_t>(cfg.batch_size), ErrorCode::TooFewRows,
          std::to_string(rows) + " rows is fewer than batch size " + std::to_string(cfg.batch_size));
  require(c_prime >= 1 && c_prime < c, ErrorCode::InvalidArgument,
          "need 1 <= c' < c (c'=" + std::to_string(c_prime) + ", c=" + std::to_string(c) + ")");
  require(xn.allFinite(), ErrorCode::InvalidArgument, "training matrix has non-finite entries");

  std::mt19937_64 rng(cfg.seed);
  BasicVae<T> model(VaeLayout::for_channels(c, c_prime), rng());
  model.set_config(cfg);

  std::vector<Eigen::Index> order(rows);
  for (std::size_t i = 0; i < rows; ++i) order[i] = static_cast<Eigen::Index>(i);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(rows) * cfg.val_fraction));
  n_val = std::clamp<std::size_t>(n_val, 1, rows - 1);
  const std::size_t n_train = rows - n_val;
  const RowMatrix<T> val = gather_rows(xn, order, n_train, rows);
  std::vector<Eigen::Index> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));

  AdamState<T> adam(model.layout());
  VaeParameters<T> grads(model.layout());
  VaeParameters<T> best = model.parameters();
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  TrainHistory history;
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs_max; ++epoch) {
    const double lr = cosine_lr(cfg.lr_initial, epoch, cfg.epochs_max);
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t end = std::min(n_train, start + batch);
      const RowMatrix<T> xb = gather_rows(xn, train_idx, start, end);
      RowMatrix<T> eps(xb.rows(), static_cast<Eigen::Index>(c_prime));
      for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<T>(normal(rng));
      const auto f = vae_forward<T>(model.parameters(), xb, &eps);
      const auto terms = elbo_loss<T>(xb, f.x_hat, f.mu, f.logvar, cfg.kl_weight);
      require(std::isfinite(terms.total), ErrorCode::NonFiniteLoss,
              "training loss diverged at epoch " + std::to_string(epoch + 1));
      zero_gradients(grads);
      vae_backward<T>(model.parameters(), f, xb, &eps, cfg.kl_weight, grads);
      adam.step(model.parameters(), grads, cfg, lr);
      loss_sum += terms.total;
      ++batches;
    }
    const double val_loss = validation_loss<T>(model.parameters(), val, cfg.kl_weight);
    require(std::isfinite(val_loss), ErrorCode::NonFiniteLoss,
            "validation loss diverged at epoch " + std::to_string(epoch + 1));
    history.train_loss.push_back(loss_sum / static_cast<double>(batches));
    history.val_loss.push_back(val_loss);
    history.learning_rate.push_back(lr);
    history.stopped_epoch = epoch + 1;

    if (val_loss < best_val) {
      best_val = val_loss;
      best = model.parameters();
      history.best_epoch = epoch + 1;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  model.parameters() = best;
  require(model.parameters().all_finite(), ErrorCode::NonFiniteLoss, "parameters are not finite");
  model.mark_fitted();
  return {std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs_max", cfg.epochs_max},   {"lr_initial", cfg.lr_initial},
          {"batch_size", cfg.batch_size},   {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},             {"adam_eps", cfg.adam_eps},
          {"kl_weight", cfg.kl_weight},     {"val_fraction", cfg.val_fraction},
          {"early_stop_patience", cfg.early_stop_patience}, {"seed", cfg.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.epochs_max = j.at("epochs_max").get<int>();
  cfg.lr_initial = j.at("lr_initial").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.beta1 = j.at("beta1").get<double>();
  cfg.beta2 = j.at("beta2").get<double>();
  cfg.adam_eps = j.at("adam_eps").get<double>();
  cfg.kl_weight = j.at("kl_weight").get<double>();
  cfg.val_fraction = j.at("val_fraction").get<double>();
  cfg.early_stop_patience = j.at("early_stop_patience").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

inline void save_checkpoint(const VaeModel& model, const std::filesystem::path& path) {
  require(model.fitted(), ErrorCode::NotFitted, "refusing to save an unfitted model");
  container::PayloadWriter payload;
  nlohmann::json layers = nlohmann::json::object();
  model.parameters().for_each_layer([&](std::string_view name, const Dense<float>& d) {
    layers[std::string(name)] = {
        {"shape", {d.weight.rows(), d.weight.cols()}},
        {"weight", payload.append({d.weight.data(), static_cast<std::size_t>(d.weight.size())})},
        {"bias", payload.append({d.bias.data(), static_cast<std::size_t>(d.bias.size())})},
    };
  });
  const auto& l = model.layout();
  nlohmann::json index{
      {"format_version", 1},
      {"layout", {{"input", l.input}, {"hidden1", l.hidden1}, {"hidden2", l.hidden2}, {"latent", l.latent}}},
      {"layers", layers},
      {"config", to_json(model.config())},
      {"seed", model.seed()},
  };
  container::write_file(path, container::kCheckpointMagic, index, payload.payload());
}

inline VaeModel load_checkpoint(const std::filesystem::path& path) {
  const auto contents = container::read_file(path, container::kCheckpointMagic);
  try {
    const auto& idx = contents.index;
    const auto& jl = idx.at("layout");
    const VaeLayout layout{jl.at("input").get<std::size_t>(), jl.at("hidden1").get<std::size_t>(),
                           jl.at("hidden2").get<std::size_t>(), jl.at("latent").get<std::size_t>()};
    VaeModel model(layout, idx.at("seed").get<std::uint64_t>());
    model.set_config(train_config_from_json(idx.at("config")));
    model.parameters().for_each_layer([&](std::string_view name, Dense<float>& d) {
      const auto& entry = idx.at("layers").at(std::string(name));
      const auto w = contents.section(entry.at("weight"));
      const auto b = contents.section(entry.at("bias"));
      require(w.size() == static_cast<std::size_t>(d.weight.size()) &&
                  b.size() == static_cast<std::size_t>(d.bias.size()),
              ErrorCode::ShapeMismatch, "checkpoint layer '" + std::string(name) + "' has the wrong size");
      std::copy(w.begin(), w.end(), d.weight.data());
      std::copy(b.begin(), b.end(), d.bias.data());
    });
    require(model.parameters().all_finite(), ErrorCode::ShapeInconsistent, "checkpoint holds non-finite values");
    model.mark_fitted();
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::TruncatedPayload, std::string("malformed checkpoint index: ") + e.what());
  }
}

}  // namespace trance
