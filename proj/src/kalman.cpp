#include <cmath>
#include <stdexcept>

#include "aoilab/baselines.hpp"

namespace aoilab::baselines {

double asymmetry(const Eigen::MatrixXd& p) { return (p - p.transpose()).cwiseAbs().maxCoeff(); }

double min_eigenvalue(const Eigen::MatrixXd& p) {
  const Eigen::MatrixXd sym = 0.5 * (p + p.transpose());
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}

namespace {

void symmetrize(Eigen::MatrixXd& p) { p = 0.5 * (p + p.transpose()).eval(); }

// S with 1e-9 I added when it is numerically singular.
Eigen::LDLT<Eigen::MatrixXd> factor_innovation(Eigen::MatrixXd& s, FilterDiagnostics& d) {
  if (min_eigenvalue(s) < 1e-12) {
    s += 1e-9 * Eigen::MatrixXd::Identity(s.rows(), s.cols());
    ++d.regularized_innovations;
  }
  return s.ldlt();
}

}  // namespace

// ---------------------------------------------------------------------------

LinearGaussianModel::LinearGaussianModel(const TvkfConfig& cfg)
    : a_(dynamics::linear_transition(cfg.dt)),
      b_(dynamics::linear_input(cfg.dt)),
      q_(cfg.q * Eigen::Matrix4d::Identity()),
      r_(cfg.r * Eigen::Matrix4d::Identity()) {
  if (!(cfg.q >= 0.0) || !(cfg.r > 0.0)) {
    throw std::invalid_argument("TvkfConfig: need q >= 0 and r > 0");
  }
}

void LinearGaussianModel::predict(KalmanBelief& b, const Eigen::VectorXd& u,
                                  FilterDiagnostics&) const {
  b.mean = a_ * b.mean + b_ * u;
  b.cov = a_ * b.cov * a_.transpose() + q_;
  symmetrize(b.cov);
  ++b.slot;
}

Innovation LinearGaussianModel::update(KalmanBelief& b, const Eigen::VectorXd& z,
                                       FilterDiagnostics& d) const {
  Innovation inn;
  inn.nu = z - b.mean;
  inn.s = b.cov + r_;
  const auto ldlt = factor_innovation(inn.s, d);
  const Eigen::MatrixXd k = ldlt.solve(b.cov).transpose();  // P S^-1, S and P symmetric
  const Eigen::MatrixXd i_k = Eigen::MatrixXd::Identity(4, 4) - k;
  b.mean += k * inn.nu;
  b.cov = i_k * b.cov * i_k.transpose() + k * r_ * k.transpose();
  symmetrize(b.cov);
  return inn;
}

// ---------------------------------------------------------------------------

void UkfConfig::validate(int n) const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("UkfConfig: alpha must be in (0, 1]");
  if (q.rows() != n || q.cols() != n || r.rows() != n || r.cols() != n) {
    throw std::invalid_argument("UkfConfig: noise matrices have the wrong size");
  }
  if (n + alpha * alpha * (n + kappa) - n <= 0.0) {
    throw std::invalid_argument("UkfConfig: n + lambda must be positive");
  }
  if (!(max_variance > 0.0)) throw std::invalid_argument("UkfConfig: max_variance must be positive");
}

SigmaWeights sigma_weights(int n, const UkfConfig& cfg) {
  SigmaWeights w;
  w.lambda = cfg.alpha * cfg.alpha * (n + cfg.kappa) - n;
  const double c = n + w.lambda;
  w.mean = Eigen::VectorXd::Constant(2 * n + 1, 0.5 / c);
  w.cov = w.mean;
  // The centre weight closes the sum exactly.
  w.mean(0) = 1.0 - 2.0 * n * (0.5 / c);
  w.cov(0) = w.lambda / c + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
  return w;
}

UnscentedModel::UnscentedModel(int n, int n_u, Transition f, UkfConfig cfg)
    : n_(n), n_u_(n_u), f_(std::move(f)), cfg_(std::move(cfg)) {
  cfg_.validate(n_);
  w_ = sigma_weights(n_, cfg_);
}

Eigen::MatrixXd UnscentedModel::sigma_points(const KalmanBelief& b, FilterDiagnostics& d) const {
  const double c = n_ + w_.lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(c * b.cov);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (b.cov + b.cov.transpose()));
    const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(1e-9);
    llt.compute(c * es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose());
    ++d.clipped_covariances;
  }
  const Eigen::MatrixXd l = llt.matrixL();
  Eigen::MatrixXd x(n_, 2 * n_ + 1);
  x.col(0) = b.mean;
  for (int i = 0; i < n_; ++i) {
    x.col(1 + i) = b.mean + l.col(i);
    x.col(1 + n_ + i) = b.mean - l.col(i);
  }
  return x;
}

namespace {

// Weighted mean and deviations about it, formed from offsets to the centre
// point: the centre weight is large and negative for small alpha, so
// summing raw points would cancel catastrophically.
struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd dev;
};

Moments moments(const Eigen::MatrixXd& pts, const SigmaWeights& w) {
  const Eigen::MatrixXd off = pts.colwise() - pts.col(0);
  Moments m;
  const Eigen::VectorXd shift = off.rightCols(off.cols() - 1) * w.mean.tail(w.mean.size() - 1);
  m.mean = pts.col(0) + shift;
  m.dev = off.colwise() - shift;
  return m;
}

}  // namespace

void UnscentedModel::predict(KalmanBelief& b, const Eigen::VectorXd& u,
                             FilterDiagnostics& d) const {
  const Eigen::MatrixXd x = sigma_points(b, d);
  Eigen::MatrixXd y(n_, x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) y.col(i) = f_(x.col(i), u);
  const Moments m = moments(y, w_);
  b.mean = m.mean;
  b.cov = m.dev * w_.cov.asDiagonal() * m.dev.transpose() + cfg_.q;
  symmetrize(b.cov);
  if (std::isfinite(cfg_.max_variance)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.cov);
    if (es.eigenvalues().maxCoeff() > cfg_.max_variance) {
      const Eigen::VectorXd ev = es.eigenvalues().cwiseMin(cfg_.max_variance);
      b.cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      symmetrize(b.cov);
      ++d.capped_covariances;
    }
  }
  ++b.slot;
}

Innovation UnscentedModel::update(KalmanBelief& b, const Eigen::VectorXd& z,
                                  FilterDiagnostics& d) const {
  const Eigen::MatrixXd x = sigma_points(b, d);
  const Moments mx = moments(x, w_);
  const Moments& mz = mx;  // the measurement is the state itself
  Innovation inn;
  inn.nu = z - mz.mean;
  inn.s = mz.dev * w_.cov.asDiagonal() * mz.dev.transpose() + cfg_.r;
  const Eigen::MatrixXd pxz = mx.dev * w_.cov.asDiagonal() * mz.dev.transpose();
  const auto ldlt = factor_innovation(inn.s, d);
  const Eigen::MatrixXd k = ldlt.solve(pxz.transpose()).transpose();
  b.mean += k * inn.nu;
  b.cov -= k * inn.s * k.transpose();
  symmetrize(b.cov);
  return inn;
}

std::shared_ptr<UnscentedModel> linear_ukf_model(const TvkfConfig& cfg) {
  const Eigen::Matrix4d a = dynamics::linear_transition(cfg.dt);
  const Eigen::Matrix<double, 4, 2> bm = dynamics::linear_input(cfg.dt);
  UkfConfig uc;
  uc.q = cfg.q * Eigen::MatrixXd::Identity(4, 4);
  uc.r = cfg.r * Eigen::MatrixXd::Identity(4, 4);
  return std::make_shared<UnscentedModel>(
      4, 2, [a, bm](const Eigen::VectorXd& s, const Eigen::VectorXd& u) -> Eigen::VectorXd {
        return a * s + bm * u;
      },
      uc);
}

std::shared_ptr<UnscentedModel> cartpole_ukf_model(const dynamics::CartpoleParams& params,
                                                   ControlMode control_mode, double q_floor,
                                                   double r, double max_variance) {
  params.validate();
  UkfConfig uc;
  uc.q = q_floor * Eigen::MatrixXd::Identity(3, 3);
  uc.r = r * Eigen::MatrixXd::Identity(3, 3);
  uc.max_variance = max_variance;
  if (control_mode == ControlMode::networked) {
    const double mt = params.mc + params.mp;
    const double th_f = -1.0 / (mt * params.l * (4.0 / 3.0 - params.mp / mt));
    const double x_f = 1.0 / mt - params.mp * params.l * th_f / mt;
    const Eigen::Vector3d j(params.dt * params.dt * th_f, params.dt * th_f, params.dt * x_f);
    uc.q += 2.0 * params.force_mag * params.force_mag * j * j.transpose();
  }
  return std::make_shared<UnscentedModel>(
      3, 1,
      [params](const Eigen::VectorXd& s, const Eigen::VectorXd& u) -> Eigen::VectorXd {
        const dynamics::CartpoleState next =
            dynamics::step_cartpole({0.0, s(2), s(0), s(1)}, u(0), params);
        return Eigen::Vector3d(next.theta, next.theta_dot, next.x_dot);
      },
      uc);
}

}  // namespace aoilab::baselines
