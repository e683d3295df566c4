#include "gsrecon/spline_basis.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "gsrecon/error.hpp"

namespace gsr {

SplineBasis::SplineBasis(int m, int degree, bool end_constraint)
    : m_(m), degree_(degree), end_constraint_(end_constraint) {
  if (degree < 0) throw Error(ErrorKind::Argument, "spline degree must be nonnegative");
  if (m < degree + 1)
    throw Error(ErrorKind::Argument, fmt::format("basis size {} too small for degree {}", m, degree));
  const int interior = m - degree - 1;
  knots_.assign(static_cast<std::size_t>(degree + 1), 0.0);
  for (int i = 1; i <= interior; ++i) knots_.push_back(static_cast<double>(i) / (interior + 1));
  knots_.insert(knots_.end(), static_cast<std::size_t>(degree + 1), 1.0);
}

int SplineBasis::find_span(double x) const {
  if (x >= 1.0) return m_ - 1;
  if (x <= 0.0) return degree_;
  const auto it = std::upper_bound(knots_.begin() + degree_, knots_.begin() + m_ + 1, x);
  return static_cast<int>(it - knots_.begin()) - 1;
}

// Piegl & Tiller A2.2: the degree+1 nonzero functions on `span`
void SplineBasis::basis_functions(int span, double x, double* out) const {
  const int p = degree_;
  std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
  out[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[static_cast<std::size_t>(j)] = x - knots_[static_cast<std::size_t>(span + 1 - j)];
    right[static_cast<std::size_t>(j)] = knots_[static_cast<std::size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)]);
      out[r] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
      saved = left[static_cast<std::size_t>(j - r)] * temp;
    }
    out[j] = saved;
  }
}

Eigen::VectorXd SplineBasis::eval(double x, bool* clamped) const {
  const bool out_of_range = !(x >= 0.0 && x <= 1.0);
  if (clamped) *clamped = out_of_range;
  if (out_of_range) x = std::isnan(x) ? 0.0 : std::clamp(x, 0.0, 1.0);
  const int span = find_span(x);
  std::array<double, 16> local{};
  std::vector<double> heap;
  double* buf = local.data();
  if (degree_ + 1 > static_cast<int>(local.size())) {
    heap.resize(static_cast<std::size_t>(degree_ + 1));
    buf = heap.data();
  }
  basis_functions(span, x, buf);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m_);
  for (int j = 0; j <= degree_; ++j) v[span - degree_ + j] = buf[j];
  return v;
}

// Piegl & Tiller A2.3
Eigen::MatrixXd SplineBasis::derivatives(double x, int order) const {
  x = std::clamp(x, 0.0, 1.0);
  const int p = degree_;
  const int span = find_span(x);
  const auto P = static_cast<std::size_t>(p + 1);
  std::vector<std::vector<double>> ndu(P, std::vector<double>(P, 0.0));
  std::vector<double> left(P), right(P);
  ndu[0][0] = 1.0;
  for (std::size_t j = 1; j < P; ++j) {
    left[j] = x - knots_[static_cast<std::size_t>(span) + 1 - j];
    right[j] = knots_[static_cast<std::size_t>(span) + j] - x;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  Eigen::MatrixXd ders = Eigen::MatrixXd::Zero(order + 1, m_);
  std::vector<std::vector<double>> local(static_cast<std::size_t>(order + 1), std::vector<double>(P, 0.0));
  for (std::size_t j = 0; j < P; ++j) local[0][j] = ndu[j][p];
  std::vector<std::vector<double>> a(2, std::vector<double>(P, 0.0));
  for (int r = 0; r <= p; ++r) {
    std::size_t s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= std::min(order, p); ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[static_cast<std::size_t>(pk + 1)][static_cast<std::size_t>(rk)];
        d = a[s2][0] * ndu[static_cast<std::size_t>(rk)][static_cast<std::size_t>(pk)];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][static_cast<std::size_t>(j)] =
            (a[s1][static_cast<std::size_t>(j)] - a[s1][static_cast<std::size_t>(j - 1)]) /
            ndu[static_cast<std::size_t>(pk + 1)][static_cast<std::size_t>(rk + j)];
        d += a[s2][static_cast<std::size_t>(j)] * ndu[static_cast<std::size_t>(rk + j)][static_cast<std::size_t>(pk)];
      }
      if (r <= pk) {
        a[s2][static_cast<std::size_t>(k)] =
            -a[s1][static_cast<std::size_t>(k - 1)] / ndu[static_cast<std::size_t>(pk + 1)][static_cast<std::size_t>(r)];
        d += a[s2][static_cast<std::size_t>(k)] * ndu[static_cast<std::size_t>(r)][static_cast<std::size_t>(pk)];
      }
      local[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)] = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= std::min(order, p); ++k) {
    for (std::size_t j = 0; j < P; ++j) local[static_cast<std::size_t>(k)][j] *= factor;
    factor *= (p - k);
  }
  for (int k = 0; k <= order; ++k)
    for (int j = 0; j <= p; ++j) ders(k, span - p + j) = local[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
  return ders;
}

std::vector<double> SplineBasis::greville() const {
  std::vector<double> g(static_cast<std::size_t>(m_));
  for (int i = 0; i < m_; ++i) {
    double s = 0.0;
    for (int k = 1; k <= degree_; ++k) s += knots_[static_cast<std::size_t>(i + k)];
    g[static_cast<std::size_t>(i)] = degree_ > 0 ? s / degree_ : knots_[static_cast<std::size_t>(i)];
  }
  return g;
}

std::vector<double> SplineBasis::breakpoints() const {
  std::vector<double> b(knots_.begin(), knots_.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

namespace {

// Gauss–Legendre nodes/weights on [-1, 1] via Newton on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<std::size_t>(n), 0.0);
  w.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    x[static_cast<std::size_t>(i)] = t;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
}

}  // namespace

Eigen::MatrixXd regularization_matrix(const SplineBasis& basis) {
  if (basis.degree() < 2)
    throw Error(ErrorKind::Argument, "unsupported basis: curvature penalty needs degree >= 2");
  const int m = basis.size();
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(m, m);
  // integrand is a polynomial of degree 2(p-2) per span
  const int npts = std::max(1, basis.degree() - 1);
  std::vector<double> gx, gw;
  gauss_legendre(npts, gx, gw);
  const auto bp = basis.breakpoints();
  for (std::size_t s = 0; s + 1 < bp.size(); ++s) {
    const double a = bp[s], b = bp[s + 1];
    const double half = 0.5 * (b - a);
    for (std::size_t q = 0; q < gx.size(); ++q) {
      const double x = a + half * (gx[q] + 1.0);
      const Eigen::VectorXd d2 = basis.derivatives(x, 2).row(2).transpose();
      lambda.noalias() += (gw[q] * half) * d2 * d2.transpose();
    }
  }
  // exact symmetry
  return 0.5 * (lambda + lambda.transpose());
}

Eigen::VectorXd ProfileExpansion::stacked() const {
  Eigen::VectorXd u(a.size() + b.size());
  u << a, b;
  return u;
}

ProfileExpansion ProfileExpansion::from_stacked(const Eigen::VectorXd& u, int m) {
  if (u.size() != 2 * m) throw Error(ErrorKind::Argument, "stacked coefficient vector has wrong length");
  ProfileExpansion p;
  p.a = u.head(m);
  p.b = u.tail(m);
  return p;
}

double eval_coefficients(const SplineBasis& basis, const Eigen::VectorXd& coeffs, double x) {
  if (coeffs.size() != basis.size()) throw Error(ErrorKind::Argument, "coefficient vector has wrong length");
  return basis.eval(x).dot(coeffs);
}

double eval_expansion(const SplineBasis& basis, const ProfileExpansion& p, ProfileKind which, double x) {
  const Eigen::VectorXd* c = nullptr;
  switch (which) {
    case ProfileKind::A: c = &p.a; break;
    case ProfileKind::B: c = &p.b; break;
    case ProfileKind::Ne:
      if (!p.ne) throw Error(ErrorKind::State, "electron density coefficients are not available");
      c = &*p.ne;
      break;
  }
  if (c->size() != basis.size()) throw Error(ErrorKind::Argument, "coefficient vector has wrong length");
  const Eigen::VectorXd phi = basis.eval(x);
  double v = phi.dot(*c);
  if (which != ProfileKind::Ne && basis.end_constraint()) v -= phi[basis.size() - 1] * (*c)[basis.size() - 1];
  return v;
}

Eigen::VectorXd fit_coefficients(const SplineBasis& basis, const std::function<double(double)>& f,
                                 bool vanish_at_one) {
  const int m = basis.size();
  const int samples = 40 * m + 1;
  const int free = vanish_at_one ? m - 1 : m;
  Eigen::MatrixXd design(samples, free);
  Eigen::VectorXd rhs(samples);
  for (int s = 0; s < samples; ++s) {
    const double x = static_cast<double>(s) / (samples - 1);
    design.row(s) = basis.eval(x).head(free).transpose();
    rhs[s] = f(x);
  }
  Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
  c.head(free) = design.colPivHouseholderQr().solve(rhs);
  return c;
}

Eigen::VectorXd affine_coefficients(const SplineBasis& basis, double c0, double c1) {
  const auto g = basis.greville();
  Eigen::VectorXd c(basis.size());
  for (int i = 0; i < basis.size(); ++i) c[i] = c0 + c1 * g[static_cast<std::size_t>(i)];
  return c;
}

}  // namespace gsr
