#include "gsrecon/inverse.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <fmt/format.h>

namespace gsr {

void RegularizationConfig::validate() const {
  if (!(eps > 0.0)) throw Error(ErrorKind::Validation, "eps must be positive");
  if (!(eps_ne > 0.0)) throw Error(ErrorKind::Validation, "eps_ne must be positive");
  if (!(ne_scale > 0.0)) throw Error(ErrorKind::Validation, "density scale must be positive");
}

double default_eps(bool noisy, bool use_internal) {
  if (use_internal) return 5e-2;
  return noisy ? 1e-1 : 1e-5;
}

namespace {

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const char* what) {
  if (!a.allFinite() || !b.allFinite())
    throw Error(ErrorKind::State, fmt::format("{} normal system holds non-finite values", what));
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::Regularization, fmt::format("{} normal matrix is singular", what));
  // LLT accepts nearly singular matrices; reject those by the pivot ratio.
  const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
  if (diag.minCoeff() <= 1e-13 * diag.maxCoeff())
    throw Error(ErrorKind::Regularization, fmt::format("{} normal matrix is numerically singular", what));
  return llt.solve(b);
}

// Indices kept after eliminating the constrained last coefficient of A and B.
std::vector<Eigen::Index> free_indices(int m, bool end_constraint) {
  std::vector<Eigen::Index> idx;
  const int keep = end_constraint ? m - 1 : m;
  for (int i = 0; i < keep; ++i) idx.push_back(i);
  for (int i = 0; i < keep; ++i) idx.push_back(m + i);
  return idx;
}

Eigen::MatrixXd block_lambda(const Eigen::MatrixXd& lambda_reg) {
  const auto m = lambda_reg.rows();
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  full.topLeftCorner(m, m) = lambda_reg;
  full.bottomRightCorner(m, m) = lambda_reg;
  return full;
}

}  // namespace

Eigen::VectorXd identify_ne(const Eigen::MatrixXd& b_int, const Eigen::VectorXd& gamma, const Eigen::VectorXd& sqrt_w,
                            double eps_ne, const Eigen::MatrixXd& lambda_reg, double alpha_scale) {
  if (b_int.rows() != gamma.size() || sqrt_w.size() != gamma.size())
    throw Error(ErrorKind::Argument, "interferometry matrix, data and weights disagree in size");
  if (b_int.cols() != lambda_reg.rows()) throw Error(ErrorKind::Argument, "basis size mismatch");
  if (!(alpha_scale > 0.0)) throw Error(ErrorKind::Argument, "density scale must be positive");
  if (eps_ne < 0.0) throw Error(ErrorKind::Argument, "eps_ne must be nonnegative");
  const Eigen::MatrixXd db = sqrt_w.asDiagonal() * b_int;
  const Eigen::VectorXd dg = sqrt_w.cwiseProduct(gamma);
  const Eigen::MatrixXd a = alpha_scale * alpha_scale * db.transpose() * db + eps_ne * lambda_reg;
  const Eigen::VectorXd rhs = alpha_scale * db.transpose() * dg;
  return solve_spd(a, rhs, "density");
}

ABSystem build_ab_system(const Eigen::MatrixXd& c, const Eigen::MatrixXd& kinv_y, const Eigen::VectorXd& kinv_g,
                         const Eigen::VectorXd& d, const Eigen::VectorXd& sqrt_w) {
  if (c.cols() != kinv_y.rows() || kinv_g.size() != c.cols() || d.size() != c.rows() || sqrt_w.size() != c.rows())
    throw Error(ErrorKind::Argument, "observation system sizes disagree");
  ABSystem sys;
  sys.e = sqrt_w.asDiagonal() * (c * kinv_y);
  sys.f = sqrt_w.cwiseProduct(d - c * kinv_g);
  return sys;
}

Eigen::VectorXd identify_ab(const ABSystem& sys, double eps, const Eigen::MatrixXd& lambda_reg, bool end_constraint) {
  const auto m = lambda_reg.rows();
  if (sys.e.cols() != 2 * m) throw Error(ErrorKind::Argument, "source matrix does not match the basis");
  if (eps < 0.0) throw Error(ErrorKind::Argument, "eps must be nonnegative");
  if (!sys.e.allFinite()) throw Error(ErrorKind::State, "observation matrix holds non-finite values (plasma lost?)");
  const auto idx = free_indices(static_cast<int>(m), end_constraint);
  const Eigen::MatrixXd e = sys.e(Eigen::all, idx);
  const Eigen::MatrixXd l = block_lambda(lambda_reg)(idx, idx);
  const Eigen::VectorXd ur = solve_spd(e.transpose() * e + eps * l, e.transpose() * sys.f, "profile");
  Eigen::VectorXd u = Eigen::VectorXd::Zero(2 * m);
  u(idx) = ur;
  return u;
}

double ab_objective(const ABSystem& sys, double eps, const Eigen::MatrixXd& lambda_reg, const Eigen::VectorXd& u) {
  const Eigen::VectorXd r = sys.e * u - sys.f;
  return 0.5 * r.squaredNorm() + 0.5 * eps * u.dot(block_lambda(lambda_reg) * u);
}

RescaledDofs rescale_dofs(const Eigen::VectorXd& u, double lambda, int m) {
  RescaledDofs out{u, lambda, false};
  const double mhat = u.head(m).cwiseAbs().maxCoeff();
  if (!(mhat > 0.0)) {
    out.skipped = true;
    return out;
  }
  out.u = u / mhat;
  out.lambda = lambda * mhat;
  return out;
}

ObservationSetup make_observation_setup(const FemSystem& fem, const MeasurementSet& ms,
                                        const std::optional<WeightConfig>& weights) {
  const Mesh& mesh = fem.mesh();
  ObservationSetup s;
  for (const auto& c : ms.chords) s.chords.push_back(make_chord(mesh, c.start, c.end));
  std::vector<Point> pts;
  for (const auto& v : ms.g_N) pts.push_back(v.p);
  s.c0 = build_neumann_observer(mesh, pts);
  s.weights = weights ? *weights : default_weights(ms.Ip, mesh.boundary_length(), ms.g_N.size(), ms.chords.size());
  s.weights.validate();
  const auto gd = dirichlet_values(mesh, ms);
  s.g = fem.dirichlet(gd);
  s.kinv_g = fem.lu().solve(s.g);
  return s;
}

namespace {

bool plasma_failure(ErrorKind k) {
  switch (k) {
    case ErrorKind::NoPlasma:
    case ErrorKind::DegeneratePlasma:
    case ErrorKind::EmptySource:
    case ErrorKind::DivergentLambda:
    case ErrorKind::Regularization:
    case ErrorKind::State:
      return true;
    default:
      return false;
  }
}

}  // namespace

ReconstructionResult reconstruct(const FemSystem& fem, const MeasurementSet& ms, const RegularizationConfig& reg,
                                 const ReconstructOptions& opt) {
  ms.validate();
  reg.validate();
  if (!(opt.r0 > 0.0)) throw Error(ErrorKind::Argument, "r0 must be positive");
  if (!(opt.tol > 0.0) || opt.max_iter < 1) throw Error(ErrorKind::Argument, "tol and max_iter must be positive");
  if (opt.use_internal && ms.chords.empty())
    throw Error(ErrorKind::Validation, "internal measurements requested but the set has no chords");
  const Mesh& mesh = fem.mesh();
  const SplineBasis& basis = opt.basis;
  const int m = basis.size();

  ReconstructionResult res;
  Equilibrium& eq = res.equilibrium;
  eq.basis = basis;
  eq.machine.r0 = opt.r0;
  eq.machine.B0 = ms.B0;
  eq.machine.Ip = ms.Ip;
  eq.machine.mu0 = fem.mu0();
  if (ms.Ip == 0.0) {
    res.error = ErrorKind::NoPlasma;
    res.message = "measured plasma current is zero";
    return res;
  }

  const ObservationSetup setup = make_observation_setup(fem, ms, opt.weights);
  const Eigen::MatrixXd lreg = regularization_matrix(basis);
  const std::size_t nmag = ms.g_N.size(), nc = opt.use_internal ? ms.chords.size() : 0;
  const Eigen::MatrixXd c0 = Eigen::MatrixXd(setup.c0);

  Eigen::VectorXd d(static_cast<Eigen::Index>(nmag + nc)), sqrt_w(d.size());
  for (std::size_t k = 0; k < nmag; ++k) {
    d[static_cast<Eigen::Index>(k)] = ms.g_N[k].value;
    sqrt_w[static_cast<Eigen::Index>(k)] = setup.weights.w_mag();
  }
  Eigen::VectorXd gamma(static_cast<Eigen::Index>(nc)), w_inter(gamma.size());
  for (std::size_t k = 0; k < nc; ++k) {
    d[static_cast<Eigen::Index>(nmag + k)] = ms.chords[k].alpha;
    sqrt_w[static_cast<Eigen::Index>(nmag + k)] = setup.weights.w_polar();
    gamma[static_cast<Eigen::Index>(k)] = ms.chords[k].gamma;
    w_inter[static_cast<Eigen::Index>(k)] = setup.weights.w_inter();
  }

  NodalField psi;
  Eigen::VectorXd u(2 * m);
  double lambda = 1.0;
  std::optional<Eigen::VectorXd> ne;
  if (opt.warm_start) {
    const Equilibrium& w = *opt.warm_start;
    if (w.psi.size() != static_cast<Eigen::Index>(mesh.num_nodes()) || w.basis.size() != m)
      throw Error(ErrorKind::Argument, "warm start does not match the mesh or basis");
    psi = w.psi;
    u = w.profiles.stacked();
    lambda = w.lambda;
    ne = w.profiles.ne;
  } else {
    const auto gd = dirichlet_values(mesh, ms);
    double mean = 0.0;
    for (double v : gd) mean += v;
    psi = NodalField::Constant(static_cast<Eigen::Index>(mesh.num_nodes()), mean / static_cast<double>(gd.size()));
    const Eigen::VectorXd first = affine_coefficients(basis, 1.0, -1.0);
    u << first, first;
  }

  const Eigen::MatrixXd* kinv = opt.dense_inverse ? &fem.dense_inverse() : nullptr;
  for (int it = 1; it <= opt.max_iter; ++it) {
    try {
      const PlasmaState state = plasma_state_for(mesh, psi);
      const auto prof = ProfileExpansion::from_stacked(u, m);
      lambda = compute_lambda(mesh, state, profiles_from_expansion(basis, prof), ms.Ip, opt.r0);
      res.lambda_history.push_back(lambda);

      Eigen::MatrixXd c = c0;
      if (opt.use_internal) {
        const Eigen::MatrixXd b_int = build_interferometry_matrix(mesh, setup.chords, state, basis);
        ne = identify_ne(b_int, gamma, w_inter, reg.eps_ne, lreg, reg.ne_scale);
        const Eigen::MatrixXd c1 = build_polarimetry_observer(mesh, setup.chords, ne, state, basis);
        c.resize(c0.rows() + c1.rows(), c0.cols());
        c << c0, c1;
        const Eigen::VectorXd rb = reg.ne_scale * (b_int * *ne) - gamma;
        res.cost.j1 = 0.5 * w_inter.cwiseProduct(rb).squaredNorm();
        res.cost.j_eps_ne = 0.5 * reg.eps_ne * ne->dot(lreg * *ne);
      }

      const Eigen::MatrixXd y = assemble_source_matrix(mesh, state, basis, lambda, opt.r0);
      const Eigen::MatrixXd kinv_y = kinv ? Eigen::MatrixXd(*kinv * y) : fem.lu().solve_multi(y);
      const ABSystem sys = build_ab_system(c, kinv_y, setup.kinv_g, d, sqrt_w);
      const Eigen::VectorXd ustar = identify_ab(sys, reg.eps, lreg, basis.end_constraint());

      const Eigen::VectorXd r = sys.e * ustar - sys.f;
      res.cost.j0 = 0.5 * r.head(static_cast<Eigen::Index>(nmag)).squaredNorm();
      res.cost.j2 = 0.5 * r.tail(static_cast<Eigen::Index>(nc)).squaredNorm();
      res.cost.j_eps = 0.5 * reg.eps * ustar.dot(block_lambda(lreg) * ustar);

      NodalField next = kinv_y * ustar + setup.kinv_g;
      const double pn = psi.norm();
      const double change = pn > 0.0 ? (next - psi).norm() / pn : std::numeric_limits<double>::infinity();
      res.residuals.push_back(change);
      res.iterations = it;

      const auto scaled = rescale_dofs(ustar, lambda, m);
      u = scaled.u;
      lambda = scaled.lambda;
      psi = std::move(next);
      res.converged = change <= opt.tol;
      if (res.converged && !opt.fixed_iterations) break;
    } catch (const Error& e) {
      if (!plasma_failure(e.kind())) throw;
      res.error = e.kind();
      res.message = e.what();
      res.converged = false;
      break;
    }
  }

  eq.psi = psi;
  eq.profiles = ProfileExpansion::from_stacked(u, m);
  eq.profiles.ne = ne;
  eq.lambda = lambda;
  eq.residuals = res.residuals;
  eq.lambda_history = res.lambda_history;
  eq.iterations = res.iterations;
  if (!res.error) {
    try {
      eq.plasma = plasma_state_for(mesh, psi);
      eq.lambda = compute_lambda(mesh, eq.plasma, profiles_from_expansion(basis, eq.profiles), ms.Ip, opt.r0);
    } catch (const Error& e) {
      if (!plasma_failure(e.kind())) throw;
      res.error = e.kind();
      res.message = e.what();
      res.converged = false;
    }
  }
  eq.converged = res.converged;
  if (!res.converged && !res.error)
    res.message = fmt::format("stopped after {} iterations, residual {:.3e}", res.iterations,
                              res.residuals.empty() ? 0.0 : res.residuals.back());
  return res;
}

}  // namespace gsr
