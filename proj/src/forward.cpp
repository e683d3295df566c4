#include "gsrecon/forward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

#include <fmt/format.h>

#include "gsrecon/kernels.hpp"

namespace gsr {

void MachineParams::validate() const {
  if (!(r0 > 0.0) || !std::isfinite(r0)) throw Error(ErrorKind::Validation, "r0 must be positive");
  if (!(mu0 > 0.0)) throw Error(ErrorKind::Validation, "mu0 must be positive");
  if (Ip == 0.0 || !std::isfinite(Ip)) throw Error(ErrorKind::Validation, "Ip must be finite and nonzero");
  if (!std::isfinite(B0)) throw Error(ErrorKind::Validation, "B0 must be finite");
}

TabulatedProfile::TabulatedProfile(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  if (x_.size() != y_.size() || x_.size() < 2)
    throw Error(ErrorKind::Argument, "tabulated profile needs at least two (x, y) pairs");
  for (std::size_t i = 1; i < x_.size(); ++i)
    if (!(x_[i] > x_[i - 1])) throw Error(ErrorKind::Argument, "tabulated abscissae must be strictly increasing");
  const std::size_t n = x_.size();
  std::vector<double> delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
  d_.assign(n, 0.0);
  d_[0] = delta[0];
  d_[n - 1] = delta[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i)
    d_[i] = (delta[i - 1] * delta[i] <= 0.0) ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (delta[i] == 0.0) {
      d_[i] = d_[i + 1] = 0.0;
      continue;
    }
    const double a = d_[i] / delta[i], b = d_[i + 1] / delta[i];
    const double s = a * a + b * b;
    if (s > 9.0) {
      const double t = 3.0 / std::sqrt(s);
      d_[i] = t * a * delta[i];
      d_[i + 1] = t * b * delta[i];
    }
  }
}

double TabulatedProfile::operator()(double x) const {
  if (x <= x_.front()) return y_.front();
  if (x >= x_.back()) return y_.back();
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  const double h = x_[i + 1] - x_[i];
  const double t = (x - x_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * d_[i] + (-2 * t3 + 3 * t2) * y_[i + 1] +
         (t3 - t2) * h * d_[i + 1];
}

ReferenceProfiles profiles_from_expansion(const SplineBasis& basis, const ProfileExpansion& p) {
  return {[basis, p](double x) { return eval_expansion(basis, p, ProfileKind::A, x); },
          [basis, p](double x) { return eval_expansion(basis, p, ProfileKind::B, x); }};
}

struct FemSystem::Cache {
  std::once_flag once;
  Eigen::MatrixXd kinv;
};

FemSystem::FemSystem(const Mesh& mesh, double mu0, InverseRadiusQuadrature rule)
    : mesh_(&mesh),
      mu0_(mu0),
      k_(impose_dirichlet(assemble_stiffness(mesh, mu0, rule), mesh.boundary())),
      lu_(factorize(k_)),
      cache_(std::make_shared<Cache>()) {}

const Eigen::MatrixXd& FemSystem::dense_inverse() const {
  std::call_once(cache_->once, [this] { cache_->kinv = lu_.dense_inverse(); });
  return cache_->kinv;
}

Eigen::VectorXd FemSystem::dirichlet(std::span<const double> g_boundary) const {
  return dirichlet_vector(*mesh_, g_boundary);
}

Eigen::MatrixXd assemble_source_matrix(const Mesh& mesh, const PlasmaState& state, const SplineBasis& basis,
                                       double lambda, double r0) {
  const auto quad = plasma_quadrature(mesh, state);
  if (quad.empty()) throw Error(ErrorKind::EmptySource, "plasma domain contains no quadrature points");
  return kernels::omp::source_matrix(mesh, quad, basis, lambda, r0);
}

namespace {

struct Integrals {
  double value = 0.0;
  double scale = 0.0;  // ∫ (r/r0 + r0/r), the size of a unit-profile integral
  std::size_t points = 0;
};

Integrals integrate(const Mesh& mesh, const PlasmaState& state, const ReferenceProfiles& p, double r0) {
  if (!(r0 > 0.0)) throw Error(ErrorKind::Domain, "r0 must be positive");
  Integrals out;
  const auto quad = plasma_quadrature(mesh, state);
  out.points = quad.size();
  for (const auto& q : quad) {
    const double ra = q.p.r / r0, rb = r0 / q.p.r;
    out.value += q.weight * (ra * p.a(q.psibar) + rb * p.b(q.psibar));
    out.scale += q.weight * (ra + rb);
  }
  return out;
}

double rel_norm_change(const NodalField& next, const NodalField& prev) {
  const double d = prev.norm();
  if (d == 0.0) return std::numeric_limits<double>::infinity();
  return (next - prev).norm() / d;
}

}  // namespace

double current_integral(const Mesh& mesh, const PlasmaState& state, const ReferenceProfiles& p, double r0) {
  return integrate(mesh, state, p, r0).value;
}

double compute_lambda(const Mesh& mesh, const PlasmaState& state, const ReferenceProfiles& p, double Ip, double r0) {
  const auto in = integrate(mesh, state, p, r0);
  if (in.points == 0) throw Error(ErrorKind::EmptySource, "plasma domain contains no quadrature points");
  if (!std::isfinite(in.value) || std::abs(in.value) <= 1e-12 * in.scale)
    throw Error(ErrorKind::DivergentLambda,
                fmt::format("current integral {:.3e} is too small to carry Ip = {:.3e}", in.value, Ip));
  return Ip / in.value;
}

double plasma_current(const Mesh& mesh, const PlasmaState& state, const ReferenceProfiles& p, double lambda,
                      double r0) {
  return lambda * integrate(mesh, state, p, r0).value;
}

NodalField direct_step(const Factorization& lu, const Eigen::MatrixXd& y, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& g) {
  if (y.cols() != u.size()) throw Error(ErrorKind::Argument, "coefficient vector does not match Y");
  if (y.rows() != g.size()) throw Error(ErrorKind::Argument, "Dirichlet vector does not match Y");
  return lu.solve(y * u + g);
}

PlasmaState plasma_state_for(const Mesh& mesh, const NodalField& psi) {
  if (is_flat(psi)) return cold_plasma_state(mesh, psi.size() ? psi[0] : 0.0);
  return locate_plasma(mesh, psi);
}

Equilibrium forward_fixed_point(const FemSystem& fem, const MachineParams& machine, const ReferenceProfiles& ref,
                                std::span<const double> g_boundary, const ForwardOptions& options) {
  machine.validate();
  if (!(options.tol > 0.0)) throw Error(ErrorKind::Argument, "tolerance must be positive");
  if (options.max_iter < 1) throw Error(ErrorKind::Argument, "max_iter must be at least 1");
  if (!(options.relaxation > 0.0 && options.relaxation <= 1.0))
    throw Error(ErrorKind::Argument, "relaxation must lie in (0, 1]");
  const Mesh& mesh = fem.mesh();
  const Eigen::VectorXd g = fem.dirichlet(g_boundary);

  NodalField psi;
  if (options.warm_start) {
    if (options.warm_start->size() != static_cast<Eigen::Index>(mesh.num_nodes()))
      throw Error(ErrorKind::Argument, "warm start has the wrong size");
    psi = *options.warm_start;
  } else {
    double mean = 0.0;
    for (double v : g_boundary) mean += v;
    mean /= static_cast<double>(std::max<std::size_t>(g_boundary.size(), 1));
    psi = NodalField::Constant(static_cast<Eigen::Index>(mesh.num_nodes()), mean);
  }

  Equilibrium eq;
  eq.machine = machine;
  eq.basis = options.basis;
  for (int it = 1; it <= options.max_iter; ++it) {
    const PlasmaState state = plasma_state_for(mesh, psi);
    const double lambda = compute_lambda(mesh, state, ref, machine.Ip, machine.r0);
    const auto quad = plasma_quadrature(mesh, state);
    const Eigen::VectorXd y = kernels::omp::source_vector(mesh, quad, ref.a, ref.b, lambda, machine.r0);
    NodalField next = fem.lu().solve(y + g);
    if (options.relaxation != 1.0) next = options.relaxation * next + (1.0 - options.relaxation) * psi;
    const double res = rel_norm_change(next, psi);
    eq.residuals.push_back(res);
    eq.lambda_history.push_back(lambda);
    eq.iterations = it;
    if (options.on_iteration) options.on_iteration(IterationInfo{it, lambda, res, &state});
    psi = std::move(next);
    if (res <= options.tol) {
      eq.converged = true;
      break;
    }
  }
  if (!eq.converged)
    throw ConvergenceError(fmt::format("no convergence in {} iterations (last residual {:.3e})", eq.iterations,
                                       eq.residuals.back()),
                           eq.residuals);

  eq.psi = psi;
  eq.plasma = locate_plasma(mesh, psi);
  eq.profiles.a = fit_coefficients(eq.basis, ref.a, eq.basis.end_constraint());
  eq.profiles.b = fit_coefficients(eq.basis, ref.b, eq.basis.end_constraint());
  eq.lambda = compute_lambda(mesh, eq.plasma, profiles_from_expansion(eq.basis, eq.profiles), machine.Ip, machine.r0);
  return eq;
}

// ---------------------------------------------------------------------------
// equilibrium file

namespace {

void write_vector(std::string& out, const char* key, const Eigen::VectorXd& v) {
  out += fmt::format("{} {}\n", key, v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out += fmt::format("{:.17g}\n", v[i]);
}

}  // namespace

std::string format_equilibrium(const Equilibrium& eq) {
  std::string out = "gsrecon-equilibrium 1\n";
  out += fmt::format("r0 {:.17g}\nB0 {:.17g}\nIp {:.17g}\nmu0 {:.17g}\n", eq.machine.r0, eq.machine.B0, eq.machine.Ip,
                     eq.machine.mu0);
  out += fmt::format("lambda {:.17g}\n", eq.lambda);
  out += fmt::format("iterations {} converged {}\n", eq.iterations, eq.converged ? 1 : 0);
  out += fmt::format("basis {} {} {}\n", eq.basis.size(), eq.basis.degree(), eq.basis.end_constraint() ? 1 : 0);
  write_vector(out, "a", eq.profiles.a);
  write_vector(out, "b", eq.profiles.b);
  write_vector(out, "ne", eq.profiles.ne ? *eq.profiles.ne : Eigen::VectorXd());
  write_vector(out, "psi", eq.psi);
  return out;
}

namespace {

struct Reader {
  std::istringstream in;

  template <typename T>
  T value(const char* key) {
    std::string k;
    T v{};
    if (!(in >> k) || k != key || !(in >> v))
      throw Error(ErrorKind::Parse, fmt::format("equilibrium file: expected '{} <value>'", key));
    return v;
  }

  Eigen::VectorXd vector(const char* key) {
    const long n = value<long>(key);
    if (n < 0) throw Error(ErrorKind::Parse, fmt::format("equilibrium file: negative size for '{}'", key));
    Eigen::VectorXd v(n);
    for (long i = 0; i < n; ++i)
      if (!(in >> v[i])) throw Error(ErrorKind::Parse, fmt::format("equilibrium file: truncated '{}' block", key));
    return v;
  }
};

}  // namespace

Equilibrium parse_equilibrium(const std::string& text, const Mesh& mesh) {
  Reader rd{std::istringstream(text)};
  if (rd.value<int>("gsrecon-equilibrium") != 1) throw Error(ErrorKind::Parse, "unsupported equilibrium file version");
  Equilibrium eq;
  eq.machine.r0 = rd.value<double>("r0");
  eq.machine.B0 = rd.value<double>("B0");
  eq.machine.Ip = rd.value<double>("Ip");
  eq.machine.mu0 = rd.value<double>("mu0");
  eq.lambda = rd.value<double>("lambda");
  eq.iterations = rd.value<int>("iterations");
  eq.converged = rd.value<int>("converged") != 0;
  const int m = rd.value<int>("basis");
  int degree = 0, constraint = 0;
  if (!(rd.in >> degree >> constraint)) throw Error(ErrorKind::Parse, "equilibrium file: malformed basis line");
  eq.basis = SplineBasis(m, degree, constraint != 0);
  eq.profiles.a = rd.vector("a");
  eq.profiles.b = rd.vector("b");
  Eigen::VectorXd ne = rd.vector("ne");
  if (ne.size() > 0) eq.profiles.ne = ne;
  eq.psi = rd.vector("psi");
  if (eq.profiles.a.size() != m || eq.profiles.b.size() != m || (ne.size() != 0 && ne.size() != m))
    throw Error(ErrorKind::Parse, "equilibrium file: coefficient count does not match the basis");
  if (eq.psi.size() != static_cast<Eigen::Index>(mesh.num_nodes()))
    throw Error(ErrorKind::Parse, fmt::format("equilibrium file has {} nodal values, mesh has {} nodes",
                                              eq.psi.size(), mesh.num_nodes()));
  eq.machine.validate();
  eq.plasma = locate_plasma(mesh, eq.psi);
  return eq;
}

void save_equilibrium(const Equilibrium& eq, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, fmt::format("cannot write equilibrium file '{}'", path.string()));
  os << format_equilibrium(eq);
}

Equilibrium load_equilibrium(const std::filesystem::path& path, const Mesh& mesh) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, fmt::format("cannot open equilibrium file '{}'", path.string()));
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_equilibrium(ss.str(), mesh);
}

}  // namespace gsr
