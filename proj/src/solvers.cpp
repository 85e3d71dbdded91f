#include "ssdu/solvers.hpp"

#include <cmath>
#include <string>

namespace ssdu {

ComplexImage conjugate_gradient(const ImageOperator& apply, const ComplexImage& b, ComplexImage x0,
                                const CgOptions& opts, CgReport* report) {
  if (!x0.same_shape(b)) throw ShapeError("CG initial guess and right-hand side differ in shape");
  if (!all_finite(b.span()) || !all_finite(x0.span())) throw NumericError("CG input contains non-finite values");

  ComplexImage x = std::move(x0);
  ComplexImage r = b - apply(x);
  ComplexImage p = r;
  double rs = vdot(r.span(), r.span()).real();
  const double bnorm = l2_norm(b.span());
  const double stop = opts.tol * bnorm;

  CgReport rep;
  rep.residual_trace.push_back(std::sqrt(rs));
  for (std::size_t k = 0; k < opts.max_iters; ++k) {
    if (opts.early_exit && std::sqrt(rs) <= stop) break;
    if (rs == 0.0) break;
    const ComplexImage ap = apply(p);
    const double pap = vdot(p.span(), ap.span()).real();
    if (pap <= 0.0) break;  // p lies in the nullspace of a semidefinite A
    const double alpha = rs / pap;
    axpy(alpha, p.span(), x.span());
    axpy(-alpha, ap.span(), r.span());
    const double rs_new = vdot(r.span(), r.span()).real();
    const double beta = rs_new / rs;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    rs = rs_new;
    ++rep.iterations_run;
    rep.residual_trace.push_back(std::sqrt(rs));
  }
  rep.final_residual_norm = std::sqrt(rs);
  rep.converged = rep.final_residual_norm <= stop;
  if (report) *report = std::move(rep);
  return x;
}

ComplexImage dc_solve(const SenseOperator& op, const CoilKSpace& y, const ComplexImage& z, double mu,
                      const CgOptions& opts, CgReport* report) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw NumericError("dc_solve: mu must be finite and >= 0");
  ComplexImage rhs = op.adjoint(y);
  if (!z.same_shape(rhs)) throw ShapeError("dc_solve: z does not match operator shape");
  axpy(mu, z.span(), rhs.span());
  auto apply = [&](const ComplexImage& v) {
    ComplexImage out = op.normal(v);
    axpy(mu, v.span(), out.span());
    return out;
  };
  return conjugate_gradient(apply, rhs, z, opts, report);
}

ComplexImage cg_sense(const SenseOperator& op, const CoilKSpace& y, const CgOptions& opts, CgReport* report) {
  const ComplexImage rhs = op.adjoint(y);
  auto apply = [&](const ComplexImage& v) { return op.normal(v); };
  return conjugate_gradient(apply, rhs, ComplexImage(op.rows(), op.cols()), opts, report);
}

// ---------------------------------------------------------------------------

namespace {

// Forward difference along rows (axis 0) or columns (axis 1), zero at the last index.
ComplexImage diff(const ComplexImage& u, int axis) {
  const std::size_t R = u.rows(), C = u.cols();
  ComplexImage d(R, C);
  if (axis == 0) {
    for (std::size_t i = 0; i + 1 < R; ++i)
      for (std::size_t j = 0; j < C; ++j) d(i, j) = u(i + 1, j) - u(i, j);
  } else {
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j + 1 < C; ++j) d(i, j) = u(i, j + 1) - u(i, j);
  }
  return d;
}

// Adjoint of diff(): (D^H w)_i = w_{i-1} - w_i with w_{-1} = w_{n-1} = 0.
void diff_adjoint_add(const ComplexImage& w, int axis, ComplexImage& out) {
  const std::size_t R = w.rows(), C = w.cols();
  if (axis == 0) {
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        cplx v{};
        if (i + 1 < R) v -= w(i, j);
        if (i >= 1) v += w(i - 1, j);
        out(i, j) += v;
      }
  } else {
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        cplx v{};
        if (j + 1 < C) v -= w(i, j);
        if (j >= 1) v += w(i, j - 1);
        out(i, j) += v;
      }
  }
}

double l1_vector(const VectorField& g, Region region) {
  const std::size_t R = g.c[0].rows(), C = g.c[0].cols();
  const std::size_t rmax = region == Region::interior ? (R > 2 ? R - 2 : 0) : R;
  const std::size_t cmax = region == Region::interior ? (C > 2 ? C - 2 : 0) : C;
  double s = 0.0;
  for (std::size_t i = 0; i < rmax; ++i)
    for (std::size_t j = 0; j < cmax; ++j) s += std::sqrt(std::norm(g.c[0](i, j)) + std::norm(g.c[1](i, j)));
  return s;
}

double l1_tensor(const SymTensorField& w, Region region) {
  const std::size_t R = w.c[0].rows(), C = w.c[0].cols();
  const std::size_t rmax = region == Region::interior ? (R > 2 ? R - 2 : 0) : R;
  const std::size_t cmax = region == Region::interior ? (C > 2 ? C - 2 : 0) : C;
  double s = 0.0;
  for (std::size_t i = 0; i < rmax; ++i)
    for (std::size_t j = 0; j < cmax; ++j)
      s += std::sqrt(std::norm(w.c[0](i, j)) + std::norm(w.c[1](i, j)) + 2.0 * std::norm(w.c[2](i, j)));
  return s;
}

double data_misfit(const SenseOperator& op, const CoilKSpace& y, const ComplexImage& x) {
  CoilKSpace r = op.forward(x);
  double s = 0.0;
  for (std::size_t c = 0; c < r.size(); ++c)
    for (std::size_t i = 0; i < r[c].size(); ++i)
      if (op.mask()[i]) s += std::norm(r[c][i] - y[c][i]);
  return s;
}

}  // namespace

VectorField gradient(const ComplexImage& x) { return {{diff(x, 0), diff(x, 1)}}; }

ComplexImage gradient_adjoint(const VectorField& g) {
  ComplexImage out(g.c[0].rows(), g.c[0].cols());
  diff_adjoint_add(g.c[0], 0, out);
  diff_adjoint_add(g.c[1], 1, out);
  return out;
}

SymTensorField sym_gradient(const VectorField& v) {
  ComplexImage xy = diff(v.c[0], 1);
  const ComplexImage yx = diff(v.c[1], 0);
  for (std::size_t i = 0; i < xy.size(); ++i) xy[i] = 0.5 * (xy[i] + yx[i]);
  return {{diff(v.c[0], 0), diff(v.c[1], 1), std::move(xy)}};
}

VectorField sym_gradient_adjoint(const SymTensorField& w) {
  const std::size_t R = w.c[0].rows(), C = w.c[0].cols();
  VectorField v{{ComplexImage(R, C), ComplexImage(R, C)}};
  diff_adjoint_add(w.c[0], 0, v.c[0]);
  diff_adjoint_add(w.c[2], 1, v.c[0]);
  diff_adjoint_add(w.c[1], 1, v.c[1]);
  diff_adjoint_add(w.c[2], 0, v.c[1]);
  return v;
}

double tgv_functional(const ComplexImage& x, const VectorField& v, double alpha1, double alpha0, Region region) {
  VectorField g = gradient(x);
  for (int k = 0; k < 2; ++k) axpy(-1.0, v.c[k].span(), g.c[k].span());
  return alpha1 * l1_vector(g, region) + alpha0 * l1_tensor(sym_gradient(v), region);
}

ComplexImage tgv_reconstruct(const SenseOperator& op, const CoilKSpace& y, const TgvOptions& opts,
                             TgvReport* report) {
  if (!(opts.alpha1 > 0.0) || !(opts.alpha0 > 0.0))
    throw ParameterError("tgv alpha1 and alpha0 must be positive");
  if (!(opts.operator_norm_bound > 0.0)) throw ParameterError("tgv operator norm bound must be positive");

  const std::size_t R = op.rows(), C = op.cols();
  const double tau = 1.0 / std::sqrt(opts.operator_norm_bound);
  const double sigma = tau;

  ComplexImage x = op.adjoint(y);
  VectorField v{{ComplexImage(R, C), ComplexImage(R, C)}};
  ComplexImage xbar = x;
  VectorField vbar = v;
  VectorField p{{ComplexImage(R, C), ComplexImage(R, C)}};
  SymTensorField q{{ComplexImage(R, C), ComplexImage(R, C), ComplexImage(R, C)}};
  CoilKSpace r(op.ncoils(), KSpaceGrid(R, C));

  ComplexImage x_sum(R, C);
  VectorField v_sum{{ComplexImage(R, C), ComplexImage(R, C)}};
  TgvReport rep;

  for (std::size_t it = 0; it < opts.iters; ++it) {
    // Dual ascent on p: project onto the alpha1 ball.
    const VectorField gx = gradient(xbar);
    for (std::size_t i = 0; i < R * C; ++i) {
      const cplx a = p.c[0][i] + sigma * (gx.c[0][i] - vbar.c[0][i]);
      const cplx b = p.c[1][i] + sigma * (gx.c[1][i] - vbar.c[1][i]);
      const double n = std::sqrt(std::norm(a) + std::norm(b));
      const double s = n > opts.alpha1 ? opts.alpha1 / n : 1.0;
      p.c[0][i] = a * s;
      p.c[1][i] = b * s;
    }
    // Dual ascent on q: project onto the alpha0 ball.
    const SymTensorField ev = sym_gradient(vbar);
    for (std::size_t i = 0; i < R * C; ++i) {
      const cplx a = q.c[0][i] + sigma * ev.c[0][i];
      const cplx b = q.c[1][i] + sigma * ev.c[1][i];
      const cplx d = q.c[2][i] + sigma * ev.c[2][i];
      const double n = std::sqrt(std::norm(a) + std::norm(b) + 2.0 * std::norm(d));
      const double s = n > opts.alpha0 ? opts.alpha0 / n : 1.0;
      q.c[0][i] = a * s;
      q.c[1][i] = b * s;
      q.c[2][i] = d * s;
    }
    // Data dual: prox of the conjugate of ||. - y||^2.
    const CoilKSpace ex = op.forward(xbar);
    for (std::size_t c = 0; c < r.size(); ++c)
      for (std::size_t i = 0; i < R * C; ++i) {
        if (!op.mask()[i]) continue;
        r[c][i] = (r[c][i] + sigma * (ex[c][i] - y[c][i])) / (1.0 + sigma / 2.0);
      }

    // Primal descent.
    ComplexImage x_old = x;
    VectorField v_old = v;
    const ComplexImage kx = gradient_adjoint(p) + op.adjoint(r);
    axpy(-tau, kx.span(), x.span());
    const VectorField eq = sym_gradient_adjoint(q);
    for (int k = 0; k < 2; ++k)
      for (std::size_t i = 0; i < R * C; ++i) v.c[k][i] -= tau * (eq.c[k][i] - p.c[k][i]);

    for (std::size_t i = 0; i < R * C; ++i) xbar[i] = 2.0 * x[i] - x_old[i];
    for (int k = 0; k < 2; ++k)
      for (std::size_t i = 0; i < R * C; ++i) vbar.c[k][i] = 2.0 * v.c[k][i] - v_old.c[k][i];

    axpy(1.0, x.span(), x_sum.span());
    for (int k = 0; k < 2; ++k) axpy(1.0, v.c[k].span(), v_sum.c[k].span());

    if (report && opts.objective_every > 0 && (it + 1) % opts.objective_every == 0) {
      const double inv = 1.0 / static_cast<double>(it + 1);
      const ComplexImage xa = inv * x_sum;
      const VectorField va{{inv * v_sum.c[0], inv * v_sum.c[1]}};
      rep.objective.push_back(data_misfit(op, y, xa) + tgv_functional(xa, va, opts.alpha1, opts.alpha0));
    }
  }
  if (!all_finite(x.span())) throw NumericError("tgv reconstruction diverged");
  if (report) *report = std::move(rep);
  return x;
}

}  // namespace ssdu
