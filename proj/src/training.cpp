#include "ssdu/training.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "ssdu/rng.hpp"

namespace ssdu {

std::string_view to_string(LossKind k) noexcept {
  return k == LossKind::supervised_image ? "supervised" : "selfsup";
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "supervised" || s == "supervised_image") return LossKind::supervised_image;
  if (s == "selfsup" || s == "selfsup_kspace") return LossKind::selfsup_kspace;
  throw ParameterError("loss must be 'supervised' or 'selfsup', got '" + std::string(s) + "'");
}

double norm_l1l2_loss(std::span<const cplx> u, std::span<const cplx> v) {
  if (u.size() != v.size()) throw ShapeError("loss arguments differ in length");
  const Norms nu = norms(u);
  if (nu.l2 == 0.0) throw NormalizationError("loss target is identically zero");
  double d1 = 0.0, d2 = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const cplx d = u[i] - v[i];
    d1 += std::abs(d);
    d2 += std::norm(d);
  }
  return std::sqrt(d2) / nu.l2 + d1 / nu.l1;
}

std::vector<cplx> norm_l1l2_loss_grad(std::span<const cplx> u, std::span<const cplx> v) {
  if (u.size() != v.size()) throw ShapeError("loss arguments differ in length");
  const Norms nu = norms(u);
  if (nu.l2 == 0.0) throw NormalizationError("loss target is identically zero");
  double d2 = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) d2 += std::norm(v[i] - u[i]);
  const double dn = std::sqrt(d2);
  std::vector<cplx> g(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const cplx d = v[i] - u[i];
    const double a = std::abs(d);
    if (a == 0.0) continue;
    g[i] = d / (dn * nu.l2) + d / (a * nu.l1);
  }
  return g;
}

std::vector<cplx> gather(const CoilKSpace& y, const BoolGrid& where) {
  std::vector<cplx> out;
  out.reserve(y.size() * where.count());
  for (const auto& g : y) {
    if (g.size() != where.size()) throw ShapeError("gather: grid and mask differ in shape");
    for (std::size_t i = 0; i < g.size(); ++i)
      if (where[i]) out.push_back(g[i]);
  }
  return out;
}

namespace {

void scatter(std::span<const cplx> v, const BoolGrid& where, CoilKSpace& y) {
  std::size_t k = 0;
  for (auto& g : y)
    for (std::size_t i = 0; i < g.size(); ++i)
      if (where[i]) g[i] = v[k++];
}

void check_spec(const LossSpec& s) {
  if (!s.op_in || !s.y_in) throw ConfigError("loss needs a network input operator and data");
  if (s.kind == LossKind::supervised_image && !s.x_ref)
    throw ConfigError("supervised loss needs a reference image");
  if (s.kind == LossKind::selfsup_kspace && (!s.op_loss || !s.y_loss))
    throw ConfigError("self-supervised loss needs a Lambda operator and data");
}

// Loss value and dL/d(network output) for a given output image.
double loss_and_output_grad(const LossSpec& s, const ComplexImage& out, ComplexImage* g_out) {
  if (s.kind == LossKind::supervised_image) {
    const double L = norm_l1l2_loss(s.x_ref->span(), out.span());
    if (g_out) *g_out = ComplexImage(out.rows(), out.cols(), norm_l1l2_loss_grad(s.x_ref->span(), out.span()));
    return L;
  }
  const BoolGrid& lambda = s.op_loss->mask();
  if (lambda.count() == 0) throw SplitError("empty Lambda set");
  const auto u = gather(*s.y_loss, lambda);
  const auto v = gather(s.op_loss->forward(out), lambda);
  const double L = norm_l1l2_loss(u, v);
  if (g_out) {
    CoilKSpace gk(s.op_loss->ncoils(), KSpaceGrid(out.rows(), out.cols()));
    scatter(norm_l1l2_loss_grad(u, v), lambda, gk);
    *g_out = s.op_loss->adjoint(gk);
  }
  return L;
}

}  // namespace

double evaluate_loss(const NetworkParams& p, const LossSpec& spec) {
  check_spec(spec);
  const ComplexImage out = unrolled_forward(p, *spec.op_in, *spec.y_in);
  return loss_and_output_grad(spec, out, nullptr);
}

double selfsup_loss(const NetworkParams& p, const SenseOperator& op_theta, const SenseOperator& op_lambda,
                    const CoilKSpace& y_theta, const CoilKSpace& y_lambda) {
  for (std::size_t i = 0; i < op_theta.mask().size(); ++i)
    if (op_theta.mask()[i] && op_lambda.mask()[i]) throw SplitError("Theta and Lambda overlap");
  LossSpec s;
  s.kind = LossKind::selfsup_kspace;
  s.op_in = &op_theta;
  s.y_in = &y_theta;
  s.op_loss = &op_lambda;
  s.y_loss = &y_lambda;
  return evaluate_loss(p, s);
}

double supervised_loss(const NetworkParams& p, const SenseOperator& op_omega, const CoilKSpace& y_omega,
                       const ComplexImage& x_ref) {
  LossSpec s;
  s.kind = LossKind::supervised_image;
  s.op_in = &op_omega;
  s.y_in = &y_omega;
  s.x_ref = &x_ref;
  return evaluate_loss(p, s);
}

GradientBundle backprop(const NetworkParams& p, const LossSpec& spec) {
  check_spec(spec);
  UnrolledTape tape;
  const ComplexImage out = unrolled_forward(p, *spec.op_in, *spec.y_in, &tape);
  ComplexImage g_out;
  GradientBundle b;
  b.loss = loss_and_output_grad(spec, out, &g_out);
  if (!std::isfinite(b.loss)) throw NumericError("non-finite loss");
  b.grad.assign(p.size(), 0.0);
  unrolled_backward(p, *spec.op_in, tape, g_out, b.grad);
  return b;
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads) {
  if (s.m.size() != params.size() || s.v.size() != params.size() || grads.size() != params.size())
    throw ShapeError("adam: optimizer state, parameters and gradients are not congruent");
  ++s.t;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double mhat = s.m[i] / bc1;
    const double vhat = s.v[i] / bc2;
    params[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
  }
}

void adam_step(AdamState& state, NetworkParams& params, const GradientBundle& grads) {
  adam_step(state, params.flat(), grads.grad);
}

LossSpec PreparedScan::spec(LossKind kind) const {
  LossSpec s;
  s.kind = kind;
  s.op_in = &op_in;
  s.y_in = &y_in;
  if (op_loss) {
    s.op_loss = &*op_loss;
    s.y_loss = &y_loss;
  }
  s.x_ref = x_ref;
  return s;
}

PreparedScan prepare_scan(const Scan& scan, LossKind kind) {
  if (kind == LossKind::supervised_image) {
    if (!scan.ref_image) throw ConfigError("scan " + scan.scan_id + " has no reference image");
    return PreparedScan{scan.omega_operator(), scan.kspace, std::nullopt, {}, &*scan.ref_image};
  }
  if (!scan.split) throw ConfigError("scan " + scan.scan_id + " has no Theta/Lambda split");
  SenseOperator op_theta(scan.sens, scan.split->theta);
  SenseOperator op_lambda(scan.sens, scan.split->lambda);
  CoilKSpace y_theta = scan.kspace, y_lambda = scan.kspace;
  op_theta.restrict(y_theta);
  op_lambda.restrict(y_lambda);
  return PreparedScan{std::move(op_theta), std::move(y_theta), std::move(op_lambda), std::move(y_lambda), nullptr};
}

FitResult fit(const std::vector<Scan>& scans, const NetConfig& cfg, const FitOptions& opts) {
  if (scans.empty()) throw ConfigError("training set is empty");
  std::vector<PreparedScan> prepared;
  prepared.reserve(scans.size());
  for (const auto& s : scans) prepared.push_back(prepare_scan(s, opts.loss));

  FitResult res{init_params(cfg, derive_seed(opts.seed, 0)), {}};
  AdamState adam(res.params.size(), opts.lr);
  std::vector<std::size_t> order(scans.size());

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(derive_seed(opts.seed, 1000 + epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    if (opts.resample_splits && opts.loss == LossKind::selfsup_kspace) {
      const std::uint64_t epoch_seed = derive_seed(opts.seed, 2000 + epoch);
      for (std::size_t k = 0; k < scans.size(); ++k) {
        Scan s = scans[k];
        s.split = split_omega(s.mask, s.split->rho, s.split->scheme, derive_seed(epoch_seed, k), opts.split_options);
        prepared[k] = prepare_scan(s, opts.loss);
      }
    }

    double total = 0.0;
    for (std::size_t idx : order) {
      const GradientBundle g = backprop(res.params, prepared[idx].spec(opts.loss));
      if (!std::isfinite(g.loss))
        throw NumericError("loss became non-finite at epoch " + std::to_string(epoch) + " on scan " +
                           scans[idx].scan_id);
      total += g.loss;
      adam_step(adam, res.params, g);
    }
    const double mean = total / static_cast<double>(order.size());
    res.epoch_loss.push_back(mean);
    if (opts.on_epoch) opts.on_epoch(epoch, mean, res.params);
  }
  return res;
}

ComplexImage reconstruct_network(const NetworkParams& p, const Scan& scan) {
  return unrolled_forward(p, scan.omega_operator(), scan.kspace);
}

}  // namespace ssdu
