#include "nwinv/gradcheck.hpp"

#include <cmath>

#include "nwinv/errors.hpp"

namespace nwinv {

namespace {

double evaluate(const TapeObjective& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.constant(p));
  const double v = f(tape, vars).value().item();
  if (!std::isfinite(v)) throw DomainError("grad_check: objective is not finite");
  return v;
}

}  // namespace

std::vector<Tensor> numeric_gradient(const std::function<double(std::span<const Tensor>)>& f,
                                     std::vector<Tensor> params, double eps) {
  if (!(eps > 0.0)) throw ContractError("numeric_gradient: eps must be > 0");
  std::vector<Tensor> out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor g(params[p].shape());
    for (std::size_t i = 0; i < params[p].numel(); ++i) {
      const double orig = params[p][i];
      params[p][i] = orig + eps;
      const double fp = f(params);
      params[p][i] = orig - eps;
      const double fm = f(params);
      params[p][i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw DomainError("numeric_gradient: objective is not finite");
      }
      g[i] = (fp - fm) / (2.0 * eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

GradCheckResult grad_check(const TapeObjective& f, std::vector<Tensor> params, double eps) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be > 0");

  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& p : params) vars.push_back(tape.parameter(p));
  const Var loss = f(tape, vars);
  if (!std::isfinite(loss.value().item())) throw DomainError("grad_check: objective is not finite");
  const Gradients analytic = tape.backward(loss);

  const auto numeric = numeric_gradient(
      [&f](std::span<const Tensor> ps) { return evaluate(f, ps); }, std::move(params), eps);

  GradCheckResult res;
  for (std::size_t p = 0; p < numeric.size(); ++p) {
    for (std::size_t i = 0; i < numeric[p].numel(); ++i) {
      const double num = numeric[p][i];
      const double err = std::abs(analytic[p][i] - num) / std::max(1.0, std::abs(num));
      if (err > res.max_rel_error) res = {err, p, i};
    }
  }
  return res;
}

}  // namespace nwinv
