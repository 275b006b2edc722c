#include "agpo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace agpo {

double grad_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradient(const Graph& graph, const Bindings& binds,
                               double step, double tolerance,
                               const std::vector<Tensor>* analytic_override) {
  if (!(step > 0.0)) throw std::invalid_argument("check_gradient: step must be > 0");
  GradCheckReport report;
  report.tolerance = tolerance;

  // local copies of the bound leaves so components can be perturbed
  const int n_leaves = graph.num_leaves();
  std::vector<Tensor> local(n_leaves);
  Bindings local_binds(graph);
  for (int li = 0; li < n_leaves; ++li) {
    const Tensor* t = binds.get(li);
    if (!t)
      throw std::invalid_argument("check_gradient: leaf '" + graph.leaf_name(li) +
                                  "' is unbound");
    if (!t->all_finite())
      throw std::invalid_argument("check_gradient: leaf '" + graph.leaf_name(li) +
                                  "' has non-finite values");
    local[li] = *t;
    local_binds.set(graph.leaf_name(li), local[li]);
  }

  Workspace ws;
  EvalResult base = graph.gradient(ws, local_binds);
  const std::vector<Tensor>& grads =
      analytic_override ? *analytic_override : base.grads;

  for (int li = 0; li < n_leaves; ++li) {
    if (!graph.leaf_differentiable(li)) continue;
    Tensor& leaf = local[li];
    const Tensor& g = grads[li];
    for (int k = 0; k < leaf.numel(); ++k) {
      const double saved = leaf.data[k];
      leaf.data[k] = saved + step;
      const double f_plus = graph.forward(ws, local_binds).value();
      leaf.data[k] = saved - step;
      const double f_minus = graph.forward(ws, local_binds).value();
      leaf.data[k] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double rel = grad_relative_error(g.data[k], numeric);
      ++report.components_checked;
      report.max_rel_err = std::max(report.max_rel_err, rel);
      if (rel > tolerance) {
        report.pass = false;
        if (report.failures.size() < 16)
          report.failures.push_back(
              {graph.leaf_name(li), k, g.data[k], numeric, rel});
      }
    }
  }
  return report;
}

}  // namespace agpo
