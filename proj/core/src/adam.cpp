#include "prognosis/adam.hpp"

#include <cmath>

#include "prognosis/error.hpp"

namespace prognosis {

void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state) {
  const auto& opt = state.options;
  if (!(opt.learning_rate > 0.0)) throw Error("Adam learning rate must be positive");

  for (const auto& [name, param] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw Error("Adam: missing gradient for parameter '" + name + "'");
    if (it->second.shape() != param.shape()) {
      throw ShapeError("Adam: gradient for '" + name + "' has shape " +
                       to_string(it->second.shape()) + ", parameter has " + to_string(param.shape()));
    }
    if (!it->second.all_finite()) {
      throw Error("Adam: non-finite gradient for parameter '" + name + "'; training aborted");
    }
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(opt.beta1, t);
  const double correction2 = 1.0 - std::pow(opt.beta2, t);

  for (auto& [name, param] : params) {
    const Tensor& g = grads.at(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, param.shape(), 0.0);
    auto [v_it, v_new] = state.second_moment.try_emplace(name, param.shape(), 0.0);
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    if (m.shape() != param.shape() || v.shape() != param.shape()) {
      throw ShapeError("Adam: moment shape mismatch for '" + name + "'");
    }
    for (std::size_t i = 0; i < param.numel(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      param[i] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
  }
}

}  // namespace prognosis
