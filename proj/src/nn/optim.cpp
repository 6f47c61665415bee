#include "bsim/nn/optim.hpp"

#include <cmath>

#include "bsim/common.hpp"

namespace bsim::nn {

bool adam_step(ParamStore& store, AdamState& st) {
  auto& ps = store.params();
  if (st.m.empty()) {
    for (const auto& p : ps) {
      st.m.emplace_back(p.value.size(), 0.0);
      st.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (st.m.size() != ps.size()) throw Error("adam_step: optimizer state does not match the parameter store");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].grad.size() != ps[i].value.size() || st.m[i].size() != ps[i].value.size()) {
      throw Error("adam_step: shape mismatch for '" + ps[i].name + "'");
    }
    for (double gv : ps[i].grad.data) {
      if (!std::isfinite(gv)) {
        ++st.skipped;
        return false;
      }
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& val = ps[i].value.data;
    const auto& grad = ps[i].grad.data;
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t k = 0; k < val.size(); ++k) {
      m[k] = st.beta1 * m[k] + (1.0 - st.beta1) * grad[k];
      v[k] = st.beta2 * v[k] + (1.0 - st.beta2) * grad[k] * grad[k];
      val[k] -= st.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + st.eps);
    }
  }
  return true;
}

}  // namespace bsim::nn
