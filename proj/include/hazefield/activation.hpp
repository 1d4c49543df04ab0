#pragma once

#include <cmath>

namespace hazefield {

// Overflow-safe softplus: log(1 + e^x).
template <typename Scalar>
Scalar softplus(Scalar x) {
  using std::exp;
  using std::log1p;
  return x > Scalar(0) ? x + log1p(exp(-x)) : log1p(exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + exp(-x));
  }
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

// d softplus / dx
template <typename Scalar>
Scalar softplus_grad(Scalar x) {
  return sigmoid(x);
}

template <typename Scalar>
Scalar inverse_softplus(Scalar y) {
  using std::expm1;
  using std::log;
  return y > Scalar(30) ? y : log(expm1(y));
}

template <typename Scalar>
Scalar logit(Scalar p) {
  using std::log;
  return log(p / (Scalar(1) - p));
}

}  // namespace hazefield
