#include <sgptd/lbfgs.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace sgptd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct LineSearchOutcome {
  double alpha = 0.0;
  double f = kInf;
  Vector x;
  Vector grad;
  bool ok = false;
  int evals = 0;
};

class LineSearch {
 public:
  LineSearch(const LbfgsObjective& objective, const Vector& x0,
             const Vector& direction, double f0, double slope0,
             const LbfgsOptions& options)
      : objective_(objective),
        x0_(x0),
        direction_(direction),
        f0_(f0),
        slope0_(slope0),
        c1_(options.sufficient_decrease),
        c2_(options.curvature),
        budget_(options.max_line_search_steps) {}

  LineSearchOutcome run(double alpha_init);

 private:
  const LbfgsObjective& objective_;
  const Vector& x0_;
  const Vector& direction_;
  double f0_;
  double slope0_;
  double c1_;
  double c2_;
  int budget_;

  struct Probe {
    double f = kInf;
    double slope = 0.0;
    Vector x;
    Vector grad;
    bool finite = false;
  };
  Probe probe(double alpha, LineSearchOutcome& out);

  bool sufficient(double alpha, double f) const {
    return f <= f0_ + c1_ * alpha * slope0_;
  }
  bool curvature_ok(double slope) const {
    return std::abs(slope) <= -c2_ * slope0_;
  }

  LineSearchOutcome zoom(double lo, Probe lo_probe, double hi,
                         LineSearchOutcome out);
};

LineSearch::Probe LineSearch::probe(double alpha, LineSearchOutcome& out) {
  Probe p;
  p.x = x0_ + alpha * direction_;
  p.grad.resize(x0_.size());
  p.f = objective_(p.x, p.grad);
  ++out.evals;
  p.finite = std::isfinite(p.f) && p.grad.allFinite();
  if (p.finite) p.slope = p.grad.dot(direction_);
  return p;
}

LineSearchOutcome LineSearch::zoom(double lo, Probe lo_probe, double hi,
                                   LineSearchOutcome out) {
  while (out.evals < budget_) {
    const double alpha = 0.5 * (lo + hi);
    Probe p = probe(alpha, out);
    if (!p.finite || !sufficient(alpha, p.f) || p.f >= lo_probe.f) {
      hi = alpha;
    } else {
      if (curvature_ok(p.slope)) {
        out.alpha = alpha;
        out.f = p.f;
        out.x = std::move(p.x);
        out.grad = std::move(p.grad);
        out.ok = true;
        return out;
      }
      if (p.slope * (hi - lo) >= 0.0) hi = lo;
      lo = alpha;
      lo_probe = std::move(p);
    }
    if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
  }
  // Fall back to the best sufficient-decrease point bracketed so far.
  if (lo_probe.finite && lo_probe.f < f0_) {
    out.alpha = lo;
    out.f = lo_probe.f;
    out.x = std::move(lo_probe.x);
    out.grad = std::move(lo_probe.grad);
    out.ok = true;
  }
  return out;
}

LineSearchOutcome LineSearch::run(double alpha_init) {
  LineSearchOutcome out;
  double alpha_prev = 0.0;
  Probe prev;
  prev.f = f0_;
  prev.slope = slope0_;
  prev.finite = true;

  double alpha = alpha_init;
  bool first = true;
  while (out.evals < budget_) {
    Probe p = probe(alpha, out);
    if (!p.finite) {
      // Retreat toward the last feasible step.
      alpha = alpha_prev + 0.5 * (alpha - alpha_prev);
      if (alpha - alpha_prev < 1e-16) break;
      continue;
    }
    if (!sufficient(alpha, p.f) || (!first && p.f >= prev.f))
      return zoom(alpha_prev, std::move(prev), alpha, std::move(out));
    if (curvature_ok(p.slope)) {
      out.alpha = alpha;
      out.f = p.f;
      out.x = std::move(p.x);
      out.grad = std::move(p.grad);
      out.ok = true;
      return out;
    }
    if (p.slope >= 0.0)
      return zoom(alpha, std::move(p), alpha_prev, std::move(out));
    alpha_prev = alpha;
    prev = std::move(p);
    alpha = std::min(2.0 * alpha, 1e8);
    first = false;
  }
  if (!first && prev.f < f0_) {
    out.alpha = alpha_prev;
    out.f = prev.f;
    out.x = std::move(prev.x);
    out.grad = std::move(prev.grad);
    out.ok = true;
  }
  return out;
}

}  // namespace

LbfgsResult minimize(const LbfgsObjective& objective, Vector x0,
                     const LbfgsOptions& options) {
  LbfgsResult result;
  result.x = std::move(x0);
  result.grad.resize(result.x.size());
  result.f = objective(result.x, result.grad);
  result.trace.push_back(result.f);
  if (!std::isfinite(result.f) || !result.grad.allFinite()) {
    result.f = kInf;
    return result;
  }

  std::deque<std::pair<Vector, Vector>> pairs;  // (s, y)
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const double gnorm = result.grad.norm();
    if (gnorm <= options.gradient_tolerance) {
      result.converged = true;
      return result;
    }

    // Two-loop recursion over the stored curvature pairs.
    Vector q = result.grad;
    std::vector<double> rho(pairs.size()), a(pairs.size());
    for (size_t i = pairs.size(); i-- > 0;) {
      rho[i] = 1.0 / pairs[i].second.dot(pairs[i].first);
      a[i] = rho[i] * pairs[i].first.dot(q);
      q -= a[i] * pairs[i].second;
    }
    if (!pairs.empty()) {
      const auto& [s, y] = pairs.back();
      q *= s.dot(y) / y.squaredNorm();
    }
    for (size_t i = 0; i < pairs.size(); ++i) {
      const double b = rho[i] * pairs[i].second.dot(q);
      q += (a[i] - b) * pairs[i].first;
    }
    Vector direction = -q;

    double slope = direction.dot(result.grad);
    if (!(slope < 0.0)) {
      direction = -result.grad;
      slope = -gnorm * gnorm;
      pairs.clear();
    }
    const double alpha_init =
        pairs.empty() ? std::min(1.0, 1.0 / std::max(gnorm, 1e-12)) : 1.0;

    LineSearch search(objective, result.x, direction, result.f, slope,
                      options);
    LineSearchOutcome step = search.run(alpha_init);
    if (!step.ok) return result;

    Vector s = step.x - result.x;
    Vector y = step.grad - result.grad;
    if (s.dot(y) > 1e-10 * s.norm() * y.norm()) {
      pairs.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(pairs.size()) > options.history)
        pairs.pop_front();
    }

    result.x = std::move(step.x);
    result.grad = std::move(step.grad);
    result.f = step.f;
    result.trace.push_back(result.f);
    result.iterations = iter + 1;
  }
  result.converged = result.grad.norm() <= options.gradient_tolerance;
  return result;
}

}  // namespace sgptd
