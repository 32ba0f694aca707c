#include "seqdesign/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace seqdesign::optim {

void AnnealConfig::validate() const {
  if (max_evals < 1) throw ConfigError("annealing budget must allow at least one evaluation");
  if (n_restarts < 1) throw ConfigError("annealing needs at least one restart");
  if (polish_evals < 0 || probe_points < 1) throw ConfigError("invalid polish/probe settings");
  if (!(step_scale > 0)) throw ConfigError("step_scale must be positive");
}

double AnnealConfig::temperature(int k, double c) const { return c / std::log(static_cast<double>(k) + M_E); }

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class Tracker {
 public:
  Tracker(const Objective& f, int budget, MinimizeResult& out) : f_(f), budget_(budget), out_(out) {
    out_.f = kInf;
    out_.best_trace.reserve(static_cast<std::size_t>(budget));
  }

  [[nodiscard]] bool exhausted() const { return out_.evals >= budget_; }
  [[nodiscard]] int remaining() const { return budget_ - out_.evals; }

  /// Returns NaN for rejected evaluations.
  double operator()(const Vector& x) {
    const double v = f_(x);
    ++out_.evals;
    if (std::isnan(v)) {
      ++out_.nan_evals;
    } else {
      // Strict improvement only: ties keep the first-seen point.
      if (out_.x.size() == 0 || v < out_.f) {
        out_.f = v;
        out_.x = x;
      }
      if (std::isfinite(v)) {
        lo_ = std::min(lo_, v);
        hi_ = std::max(hi_, v);
      }
    }
    out_.best_trace.push_back(out_.f);
    return v;
  }

  [[nodiscard]] double finite_range() const { return hi_ >= lo_ ? hi_ - lo_ : 0.0; }
  [[nodiscard]] bool any_finite() const { return hi_ >= lo_; }

 private:
  const Objective& f_;
  int budget_;
  MinimizeResult& out_;
  double lo_ = kInf;
  double hi_ = -kInf;
};

// Bounded Nelder-Mead around the incumbent; the simplex is rebuilt at half the
// previous size whenever it collapses, so the budget is always spent.
void simplex_polish(Tracker& eval, const Box& box, MinimizeResult& out, int budget) {
  if (budget <= 0 || out.x.size() == 0) return;
  const Eigen::Index n = box.dim();
  const int stop_at = out.evals + budget;
  auto can_eval = [&] { return out.evals < stop_at && !eval.exhausted(); };
  auto value = [&](const Vector& x) {
    const double v = eval(x);
    return std::isnan(v) ? kInf : v;
  };
  Vector radius = 0.05 * box.width();
  while (can_eval()) {
    std::vector<Vector> pts{out.x};
    std::vector<double> fs{out.f};
    for (Eigen::Index i = 0; i < n && can_eval(); ++i) {
      Vector x = out.x;
      x[i] += x[i] + radius[i] <= box.upper()[i] ? radius[i] : -radius[i];
      pts.push_back(box.clamp(x));
      fs.push_back(value(pts.back()));
    }
    if (static_cast<Eigen::Index>(pts.size()) < n + 1) return;
    std::vector<std::size_t> order(pts.size());
    const double tol = 1e-10 * box.width().maxCoeff();
    while (can_eval()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
      const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
      double size = 0.0;
      for (const auto& p : pts) size = std::max(size, (p - pts[best]).lpNorm<Eigen::Infinity>());
      if (size <= tol) break;
      Vector centroid = Vector::Zero(n);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i != worst) centroid += pts[i];
      }
      centroid /= static_cast<double>(n);
      const Vector xr = box.clamp(centroid + (centroid - pts[worst]));
      const double fr = value(xr);
      if (fr < fs[best] && can_eval()) {
        const Vector xe = box.clamp(centroid + 2.0 * (centroid - pts[worst]));
        const double fe = value(xe);
        pts[worst] = fe < fr ? xe : xr;
        fs[worst] = std::min(fe, fr);
      } else if (fr < fs[second]) {
        pts[worst] = xr;
        fs[worst] = fr;
      } else if (can_eval()) {
        const bool outside = fr < fs[worst];
        const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                                  : Vector(centroid + 0.5 * (pts[worst] - centroid));
        const double fc = value(xc);
        if (fc < std::min(fr, fs[worst])) {
          pts[worst] = xc;
          fs[worst] = fc;
        } else {
          for (std::size_t i = 0; i < pts.size() && can_eval(); ++i) {
            if (i == best) continue;
            pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
            fs[i] = value(pts[i]);
          }
        }
      }
    }
    radius *= 0.5;
    if ((radius.array() < 1e-12 * box.width().array()).all()) break;
  }
}

}  // namespace

MinimizeResult minimize(const Objective& f, const Box& box, const AnnealConfig& cfg) {
  cfg.validate();
  MinimizeResult out;
  Tracker eval(f, cfg.max_evals, out);
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int probes = std::min(cfg.probe_points, std::max(1, cfg.max_evals / 10));
  std::vector<Vector> probe_x;
  std::vector<double> probe_f;
  for (int i = 0; i < probes && !eval.exhausted(); ++i) {
    probe_x.push_back(box.sample_uniform(rng));
    probe_f.push_back(eval(probe_x.back()));
  }

  double c = cfg.cooling_constant;
  if (!(c > 0)) {
    c = 5.0 * eval.finite_range();
    if (!(c > 0) || !std::isfinite(c)) c = 1.0;
  }
  out.cooling_constant = c;

  const int remaining = eval.remaining();
  const int polish = std::min(cfg.polish_evals, remaining / 2);
  const int anneal_total = remaining - polish;
  const int per_restart = anneal_total / cfg.n_restarts;
  const double t1 = cfg.temperature(1, c);
  const Vector width = box.width();

  for (int r = 0; r < cfg.n_restarts && per_restart > 0; ++r) {
    Vector x;
    double fx;
    if (r == 0 && out.x.size() > 0) {
      x = out.x;
      fx = out.f;
    } else {
      x = box.sample_uniform(rng);
      fx = eval(x);
    }
    if (std::isnan(fx)) fx = kInf;
    for (int k = 1; k < per_restart && !eval.exhausted(); ++k) {
      const double t = cfg.temperature(k, c);
      const double step = cfg.step_scale * std::pow(t / t1, cfg.step_decay);
      Vector y = x;
      for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += step * width[i] * normal(rng);
      y = box.reflect(y);
      const double fy = eval(y);
      if (std::isnan(fy)) continue;
      const double u = unif(rng);
      if (fy <= fx || (std::isfinite(fy) && u < std::exp(-(fy - fx) / t))) {
        x = std::move(y);
        fx = fy;
      }
    }
  }

  simplex_polish(eval, box, out, eval.remaining());

  if (out.x.size() == 0) {
    throw NumericalError("optimizer failure: objective returned NaN at every evaluated point");
  }
  out.degenerate = eval.any_finite() && eval.finite_range() <= 1e-12 * std::max(1.0, std::abs(out.f));
  return out;
}

// ---------------------------------------------------------------------------

LocalResult minimize_projected_lbfgs(const ValueAndGradient& f, const Vector& x0, const Vector& lower,
                                     const Vector& upper, const LocalOptions& options) {
  const Eigen::Index n = x0.size();
  LocalResult res;
  res.x = x0.cwiseMax(lower).cwiseMin(upper);
  Vector g(n);
  res.f = f(res.x, g);
  ++res.evaluations;
  if (!std::isfinite(res.f)) return res;

  std::deque<std::pair<Vector, Vector>> hist;  // (s, y)
  auto projected_gradient = [&](const Vector& x, const Vector& grad) {
    Vector pg = grad;
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((x[i] <= lower[i] && grad[i] > 0) || (x[i] >= upper[i] && grad[i] < 0)) pg[i] = 0.0;
    }
    return pg;
  };

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    res.iterations = iter + 1;
    const Vector pg = projected_gradient(res.x, g);
    if (pg.lpNorm<Eigen::Infinity>() < options.gradient_tol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion restricted to free coordinates.
    Vector q = pg;
    std::vector<double> alphas(hist.size());
    for (std::size_t k = hist.size(); k-- > 0;) {
      const auto& [s, y] = hist[k];
      const double rho = 1.0 / y.dot(s);
      alphas[k] = rho * s.dot(q);
      q -= alphas[k] * y;
    }
    if (!hist.empty()) {
      const auto& [s, y] = hist.back();
      q *= s.dot(y) / y.dot(y);
    } else {
      q /= std::max(1.0, pg.norm());
    }
    for (std::size_t k = 0; k < hist.size(); ++k) {
      const auto& [s, y] = hist[k];
      const double rho = 1.0 / y.dot(s);
      const double beta = rho * y.dot(q);
      q += s * (alphas[k] - beta);
    }
    Vector dir = -q;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (pg[i] == 0.0) dir[i] = 0.0;
    }
    if (dir.dot(pg) >= 0) {
      dir = -pg / std::max(1.0, pg.norm());
      hist.clear();
    }

    double step = 1.0;
    bool accepted = false;
    Vector x_new;
    Vector g_new(n);
    double f_new = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = (res.x + step * dir).cwiseMax(lower).cwiseMin(upper);
      f_new = f(x_new, g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * g.dot(x_new - res.x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (hist.empty()) break;
      hist.clear();
      continue;
    }
    res.progressed = true;
    const Vector s = x_new - res.x;
    const Vector y = g_new - g;
    const double f_old = res.f;
    res.x = x_new;
    res.f = f_new;
    g = g_new;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      hist.emplace_back(s, y);
      if (static_cast<int>(hist.size()) > options.history) hist.pop_front();
    }
    if (std::abs(f_old - f_new) <= options.relative_tol * std::max(1.0, std::abs(f_new))) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace seqdesign::optim
