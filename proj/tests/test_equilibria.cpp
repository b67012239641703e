#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "pacebif/equilibria.hpp"

using namespace pacebif;
using Catch::Matchers::WithinAbs;

namespace {

struct FoldP {
  double p = 1.0;
};

}  // namespace

template <>
struct pacebif::ParamTraits<FoldP> {
  using Field = std::pair<std::string_view, double FoldP::*>;
  static const std::vector<Field>& fields() {
    static const std::vector<Field> f = {{"p", &FoldP::p}};
    return f;
  }
};

namespace {

// V' = p - V^2, N' = -N : fold exactly at p = 0
SystemDef<FoldP> fold_normal_form() {
  SystemDef<FoldP> s;
  s.dim = 2;
  s.name = "fold-normal-form";
  s.rhs = [](const Vec& x, const FoldP& q, Vec& out) {
    out = Vec(2);
    out[0] = q.p - x[0] * x[0];
    out[1] = -x[1];
  };
  s.jacobian = [](const Vec& x, const FoldP&, Mat& out) {
    out = Mat(2, 2);
    out(0, 0) = -2 * x[0];
    out(0, 1) = 0;
    out(1, 0) = 0;
    out(1, 1) = -1;
  };
  s.state_scale = Vec{1.0, 1.0};
  s.time_scale = 1.0;
  s.state_names = {"V", "N"};
  return s;
}

std::vector<const BifurcationEvent*> events_of_kind(const EquilibriumBranch& br,
                                                    EventKind k) {
  std::vector<const BifurcationEvent*> v;
  for (const auto& e : br.events)
    if (e.kind == k) v.push_back(&e);
  return v;
}

}  // namespace

TEST_CASE("classify_point basics") {
  Mat m(2, 2);
  m(0, 0) = -1;
  m(1, 1) = -2;
  REQUIRE(classify_point(m).second == Stability::stable_node);
  Mat h(2, 2);
  h(0, 1) = -1;
  h(1, 0) = 1;  // trace 0, det 1
  REQUIRE(classify_point(h).second == Stability::non_hyperbolic);
  Mat s(2, 2);
  s(0, 0) = 1;
  s(1, 1) = -3;
  REQUIRE(classify_point(s).second == Stability::saddle);
  Mat uf(2, 2);
  uf(0, 0) = 0.1;
  uf(0, 1) = -1;
  uf(1, 0) = 1;
  uf(1, 1) = 0.1;
  REQUIRE(classify_point(uf).second == Stability::unstable_focus);
}

TEST_CASE("newton_equilibrium converges quickly near a root") {
  auto sys = dimless_system();
  DimlessParams q = dimless_defaults();
  q.v1b = -0.125;  // quiescent parameters
  auto xe = rk4_advance(sys, q, Vec{0.0, 0.0}, 400.0, 0.05);
  REQUIRE(xe);
  NewtonResult r = newton_equilibrium(sys, q, *xe);
  REQUIRE(r.converged);
  REQUIRE(r.iterations <= 5);
  REQUIRE(sys.scaled_residual(sys.eval_rhs(r.state, q)) <= 1e-12);
}

TEST_CASE("default dimensionless equilibrium is a unique unstable focus") {
  auto sys = dimless_system();
  DimlessParams q = dimless_defaults();
  auto eqs = find_equilibria(sys, q);
  REQUIRE(eqs.size() == 1);
  // independent root-bracketing oracle on the scalar reduced equation
  double lo = -1.1, hi = 0.4;
  int brackets = 0;
  double root = 0;
  int n = 20000;
  double fprev = oracles::scalar_f(lo, q.v1b, q.v3b, q);
  for (int i = 1; i <= n; ++i) {
    double V = lo + (hi - lo) * i / n;
    double f = oracles::scalar_f(V, q.v1b, q.v3b, q);
    if (fprev * f < 0) {
      double a = V - (hi - lo) / n, b = V;
      for (int it = 0; it < 100; ++it) {
        double m = 0.5 * (a + b);
        if (oracles::scalar_f(a, q.v1b, q.v3b, q) *
                oracles::scalar_f(m, q.v1b, q.v3b, q) <= 0)
          b = m;
        else
          a = m;
      }
      root = 0.5 * (a + b);
      ++brackets;
    }
    fprev = f;
  }
  REQUIRE(brackets == 1);
  REQUIRE_THAT(eqs[0][0], WithinAbs(root, 1e-9));
  REQUIRE_THAT(eqs[0][0], WithinAbs(-0.2564550429, 1e-8));  // frozen from the oracle
  auto [eigs, stab] = classify_point(sys.eval_jac(eqs[0], q));
  REQUIRE(stab == Stability::unstable_focus);
  REQUIRE(eigs.ev[0].real() > 0);
  REQUIRE(eigs.ev[0].imag() != 0);
}

TEST_CASE("three equilibria inside the fold window with a saddle between") {
  auto sys = dimless_system();
  DimlessParams q = dimless_defaults();
  q.v3b = -0.088;
  q.v1b = -0.21;
  auto eqs = find_equilibria(sys, q);
  REQUIRE(eqs.size() == 3);
  REQUIRE(classify_point(sys.eval_jac(eqs[1], q)).second == Stability::saddle);
}

TEST_CASE("manufactured fold is localized exactly at p = 0") {
  auto sys = fold_normal_form();
  FoldP p{1.0};
  EquilibriumBranch br =
      continue_equilibrium(sys, p, "p", Vec{1.0, 0.0}, -1, -1.0, 2.0);
  auto sns = events_of_kind(br, EventKind::SN);
  REQUIRE(sns.size() == 1);
  REQUIRE_THAT(sns[0]->param1, WithinAbs(0.0, 1e-8));
  REQUIRE_THAT(sns[0]->state[0], WithinAbs(0.0, 1e-4));
  // the branch traverses the fold: both signs of V are present
  double vmin = 1e30, vmax = -1e30;
  for (const auto& bp : br.points) {
    vmin = std::min(vmin, bp.state[0]);
    vmax = std::max(vmax, bp.state[0]);
  }
  REQUIRE(vmin < -0.5);
  REQUIRE(vmax > 0.5);
}

TEST_CASE("default-slice branch: HB then the two folds, matching the oracle") {
  auto sys = dimless_system();
  DimlessParams q = dimless_defaults();
  q.v1b = -0.6;
  auto eqs = find_equilibria(sys, q);
  REQUIRE(eqs.size() == 1);
  EquilibriumBranch br =
      continue_equilibrium(sys, q, "v1b", eqs[0], +1, -0.6, -0.05);
  REQUIRE_FALSE(br.truncated);

  // every accepted point satisfies the Newton residual bound
  for (const auto& bp : br.points) {
    DimlessParams qq = q;
    qq.v1b = bp.param;
    REQUIRE(sys.scaled_residual(sys.eval_rhs(bp.state, qq)) <= 1e-10);
  }

  auto sns = events_of_kind(br, EventKind::SN);
  auto hbs = events_of_kind(br, EventKind::HB);
  REQUIRE(sns.size() == 2);
  REQUIRE(hbs.size() == 1);

  oracles::SliceOracle orc = oracles::slice_oracle(q);
  REQUIRE(orc.folds.size() == 2);
  REQUIRE(orc.hopfs.size() == 1);
  double sn_right = std::max(orc.folds[0].v1, orc.folds[1].v1);
  double sn_left = std::min(orc.folds[0].v1, orc.folds[1].v1);
  double got_right = std::max(sns[0]->param1, sns[1]->param1);
  double got_left = std::min(sns[0]->param1, sns[1]->param1);
  REQUIRE_THAT(got_right, WithinAbs(sn_right, 1e-6));
  REQUIRE_THAT(got_left, WithinAbs(sn_left, 1e-6));
  REQUIRE_THAT(hbs[0]->param1, WithinAbs(orc.hopfs[0].v1, 1e-6));

  // frozen locations (verified against the slice oracle first)
  REQUIRE_THAT(got_right, WithinAbs(-0.205590, 2e-4));
  REQUIRE_THAT(got_left, WithinAbs(-0.248435, 2e-4));
  REQUIRE_THAT(hbs[0]->param1, WithinAbs(-0.301965, 2e-4));

  // Hopf invariants: trace ~ 0 at positive determinant, omega recorded
  DimlessParams qh = q;
  qh.v1b = hbs[0]->param1;
  Mat J = sys.eval_jac(hbs[0]->state, qh);
  REQUIRE(std::fabs(J.trace()) <= 1e-8);
  REQUIRE(det2(J) > 0);
  REQUIRE_THAT(hbs[0]->diagnostics.at("omega"),
               WithinAbs(std::sqrt(det2(J)), 1e-6));

  // stability labels are consistent with eigenvalues at sampled points
  for (std::size_t i = 0; i < br.points.size(); i += 50) {
    const auto& bp = br.points[i];
    double re_max = -1e30;
    for (int k = 0; k < bp.eigs.n; ++k)
      re_max = std::max(re_max, bp.eigs.ev[k].real());
    bool labelled_stable = bp.stability == Stability::stable_node ||
                           bp.stability == Stability::stable_focus;
    if (std::fabs(re_max) > 1e-8) REQUIRE(labelled_stable == (re_max < 0));
  }
}

TEST_CASE("v3b branch at the default v1b has exactly two Hopf points, no folds") {
  auto sys = dimless_system();
  DimlessParams q = dimless_defaults();
  q.v3b = -0.36;
  auto eqs = find_equilibria(sys, q);
  REQUIRE(eqs.size() == 1);
  EquilibriumBranch br =
      continue_equilibrium(sys, q, "v3b", eqs[0], +1, -0.36, 0.05);
  REQUIRE(events_of_kind(br, EventKind::SN).empty());
  auto hbs = events_of_kind(br, EventKind::HB);
  REQUIRE(hbs.size() == 2);
  // the default slice value sits inside the oscillatory window
  double h_lo = std::min(hbs[0]->param1, hbs[1]->param1);
  double h_hi = std::max(hbs[0]->param1, hbs[1]->param1);
  REQUIRE(h_lo < -0.1375);
  REQUIRE(h_hi > -0.1375);
}

TEST_CASE("vLb branch mirrors the v1b diagram") {
  auto sys = dimless_system();
  DimlessParams q = dimless_defaults();
  q.vLb = -1.25;
  auto eqs = find_equilibria(sys, q);
  REQUIRE(!eqs.empty());
  EquilibriumBranch br =
      continue_equilibrium(sys, q, "vLb", eqs.back(), +1, -1.25, -0.65);
  auto sns = events_of_kind(br, EventKind::SN);
  auto hbs = events_of_kind(br, EventKind::HB);
  REQUIRE(sns.size() == 2);
  REQUIRE(hbs.size() == 1);
  // reversed structure: the Hopf sits above both folds in vLb
  REQUIRE(hbs[0]->param1 > sns[0]->param1);
  REQUIRE(hbs[0]->param1 > sns[1]->param1);
}

TEST_CASE("full 3D branch over v1 in [-40,-10] has the same event kinds") {
  auto sys = full_system();
  DimensionalParams p = table1();
  p.v1 = -40.0;
  auto eqs = find_equilibria(sys, p);
  REQUIRE(eqs.size() == 1);
  EquilibriumBranch br =
      continue_equilibrium(sys, p, "v1", eqs[0], +1, -40.0, -10.0);
  auto sns = events_of_kind(br, EventKind::SN);
  auto hbs = events_of_kind(br, EventKind::HB);
  REQUIRE(sns.size() == 2);
  REQUIRE(hbs.size() == 1);
  // Hopf to the left of both folds, as in the dimensionless diagram
  REQUIRE(hbs[0]->param1 < std::min(sns[0]->param1, sns[1]->param1));
  for (std::size_t i = 0; i < br.points.size(); i += 100) {
    DimensionalParams pp = p;
    pp.v1 = br.points[i].param;
    REQUIRE(sys.scaled_residual(sys.eval_rhs(br.points[i].state, pp)) <= 1e-9);
  }
}

TEST_CASE("3D hopf test function sign tracks the complex pair") {
  auto sys = full_system();
  DimensionalParams p = table1();
  auto eqs = find_equilibria(sys, p);
  REQUIRE(eqs.size() >= 1);
  Mat J = sys.eval_jac(eqs[0], p);
  auto [eigs, stab] = classify_point(J);
  double h = hopf_testfn(J);
  double re_pair = 0;
  bool has_pair = false;
  for (int i = 0; i < eigs.n; ++i)
    if (std::fabs(eigs.ev[i].imag()) > 1e-9) {
      has_pair = true;
      re_pair = eigs.ev[i].real();
    }
  REQUIRE(has_pair);
  REQUIRE((h > 0) == (re_pair > 0));
}
