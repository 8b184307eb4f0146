use proptest::prelude::*;

use ferrosim::diagnostics::{check_energy_ledger, parse_timeseries, LedgerRow, LEDGER_COLUMNS};
use ferrosim::grid::{FaceField, Grid, MagField, ScalarField};
use ferrosim::linsolve::{leray_project, Preconditioner, SolverOptions};
use ferrosim::materials::lemma41_gap;
use ferrosim::state::{dissipation, mass, total_energy};
use ferrosim::stepper::solve_cahn_hilliard;
use ferrosim::{build_initial_state, Params, Scenario, Splitting, State, StepOptions};

fn vec3(r: f64) -> impl Strategy<Value = [f64; 3]> {
    [-r..=r, -r..=r, -r..=r]
}

fn cells(n: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..=r, n)
}

fn random_state(g: &Grid<f64>, vals: &[f64]) -> State<f64> {
    let n = g.n_cells();
    let mut s = State::zeros(g);
    let mut it = vals.iter().copied().cycle();
    s.v = FaceField { u: (0..g.n_u()).map(|_| it.next().unwrap()).collect(), v: (0..g.n_v()).map(|_| it.next().unwrap()).collect() };
    s.v.zero_boundary_normal(g);
    for c in 0..3 {
        s.m.comps[c] = ScalarField { values: (0..n).map(|_| it.next().unwrap()).collect() };
    }
    s.phi = ScalarField { values: (0..n).map(|_| 0.9 * it.next().unwrap()).collect() };
    s.mu = ScalarField { values: (0..n).map(|_| it.next().unwrap()).collect() };
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn xi_stays_in_its_bounds(phi in -10.0..10.0f64, xi1 in 0.1..3.0f64, xi2 in 0.1..3.0f64, eb in 0.01..1.0f64) {
        let p = Params { xi1, xi2, eta_blend: eb, ..Params::default() };
        let x = p.xi(phi);
        prop_assert!(p.c1() * (1.0 - 1e-15) <= x && x <= p.c2() * (1.0 + 1e-15));
        if xi2 >= xi1 {
            prop_assert!(p.xi_prime(phi) <= p.c3() * (1.0 + 1e-12));
        }
        let nu = p.nu(phi);
        prop_assert!(p.nu1.min(p.nu2) * (1.0 - 1e-15) <= nu && nu <= p.nu1.max(p.nu2) * (1.0 + 1e-15));
    }

    #[test]
    fn h0_is_symmetric_and_bounded(a in -1.0..1.0f64, b in -1.0..1.0f64) {
        let p = Params { xi1: 1.0, xi2: 2.0, ..Params::default() };
        prop_assert_eq!(p.h0(a, b), p.h0(b, a));
        let (lo, hi) = (a.min(b), a.max(b));
        let sup = (0..=2000).map(|k| p.xi_prime(lo + (hi - lo) * k as f64 / 2000.0).abs()).fold(0.0, f64::max);
        prop_assert!(p.h0(a, b).abs() <= sup + 1e-10);
    }

    #[test]
    fn convex_part_is_convex_and_consistent(s in -(1.0 - 1e-6)..(1.0 - 1e-6)) {
        let p = Params::default();
        prop_assert!(p.psi0_second(s).unwrap().value > 0.0);
        let analytic = 0.5 * p.a * ((1.0 + s) / (1.0 - s)).ln() - p.b * s;
        let got = p.psi0_prime(s).unwrap().value - p.kappa * s;
        prop_assert!((got - analytic).abs() <= 1e-14 * analytic.abs().max(1.0) * 8.0, "{} vs {}", got, analytic);
    }

    #[test]
    fn splitting_inequality_holds(a in vec3(2.0), b in vec3(2.0)) {
        prop_assert!(lemma41_gap(a, b) >= -1e-12);
    }

    #[test]
    fn rho_is_affine(x in -1.0..1.0f64, y in -1.0..1.0f64, t in 0.0..1.0f64) {
        let p = Params::default();
        let lhs = p.rho(t * x + (1.0 - t) * y);
        let rhs = t * p.rho(x) + (1.0 - t) * p.rho(y);
        prop_assert!((lhs - rhs).abs() <= 1e-14);
    }

    #[test]
    fn grad_and_div_are_adjoint(s in cells(30, 1.0), f in cells(71, 1.0)) {
        let g = Grid::new(6, 5, 1.0, 0.7).unwrap();
        let s = ScalarField { values: s };
        let mut ff = FaceField { u: f[..g.n_u()].to_vec(), v: f[g.n_u()..g.n_u() + g.n_v()].to_vec() };
        ff.zero_boundary_normal(&g);
        let a = g.dot_faces(&g.grad(&s), &ff);
        let b = g.dot_cells(&s, &g.div(&ff));
        prop_assert!((a + b).abs() <= 1e-12 * (a.abs() + b.abs()).max(1.0));
    }

    #[test]
    fn energy_parts_and_dissipation_behave(vals in cells(200, 1.0), vals2 in cells(200, 1.0)) {
        let g = Grid::new(5, 5, 1.0, 1.0).unwrap();
        let p = Params::default();
        let s = random_state(&g, &vals);
        let e = total_energy(&s, &p);
        let sum = e.kinetic + e.exchange + e.penalty + e.interface + e.mixing;
        prop_assert!((e.total - sum).abs() <= 1e-13 * sum.abs().max(1e-300));
        prop_assert!(e.kinetic >= 0.0 && e.exchange >= 0.0 && e.penalty >= 0.0 && e.interface >= 0.0);
        // kinetic energy lies between the constant-density bounds
        let mut light = p;
        light.rho2 = p.rho1;
        let mut heavy = p;
        heavy.rho1 = p.rho2;
        let (k_lo, k_hi) = (total_energy(&s, &light).kinetic, total_energy(&s, &heavy).kinetic);
        prop_assert!(k_lo <= e.kinetic * (1.0 + 1e-14) && e.kinetic <= k_hi * (1.0 + 1e-14));
        let s2 = random_state(&g, &vals2);
        for split in [Splitting::Convex, Splitting::Naive] {
            let d = dissipation(&s2, &s, &p, split);
            prop_assert!(d.viscous >= 0.0 && d.chemical >= 0.0 && d.magnetic >= 0.0);
        }
    }

    #[test]
    fn energy_is_invariant_under_transpose(vals in cells(16, 0.8)) {
        // symmetric phi and M on a square grid; v = 0
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        let p = Params::default();
        let mut s = State::zeros(&g);
        s.m = MagField::uniform(&g, [0.6, 0.0, 0.8]);
        let mut t = s.clone();
        for j in 0..4 {
            for i in 0..4 {
                s.phi.values[g.cell(i, j)] = vals[j * 4 + i];
                t.phi.values[g.cell(j, i)] = vals[j * 4 + i];
                s.m.comps[0].values[g.cell(i, j)] = vals[(j * 4 + i + 5) % 16];
                t.m.comps[0].values[g.cell(j, i)] = vals[(j * 4 + i + 5) % 16];
            }
        }
        let (a, b) = (total_energy(&s, &p), total_energy(&t, &p));
        prop_assert!((a.total - b.total).abs() <= 1e-13 * a.total.abs().max(1.0));
    }

    #[test]
    fn projection_is_divergence_free(f in cells(200, 1.0)) {
        let g = Grid::new(9, 10, 1.0, 1.2).unwrap();
        let ff = FaceField { u: f.iter().cycle().take(g.n_u()).copied().collect(), v: f.iter().rev().cycle().take(g.n_v()).copied().collect() };
        let opts = SolverOptions { tol_rel: 1e-12, max_iters: 500, preconditioner: Preconditioner::Spectral };
        let (p1, _) = leray_project(&g, &ff, &opts).unwrap();
        prop_assert!(g.div(&p1).max_abs() <= 1e-8);
        let (p2, _) = leray_project(&g, &ff, &opts).unwrap();
        prop_assert_eq!(p1, p2);
    }

    #[test]
    fn ledger_verdicts_survive_csv(totals in prop::collection::vec(0.0..2.0f64, 1..20), diss in prop::collection::vec(0.0..5.0f64, 20)) {
        let rows: Vec<LedgerRow> = totals.iter().enumerate().map(|(k, &t)| LedgerRow {
            step: k, time: k as f64 * 0.01, total: t, viscous: if k == 0 { 0.0 } else { diss[k] }, ..LedgerRow::default()
        }).collect();
        let mut text = LEDGER_COLUMNS.join(",");
        text.push('\n');
        for r in &rows {
            text.push_str(&r.to_csv());
            text.push('\n');
        }
        let back = parse_timeseries(&text).unwrap();
        prop_assert_eq!(&back, &rows);
        prop_assert_eq!(check_energy_ledger(&back, 1e-3), check_energy_ledger(&rows, 1e-3));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cahn_hilliard_conserves_mass(seed in 0u64..1000, c in -0.5..0.5f64, amp in 0.0..0.3f64) {
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        let p = Params::default();
        let s = build_initial_state(&g, &p, &Scenario::RandomPerturbation { seed, c, amplitude: amp, modes: 3 }).unwrap();
        let opts = StepOptions { h: 1e-2, ..StepOptions::default() };
        let (phi, _) = solve_cahn_hilliard(&s, &s.v, &s.m, &p, &opts).unwrap();
        let (m0, m1) = (mass(&g, &s.phi), mass(&g, &phi));
        prop_assert!((m1 - m0).abs() <= 1e-10 * m0.abs().max(g.volume()));
    }
}

#[test]
fn single_precision_step_runs() {
    let g = Grid::<f32>::new(6, 6, 1.0, 1.0).unwrap();
    let p = Params::<f64>::default().cast::<f32>();
    let s = build_initial_state(&g, &p, &Scenario::RandomPerturbation { seed: 2, c: 0.0, amplitude: 0.1, modes: 2 }).unwrap();
    let opts = StepOptions::<f32> {
        h: 1e-2,
        picard_tol: 1e-5,
        newton_tol: 1e-5,
        linear: SolverOptions { tol_rel: 1e-6, ..StepOptions::<f32>::default().linear },
        ..StepOptions::default()
    };
    let (next, rep) = ferrosim::step(&s, &p, &opts).unwrap();
    assert!(next.is_finite());
    assert!(rep.energy_after.total <= rep.energy_before.total * (1.0 + 1e-4));
}
