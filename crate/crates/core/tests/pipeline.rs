//! End-to-end chains across modules: scattering length → point charges →
//! effective limit, the microscopic system against its monopole reduction,
//! and reproducibility of sweeps under different thread pools.

use lorentz_core::analysis::{convergence_study, Comparison, SweepPlan};
use lorentz_core::effective::{solve_effective_charge, EffectiveOptions};
use lorentz_core::field::l2_distance;
use lorentz_core::microscopic::{charge_comparison, microscopic_field, monopole_field, solve_densities};
use lorentz_core::partialwave::{solve_partial_waves, ChannelSource};
use lorentz_core::pointcharge::solve_point_charges;
use lorentz_core::potentials::{PotentialModel, PotentialSpec};
use lorentz_core::quadrature::Grid3D;
use lorentz_core::randomfield::{derive_seed, sample_configuration, DensitySpec};
use lorentz_core::scattering::{scattering_length_radial_ode, OdeOptions};
use lorentz_core::source::SourceSpec;

fn src() -> SourceSpec<f64> {
    SourceSpec::new(1.0, [0.1, 0.0, -0.1], 0.6, 25.0).unwrap()
}

fn ball() -> DensitySpec<f64> {
    DensitySpec::uniform_ball(1.0).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn point_charge_field_approaches_the_effective_limit() {
    let pot = PotentialModel::new(PotentialSpec::square_well(4.0, 1.0)).unwrap();
    let a = scattering_length_radial_ode(&pot, &OdeOptions::default()).unwrap().a;
    let limit = solve_partial_waves(
        &ball(),
        a,
        25.0,
        ChannelSource::gaussian(&src(), 1.0, 1e-15, 200),
        &Default::default(),
    )
    .unwrap();
    let gram = limit.gram();
    let dist = |n: usize| {
        median(
            (0..7)
                .map(|t| {
                    let cfg = sample_configuration(&ball(), n, derive_seed(31, t)).unwrap();
                    let q = solve_point_charges(&cfg.points, a, 25.0, &src(), &Default::default()).unwrap();
                    gram.distance_to_atoms(&cfg.points, &q.values).value
                })
                .collect(),
        )
    };
    let (d64, d1024) = (dist(64), dist(1024));
    // N^{-1/2} predicts a factor 4 over this range.
    assert!(d1024 < d64 / 2.5, "{d64} {d1024}");
    assert!(d1024 < 0.25 * gram.norm2.sqrt());
}

#[test]
fn grid_and_partial_wave_limits_agree() {
    let a = 0.518;
    let grid = Grid3D::new(1.0, 16, 50).unwrap();
    let q = solve_effective_charge(&ball(), &grid, a, 25.0, &src(), &EffectiveOptions::default()).unwrap();
    let pw = solve_partial_waves(
        &ball(),
        a,
        25.0,
        ChannelSource::gaussian(&src(), 1.0, 1e-15, 200),
        &Default::default(),
    )
    .unwrap();
    let scale = q.q_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (x, &qm) in grid.nodes.iter().zip(&q.q_values) {
        assert!((pw.q_at(x) - qm).abs() < 2e-3 * scale);
    }
}

#[test]
fn microscopic_charges_track_point_charges() {
    let pot = PotentialModel::new(PotentialSpec::square_well(4.0, 1.0)).unwrap();
    let grid = Grid3D::new(1.0, 8, 14).unwrap();
    let pts = sample_configuration(&ball(), 12, 3).unwrap().points;
    let sol = solve_densities(&pts, &pot, &grid, 25.0, &src(), &Default::default()).unwrap();
    let cmp = charge_comparison(&sol, &src()).unwrap();
    let qn: f64 = sol.charges.iter().map(|q| q * q).sum::<f64>().sqrt();
    assert!(cmp.identity_residual < 1e-11);
    assert!(cmp.q_difference < 0.5 * qn);
    let gap = l2_distance(&microscopic_field(&sol, &src()), &monopole_field(&sol, &src()))
        .unwrap()
        .value;
    let size = l2_distance(&monopole_field(&sol, &src()), &lorentz_core::field::GreenField::from_source(&src()))
        .unwrap()
        .value;
    assert!(gap < 0.5 * size, "{gap} {size}");
}

#[test]
fn sweeps_do_not_depend_on_thread_count() {
    let plan = SweepPlan {
        comparisons: vec![Comparison::HatVsLimit, Comparison::PointwiseCharge],
        n_values: vec![32, 64, 300],
        trials: 3,
        master_seed: 77,
        density: ball(),
        a: 0.518,
        lambda: 25.0,
        source: src(),
        point_charge: Default::default(),
        partial_wave: Default::default(),
        microscopic: None,
        y1: None,
    };
    let on = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| convergence_study(&plan).unwrap().records)
    };
    let one = on(1);
    let three = on(3);
    assert_eq!(one.len(), 9);
    for (a, b) in one.iter().zip(&three) {
        assert_eq!(a.seed, b.seed);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
