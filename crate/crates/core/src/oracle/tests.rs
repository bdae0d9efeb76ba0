use super::identities::{max_over_configurations, swap_increment_cap};
use super::*;
use crate::seed::{derive_stream, SeedSpec};
use num_rational::Rational64;
use num_traits::Zero;
use rand::Rng;

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

fn lambdas() -> Vec<Rational64> {
    LAMBDA_GRID.iter().map(|&(n, d)| r(n, d)).collect()
}

fn random_window(rng: &mut crate::seed::SimRng, radius: usize) -> WindowConfiguration {
    WindowConfiguration::symmetric(radius, (0..2 * radius + 1).map(|_| rng.random::<bool>()).collect())
}

/// Arbitrary local function: a random integer lookup table over the support.
fn random_table(rng: &mut crate::seed::SimRng, radius: usize) -> Vec<i64> {
    (0..1usize << (2 * radius + 1)).map(|_| rng.random_range(-20..=20)).collect()
}

fn table_lookup(table: &[i64], radius: usize, xi: &WindowConfiguration) -> Result<Rational64, OracleError> {
    let r = radius as i64;
    let mut index = 0usize;
    for (i, x) in (-r..=r).enumerate() {
        if xi.get(x)? {
            index |= 1 << i;
        }
    }
    Ok(Rational64::from_integer(table[index]))
}

#[test]
fn generator_on_site_value_example() {
    let xi = WindowConfiguration::symmetric(1, vec![true, false, true]);
    for lambda in lambdas() {
        assert_eq!(apply_generator(&SiteValue(0), &xi, &lambda).unwrap(), r(4, 1));
    }
}

#[test]
fn generator_kills_constants() {
    let mut rng = derive_stream(&SeedSpec::new(1, 0));
    for _ in 0..50 {
        let xi = random_window(&mut rng, 3);
        assert_eq!(apply_generator(&Constant(r(7, 3)), &xi, &r(1, 2)).unwrap(), Rational64::zero());
    }
}

#[test]
fn generator_on_every_site_value() {
    for lambda in lambdas() {
        for index in 0..1u64 << 9 {
            let xi = WindowConfiguration::from_index(4, index);
            for x in -3..=3i64 {
                let lhs = apply_generator(&SiteValue(x), &xi, &lambda).unwrap();
                let speed = r(2, 1) - lambda * xi.value::<Rational64>(0).unwrap();
                let lap = xi.value::<Rational64>(x + 1).unwrap() + xi.value::<Rational64>(x - 1).unwrap()
                    - r(2, 1) * xi.value::<Rational64>(x).unwrap();
                assert_eq!(lhs, speed * lap, "x={x} config={xi:?}");
            }
        }
    }
}

#[test]
fn generator_rejects_short_windows() {
    let xi = WindowConfiguration::constant(2, true);
    let err = apply_generator::<Rational64, _>(&SiteValue(2), &xi, &r(1, 1)).unwrap_err();
    assert_eq!(
        err,
        OracleError::InsufficientWindow {
            required: 3,
            available: 2
        }
    );
}

#[test]
fn psi_examples() {
    let mut xi = WindowConfiguration::constant(2, false);
    xi.set(0, true);
    assert_eq!(psi(&CorrectorSpec::psi(1), &xi, &r(1, 2)).unwrap(), r(-1, 2));
    let empty = WindowConfiguration::constant(3, false);
    assert_eq!(psi(&CorrectorSpec::psi(2), &empty, &r(0, 1)).unwrap(), Rational64::zero());
    assert_eq!(psi(&CorrectorSpec::psi(2), &empty, &r(1, 2)).unwrap(), r(2, 1));
}

#[test]
fn psi_needs_headroom() {
    let xi = WindowConfiguration::constant(2, false);
    assert!(matches!(
        psi(&CorrectorSpec::psi(2), &xi, &r(1, 2)),
        Err(OracleError::InsufficientWindow { required: 3, .. })
    ));
}

#[test]
fn psi_matches_occurrence_counts() {
    let mut rng = derive_stream(&SeedSpec::new(2, 0));
    for n in 1..=6 {
        for _ in 0..200 {
            let xi = random_window(&mut rng, n + 1);
            let rho = r(rng.random_range(0..=8), 8);
            let direct = psi(&CorrectorSpec::psi(n), &xi, &rho).unwrap();
            assert_eq!(direct, psi_by_counts(n, &xi, &rho).unwrap());
        }
    }
}

#[test]
fn phi_examples() {
    let spec = CorrectorSpec::phi(1, 2);
    assert_eq!(phi::<Rational64>(&spec, &WindowConfiguration::constant(4, false)).unwrap(), Rational64::zero());
    assert_eq!(phi::<Rational64>(&spec, &WindowConfiguration::constant(4, true)).unwrap(), r(11, 2));
    assert!(matches!(
        phi::<Rational64>(&spec, &WindowConfiguration::constant(3, true)),
        Err(OracleError::InsufficientWindow { required: 4, .. })
    ));
}

#[test]
fn phi_matches_weight_form() {
    let mut rng = derive_stream(&SeedSpec::new(3, 0));
    for n in 1..=4 {
        for ell in 1..=4 {
            for _ in 0..100 {
                let xi = random_window(&mut rng, n + ell + 1);
                let direct = phi::<Rational64>(&CorrectorSpec::phi(n, ell), &xi).unwrap();
                assert_eq!(direct, phi_by_weights::<Rational64>(n, ell, &xi).unwrap());
            }
        }
    }
}

#[test]
fn phi_weights_small_cases() {
    assert_eq!(phi_weights::<Rational64>(1), vec![r(1, 1), r(0, 1)]);
    assert_eq!(phi_weights::<Rational64>(2), vec![r(3, 2), r(1, 2), r(0, 1)]);
    assert_eq!(phi_weights::<Rational64>(3), vec![r(2, 1), r(1, 1), r(1, 3), r(0, 1)]);
}

#[test]
fn corrector_specs_reject_zero() {
    assert!(CorrectorSpec::psi(0).validate().is_err());
    assert!(CorrectorSpec::phi(1, 0).validate().is_err());
    assert_eq!(CorrectorSpec::phi(2, 3).required_radius(), 6);
    assert_eq!(CorrectorSpec::psi(2).required_radius(), 3);
}

#[test]
fn support_locality() {
    let mut rng = derive_stream(&SeedSpec::new(4, 0));
    let psi3 = Psi { n: 3, rho: r(1, 3) };
    let phi22 = Phi { n: 2, ell: 2 };
    for _ in 0..500 {
        let xi = random_window(&mut rng, 6);
        let mut outside = xi.clone();
        for x in [-6i64, -5, -4, -3, 3, 4, 5, 6] {
            outside.set(x, rng.random());
        }
        assert_eq!(psi3.eval(&xi).unwrap(), psi3.eval(&outside).unwrap());
        let mut far = xi.clone();
        for x in [-6i64, -5, -4, 4, 5, 6] {
            far.set(x, rng.random());
        }
        let a: Rational64 = phi22.eval(&xi).unwrap();
        assert_eq!(a, phi22.eval(&far).unwrap());
        let s: Rational64 = SiteValue(-2).eval(&xi).unwrap();
        let mut moved = xi.clone();
        moved.set(1, !xi.get(1).unwrap());
        assert_eq!(s, SiteValue(-2).eval(&moved).unwrap());
    }
}

#[test]
fn reads_outside_window_are_errors() {
    let xi = WindowConfiguration::constant(2, true);
    assert!(xi.get(3).is_err());
    assert!(xi.get(-3).is_err());
    assert!(Psi { n: 4, rho: r(1, 2) }.eval(&xi).is_err());
}

#[test]
fn shift_reads_neighbour() {
    let xi = WindowConfiguration::symmetric(2, vec![false, false, true, true, false]);
    let right = xi.shifted(1);
    assert_eq!(right.get(0).unwrap(), true);
    assert_eq!(right.get(-1).unwrap(), true);
    assert_eq!(right.get(1).unwrap(), false);
    let left = xi.shifted(-1);
    assert_eq!(left.get(1).unwrap(), true);
    assert_eq!(left.get(0).unwrap(), false);
}

/// Generator with every bond in the window, no truncation.
fn all_bond_generator(
    f: &dyn LocalFunction<Rational64>,
    xi: &WindowConfiguration,
    lambda: Rational64,
) -> Rational64 {
    let w = xi.radius() as i64;
    let base = f.eval(xi).unwrap();
    let mut total = Rational64::zero();
    for y in -w..w {
        total += f.eval(&xi.swapped(y)).unwrap() - base;
    }
    let rate = Rational64::from_integer(1) - lambda * xi.value::<Rational64>(0).unwrap();
    total + rate * (f.eval(&xi.shifted(1)).unwrap() + f.eval(&xi.shifted(-1)).unwrap() - r(2, 1) * base)
}

#[test]
fn truncated_exchange_matches_all_bonds() {
    let mut rng = derive_stream(&SeedSpec::new(5, 0));
    for radius in 0..=3usize {
        for _ in 0..20 {
            let table = random_table(&mut rng, radius);
            let f = FnLocal {
                radius,
                rule: |xi: &WindowConfiguration| table_lookup(&table, radius, xi),
            };
            for _ in 0..20 {
                let xi = random_window(&mut rng, radius + 4);
                let lambda = r(rng.random_range(0..=4), 4);
                assert_eq!(
                    apply_generator(&f, &xi, &lambda).unwrap(),
                    all_bond_generator(&f, &xi, lambda)
                );
            }
        }
    }
}

/// Environment on sites `-m..=m` seen from a walker at `x`.
fn joint_generator_at_origin(
    table: &[i64],
    radius: usize,
    eta: &[bool],
    m: i64,
    lambda: Rational64,
) -> Rational64 {
    let at = |x: i64, env: &[bool]| -> Rational64 {
        let r = radius as i64;
        let values = (-r..=r).map(|k| env[(x + k + m) as usize]).collect();
        table_lookup(table, radius, &WindowConfiguration::symmetric(radius, values)).unwrap()
    };
    let here = at(0, eta);
    let mut total = Rational64::zero();
    for y in -m..m {
        let mut swapped = eta.to_vec();
        swapped.swap((y + m) as usize, (y + m + 1) as usize);
        total += at(0, &swapped) - here;
    }
    let rate = Rational64::from_integer(1) - lambda * Rational64::from_integer(eta[m as usize] as i64);
    total + rate * (at(1, eta) + at(-1, eta) - r(2, 1) * here)
}

#[test]
fn agrees_with_joint_generator() {
    let mut rng = derive_stream(&SeedSpec::new(6, 0));
    for radius in 0..=2usize {
        let table = random_table(&mut rng, radius);
        let f = FnLocal {
            radius,
            rule: |xi: &WindowConfiguration| table_lookup(&table, radius, xi),
        };
        let m = radius as i64 + 3;
        for _ in 0..100 {
            let eta: Vec<bool> = (0..2 * m + 1).map(|_| rng.random()).collect();
            let xi = WindowConfiguration::new(-m, eta.clone());
            for lambda in [r(0, 1), r(1, 3), r(1, 1)] {
                assert_eq!(
                    apply_generator(&f, &xi, &lambda).unwrap(),
                    joint_generator_at_origin(&table, radius, &eta, m, lambda)
                );
            }
        }
    }
}

#[test]
fn psi_identity_examples() {
    for lambda in lambdas() {
        let check = check_psi_identity(1, &lambda, &r(1, 2), 2).unwrap();
        assert!(check.is_exact_zero());
    }
    let check = check_psi_identity(3, &r(1, 2), &r(1, 4), 4).unwrap();
    assert!(check.is_exact_zero());
    assert!(matches!(
        check_psi_identity(4, &r(1, 2), &r(1, 4), 4),
        Err(OracleError::InsufficientWindow { required: 5, available: 4 })
    ));
}

#[test]
fn read_set_enumeration_matches_full_window() {
    let (lambda, rho) = (r(1, 2), r(1, 4));
    let f = Psi { n: 3, rho };
    let probe = |xi: &WindowConfiguration| -> Result<(Rational64, Rational64), OracleError> {
        let lhs = apply_generator(&f, xi, &lambda)?;
        let speed = r(2, 1) - lambda * xi.value::<Rational64>(0)?;
        let rhs = speed
            * (r(2, 1) * xi.value::<Rational64>(0)? - xi.value::<Rational64>(3)? - xi.value::<Rational64>(-3)?);
        Ok(((lhs - rhs).abs(), Rational64::zero()))
    };
    let full = max_over_configurations(4, 4, probe).unwrap();
    assert_eq!(full.configurations, 1 << 9);
    assert_eq!(full.residual, check_psi_identity(3, &lambda, &rho, 4).unwrap().residual);

    let g = Phi { n: 2, ell: 2 };
    let probe = |xi: &WindowConfiguration| -> Result<(Rational64, Rational64), OracleError> {
        let lhs: Rational64 = apply_generator(&g, xi, &r(1, 1))?;
        let speed = r(2, 1) - xi.value::<Rational64>(0)?;
        let right = xi.value::<Rational64>(2)? - right_average::<Rational64>(xi, 2, 2)?;
        let left = xi.value::<Rational64>(-2)? - left_average::<Rational64>(xi, -2, 2)?;
        Ok(((lhs + speed * (right + left)).abs(), Rational64::zero()))
    };
    let full = max_over_configurations(5, 5, probe).unwrap();
    assert_eq!(full.configurations, 1 << 11);
    assert!(full.residual.is_zero());
}

#[test]
fn enumeration_detects_a_wrong_identity() {
    let f = Psi { n: 2, rho: r(1, 2) };
    let check = max_over_configurations(2, 3, |xi| {
        let lhs = apply_generator(&f, xi, &r(1, 1))?;
        let wrong = r(2, 1) * (r(2, 1) * xi.value::<Rational64>(0)? - xi.value::<Rational64>(2)?);
        Ok(((lhs - wrong).abs(), Rational64::zero()))
    })
    .unwrap();
    assert!(check.residual > Rational64::zero());
}

#[test]
fn phi_identity_examples() {
    for n in 1..=3 {
        for lambda in lambdas() {
            assert!(check_phi_identity(n, 1, &lambda, n + 2).unwrap().is_exact_zero());
        }
    }
    assert!(check_phi_identity(2, 2, &r(1, 1), 5).unwrap().is_exact_zero());
    assert!(matches!(
        check_phi_identity(2, 2, &r(1, 1), 4),
        Err(OracleError::InsufficientWindow { required: 5, available: 4 })
    ));
}

#[test]
fn enumeration_budget() {
    assert_eq!(
        check_psi_identity(1, &r(1, 1), &r(1, 2), 13).unwrap_err(),
        OracleError::EnumerationBudgetExceeded { sites: 27, budget: 25 }
    );
    assert!(check_psi_identity(1, &r(1, 1), &r(1, 2), 12).is_ok());
}

#[test]
fn float_path_within_tolerance() {
    for n in 1..=3 {
        let check = check_psi_identity(n, &0.25, &0.75, n + 1).unwrap();
        assert!(check.residual <= FLOAT_TOLERANCE);
        let check = check_phi_identity(n, 3, &0.5, n + 4).unwrap();
        assert!(check.residual <= FLOAT_TOLERANCE && check.sub_residual <= FLOAT_TOLERANCE);
    }
}

#[test]
fn small_verification_grid_is_exact() {
    let rows = run_verification(&VerifyOptions {
        n_max: 2,
        ell_max: 2,
        window: 5,
        exact: true,
    })
    .unwrap();
    assert_eq!(rows.len(), 2 * 4 * 5 + 2 * 2 * 4);
    assert!(rows.iter().all(|row| row.status == VerifyStatus::Pass && row.residual == "0"));
}

#[test]
fn verification_reports_small_windows() {
    let rows = run_verification(&VerifyOptions {
        n_max: 3,
        ell_max: 1,
        window: 3,
        exact: true,
    })
    .unwrap();
    assert!(rows.iter().any(|row| row.status == VerifyStatus::InsufficientWindow));
    assert!(rows.iter().all(|row| row.status != VerifyStatus::Fail));
    assert!(run_verification(&VerifyOptions {
        n_max: 0,
        ell_max: 1,
        window: 3,
        exact: true
    })
    .is_err());
}

#[test]
fn increment_bounds_on_constant_windows() {
    let bounds = check_increment_bounds(1, 2, 4, 0, 0).unwrap();
    assert!(bounds.all_hold());
    assert_eq!(bounds.samples, 2);

    let full = WindowConfiguration::constant(4, true);
    let psi = Psi { n: 1, rho: r(1, 2) };
    assert_eq!(psi.eval(&full).unwrap() - psi.eval(&full.shifted(1)).unwrap(), Rational64::zero());
}

#[test]
fn increment_bounds_on_random_windows() {
    let bounds = check_increment_bounds(3, 3, 7, 10_000, 0xB0B).unwrap();
    assert!(bounds.all_hold(), "{bounds:?}");
}

#[test]
fn increment_bounds_need_window() {
    assert!(matches!(
        check_increment_bounds(3, 3, 6, 10, 0),
        Err(OracleError::InsufficientWindow { required: 7, .. })
    ));
}

#[test]
fn swap_increment_on_left_edge_bond() {
    // Exchange across (-n-1, -n) moves a particle from weight a_1 to a_0.
    let (n, ell) = (2usize, 2usize);
    let mut xi = WindowConfiguration::constant(5, false);
    xi.set(-3, true);
    let phi = Phi { n, ell };
    let before: Rational64 = phi.eval(&xi).unwrap();
    let after: Rational64 = phi.eval(&xi.swapped(-3)).unwrap();
    let d = after - before;
    let a = phi_weights::<Rational64>(ell);
    assert_eq!(d * d, (a[0] - a[1]) * (a[0] - a[1]));
    assert_eq!(swap_increment_cap(n, &a, -3), d * d);
    assert!(d * d > (a[1] - a[2]) * (a[1] - a[2]));
}
