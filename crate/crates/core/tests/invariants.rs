use nalgebra::DVector;
use proptest::prelude::*;

use distopt::dgd;
use distopt::dogt::{self, DogtState, YInit};
use distopt::linalg;
use distopt::netweights::{self, MixingMatrix, TopologyKind};
use distopt::problems::{self, ProblemInstance};
use distopt::rng::{self, rng, stream};
use distopt::trace;

fn kind(k: u8) -> TopologyKind {
    match k % 3 {
        0 => TopologyKind::Ring,
        1 => TopologyKind::Complete,
        _ => TopologyKind::RandomStronglyConnected,
    }
}

fn directed_pair(n: usize, k: u8, seed: u64) -> (MixingMatrix, MixingMatrix) {
    let t = netweights::build_topology(&kind(k), n, true, seed).unwrap();
    (netweights::row_stochastic_weights(&t).unwrap(), netweights::col_stochastic_weights(&t).unwrap())
}

fn quadratic(n: usize, m: usize, seed: u64) -> ProblemInstance {
    problems::quadratic_family(m, n, -0.1, 1.0, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tracking_sum_is_conserved(n in 2usize..8, m in 2usize..4, k in 0u8..3, seed in 0u64..1000, randomized in any::<bool>()) {
        let (r, c) = directed_pair(n, k, seed);
        let p = quadratic(n, m, seed);
        let x0 = rng::gaussian_vector(&mut rng(seed, stream::INIT_X), n * m, 1.0);
        let mode = if randomized { YInit::RandomizedConsensus } else { YInit::Canonical };
        let mut s = DogtState::new(x0.clone(), dogt::init_y(&x0, &c, &p, seed, mode).unwrap());
        let alpha = 0.05 / p.smoothness.l_c;
        for _ in 0..50 {
            s = dogt::dogt_step(&s, &r, &c, alpha, &p).unwrap();
            let g = p.gradient_c(&s.x);
            let gap = (linalg::block_sum(&s.y, m) - linalg::block_sum(&g, m)).norm();
            prop_assert!(gap <= 1e-9 * (1.0 + g.lp_norm(1)));
        }
    }

    #[test]
    fn h_stays_in_span_of_c_minus_identity(n in 2usize..7, k in 0u8..3, seed in 0u64..1000) {
        let (r, c) = directed_pair(n, k, seed);
        let p = quadratic(n, 2, seed);
        let x0 = rng::gaussian_vector(&mut rng(seed, stream::INIT_X), n * 2, 1.0);
        let mut s = DogtState::new(x0.clone(), dogt::init_y(&x0, &c, &p, seed, YInit::RandomizedConsensus).unwrap());
        for _ in 0..30 {
            s = dogt::dogt_step(&s, &r, &c, 0.01, &p).unwrap();
            let h = s.y.clone() - p.gradient_c(&s.x);
            prop_assert!(dogt::span_residual(&h, &c, 2) <= 1e-9 * (1.0 + h.norm()));
        }
    }

    #[test]
    fn builders_are_stochastic_with_perron_identity(n in 2usize..30, k in 0u8..3, seed in 0u64..10_000, directed in any::<bool>()) {
        let t = netweights::build_topology(&kind(k), n, directed, seed).unwrap();
        let mats = if directed {
            vec![netweights::row_stochastic_weights(&t).unwrap(), netweights::col_stochastic_weights(&t).unwrap()]
        } else {
            vec![netweights::metropolis_weights(&t).unwrap()]
        };
        for w in &mats {
            let (row, col) = w.stochasticity_residuals();
            prop_assert!(row.min(col) <= netweights::STOCHASTIC_TOL);
            prop_assert!(w.perron_residual() <= 1e-10);
            prop_assert!(w.is_compliant(&t) && w.has_positive_diagonal());
        }
        let (r, c) = if directed { (&mats[0], &mats[1]) } else { (&mats[0], &mats[0]) };
        let spec = netweights::spectral_constants(r, c).unwrap();
        prop_assert!(spec.rho_r < 1.0 && spec.rho_c < 1.0 && spec.zeta > 0.0);
    }

    #[test]
    fn consensus_error_is_translation_invariant(n in 1usize..8, m in 1usize..4, shift in -10.0f64..10.0, seed in 0u64..1000) {
        let x = rng::gaussian_vector(&mut rng(seed, stream::INIT_X), n * m, 1.0);
        let moved = &x + linalg::replicate(&DVector::from_element(m, shift), n);
        let (a, b) = trace::consensus_errors(&x, m);
        let (c, d) = trace::consensus_errors(&moved, m);
        prop_assert!((a - c).abs() <= 1e-9 * (1.0 + shift.abs()));
        prop_assert!((b - d).abs() <= 1e-9 * (1.0 + shift.abs()));
    }

    #[test]
    fn dgd_step_is_gradient_step_on_l_alpha(n in 2usize..8, m in 2usize..4, seed in 0u64..1000) {
        let t = netweights::build_topology(&TopologyKind::Ring, n, false, 0).unwrap();
        let d = netweights::metropolis_weights(&t).unwrap();
        let p = quadratic(n, m, seed);
        let alpha = 0.5 * dgd::alpha_max(&d, p.smoothness.l_c).unwrap();
        let x = rng::gaussian_vector(&mut rng(seed, stream::INIT_X), n * m, 1.0);
        let next = dgd::dgd_step(&dgd::DgdState::new(x.clone()), &d, &p, alpha).unwrap();
        let gd = &x - dgd::grad_l_alpha(&x, &d, alpha, &p) * alpha;
        prop_assert!((next.x - gd).norm() <= 1e-12 * (1.0 + x.norm()));
    }

    #[test]
    fn kron_mixing_matches_blockwise_sum(n in 1usize..6, m in 1usize..4, seed in 0u64..1000) {
        let mut g = rng(seed, stream::PROBE);
        let w = rng::gaussian_matrix(&mut g, n, n);
        let x = rng::gaussian_vector(&mut g, n * m, 1.0);
        let dense = linalg::kron_identity(&w, m) * &x;
        prop_assert!((linalg::mix(&w, &x, m) - dense).norm() <= 1e-12 * (1.0 + x.norm() * w.norm()));
    }
}
