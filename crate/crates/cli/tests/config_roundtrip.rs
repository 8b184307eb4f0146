use proptest::prelude::*;

use ferrosim::{Scenario, Splitting};
use ferrosim_cli::config::{parse_config, Config};

fn scenario() -> impl Strategy<Value = Scenario<f64>> {
    prop_oneof![
        (0.01..0.2f64, any::<bool>(), 1usize..5, 0.0..1.0f64)
            .prop_map(|(width, heavy_on_top, bands, m_amp)| Scenario::MagneticStripes { width, heavy_on_top, bands, m_amp }),
        (any::<u64>(), -0.9..0.9f64, 0.0..0.5f64, 1usize..6)
            .prop_map(|(seed, c, amplitude, modes)| Scenario::RandomPerturbation { seed, c, amplitude, modes }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalized_config_parses_back(
        nx in 2usize..200, ny in 2usize..200, lx in 0.1..10.0f64,
        eta in 1e-4..0.1f64, alpha in 1e-3..10.0f64, h in 1e-6..0.5f64,
        naive in any::<bool>(), initial in scenario(),
    ) {
        let mut c = Config::default();
        c.grid.nx = nx;
        c.grid.ny = ny;
        c.grid.lx = lx;
        c.params.eta = eta;
        c.params.alpha = alpha;
        c.stepping.h = h;
        c.stepping.splitting = if naive { Splitting::Naive } else { Splitting::Convex };
        c.initial = initial;
        let text = c.normalize();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.normalize(), text);
    }
}
