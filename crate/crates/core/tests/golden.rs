//! Frozen rows. A change here means simulation output changed; update only
//! when that is intended.

use fragsim::experiment::{mixture_for, run_one, ExperimentSpec};
use fragsim::traders::GreedyVariant;

type Row = (&'static str, GreedyVariant, f64, f64, Option<f64>, Option<f64>, Option<f64>, u64, u64);

const SEED: u64 = 15192235289562102095;

#[rustfmt::skip]
const GOLDEN: [Row; 6] = [
    ("env1-cda", GreedyVariant::BestGuess, 6771.178996249157, 0.0, Some(1123.0), Some(1123.0), Some(6.94), 50, 0),
    ("env1-cda", GreedyVariant::MarketSimWithRoutingBug, 6771.178996249157, 0.0, Some(1123.0), Some(1123.0), Some(6.94), 50, 0),
    ("env2-2mnola-d50", GreedyVariant::BestGuess, 155508.46492490394, 0.0, Some(84.0), Some(134.0), Some(33.71926229508197), 488, 0),
    ("env2-2mnola-d50", GreedyVariant::MarketSimWithRoutingBug, 139801.1431313578, 0.0, Some(111.0), Some(190.5), Some(51.28125), 736, 0),
    ("env3-2mla-d25", GreedyVariant::BestGuess, 28921.465687259937, 610.0, Some(626.0), Some(936.0), Some(43.28947368421053), 74, 2),
    ("env3-2mla-d25", GreedyVariant::MarketSimWithRoutingBug, 26170.58520414742, 261.0, Some(537.0), Some(870.5), Some(55.94047619047619), 80, 4),
];

#[test]
fn frozen_rows() {
    for (id, v, zi, la, nbbo, bbo, exec, zi_tx, la_tx) in GOLDEN {
        let spec = ExperimentSpec::builtin(id, v, 2, 3, 42).unwrap();
        let row = run_one(&spec, &mixture_for(&spec, 1), 1, 2).unwrap();
        assert_eq!(row.seed, SEED);
        assert_eq!(
            (row.zi_surplus, row.la_surplus, row.nbbo_spread_median, row.bbo_spread_mean_median, row.exec_time_mean, row.zi_tx, row.la_tx),
            (zi, la, nbbo, bbo, exec, zi_tx, la_tx),
            "{id} {v}"
        );
    }
}
