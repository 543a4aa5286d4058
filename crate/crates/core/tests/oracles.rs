//! Hand-worked scenarios with values computed outside the library.

mod common;

use fragsim::exchange::{ExchangeId, Price, Quote, Side};
use fragsim::experiment::{mixture_for, run_meta, ExperimentFile, MarketConfig};
use fragsim::experiment::tables::{Defaults, Environment};
use fragsim::market::{simulate, RunOptions};
use fragsim::security::{FundamentalParams, FundamentalSeries};
use fragsim::sip::{NbboQuote, VenuePrice};
use fragsim::stats::{bootstrap_ci, one_sample_t_test, MixtureGroupedSample};
use fragsim::traders::{
    apply_greedy, compute_valuation, route_order, zi_terminal_surplus, GreedyVariant, LaTrader, PrivateBenefits,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quote(venue: u32, bid: i64, ask: i64) -> Quote {
    Quote {
        venue: ExchangeId(venue),
        bid: Some(Price::new(bid)),
        ask: Some(Price::new(ask)),
        time: 0,
    }
}

fn nbbo(bid: (i64, u32), ask: (i64, u32)) -> NbboQuote {
    NbboQuote {
        bid: Some(VenuePrice {
            price: Price::new(bid.0),
            venue: ExchangeId(bid.1),
        }),
        ask: Some(VenuePrice {
            price: Price::new(ask.0),
            venue: ExchangeId(ask.1),
        }),
        time: 0,
    }
}

#[test]
fn arbitrage_threshold_and_prices() {
    let mut la = LaTrader::new(0.001, 2);
    // 1001 is not above 1.001 * 1000.
    la.on_bbo_update(ExchangeId(1), quote(1, 990, 1000));
    assert!(la.on_bbo_update(ExchangeId(0), quote(0, 1001, 1020)).is_none());

    let plan = la.on_bbo_update(ExchangeId(0), quote(0, 1002, 1020)).unwrap();
    assert_eq!((plan.bid_venue, plan.ask_venue), (ExchangeId(0), ExchangeId(1)));
    assert_eq!((plan.buy_price.get(), plan.sell_price.get()), (1001, 1001));

    // Odd sum: the extra tick goes to the sell leg.
    let plan = la.on_bbo_update(ExchangeId(0), quote(0, 1011, 1020)).unwrap();
    assert_eq!((plan.buy_price.get(), plan.sell_price.get()), (1005, 1006));

    // Suppressed while a strategy is executing.
    la.set_executing(true);
    assert!(la.on_bbo_update(ExchangeId(0), quote(0, 1011, 1020)).is_none());
}

#[test]
fn arbitrage_ties_go_to_first_exchange() {
    let mut la = LaTrader::new(0.0, 3);
    la.on_bbo_update(ExchangeId(0), quote(0, 1010, 1030));
    la.on_bbo_update(ExchangeId(1), quote(1, 1010, 1000));
    let plan = la.on_bbo_update(ExchangeId(2), quote(2, 990, 1000)).unwrap();
    assert_eq!(plan.bid_venue, ExchangeId(0));
    assert_eq!(plan.ask_venue, ExchangeId(1));
}

#[test]
fn routing_and_the_routing_bug() {
    let primary = quote(0, 980, 1020);
    let feed = nbbo((995, 1), (1000, 1));
    // A sell at 990 crosses the better bid on exchange 1.
    assert_eq!(route_order(GreedyVariant::MarketSim, Side::Sell, Price::new(990), ExchangeId(0), &primary, &feed), ExchangeId(1));
    // The bug applies the buy test (990 >= 1000 fails) and keeps it home.
    assert_eq!(
        route_order(GreedyVariant::MarketSimWithRoutingBug, Side::Sell, Price::new(990), ExchangeId(0), &primary, &feed),
        ExchangeId(0)
    );
    // A sell at 1005 does not cross 995, but the buy test sends it away.
    assert_eq!(route_order(GreedyVariant::BestGuess, Side::Sell, Price::new(1005), ExchangeId(0), &primary, &feed), ExchangeId(0));
    assert_eq!(
        route_order(GreedyVariant::MarketSimWithRoutingBug, Side::Sell, Price::new(1005), ExchangeId(0), &primary, &feed),
        ExchangeId(1)
    );
    // Buys are routed identically by all variants.
    for v in GreedyVariant::ALL {
        assert_eq!(route_order(v, Side::Buy, Price::new(1000), ExchangeId(0), &primary, &feed), ExchangeId(1));
        assert_eq!(route_order(v, Side::Buy, Price::new(999), ExchangeId(0), &primary, &feed), ExchangeId(0));
    }
}

#[test]
fn greedy_rules() {
    // Buyer valuing 1100 asks for 100 surplus at price 1000.
    let primary = quote(0, 900, 1060);
    let feed = nbbo((950, 1), (1050, 1));
    let v = 1100;
    let p = Price::new(1000);
    // BestGuess sees 1050 (50 surplus >= 0.4 * 100) and takes it.
    assert_eq!(apply_greedy(GreedyVariant::BestGuess, Side::Buy, v, p, 0.4, &primary, &feed).get(), 1050);
    // MarketSim sees only its own 1060 (40 >= 40) and bids its valuation.
    assert_eq!(apply_greedy(GreedyVariant::MarketSim, Side::Buy, v, p, 0.4, &primary, &feed).get(), 1100);
    // At eta 0.6 neither qualifies.
    for var in GreedyVariant::ALL {
        assert_eq!(apply_greedy(var, Side::Buy, v, p, 0.6, &primary, &feed).get(), 1000);
    }
    // Seller valuing 900 asking 1000: the best bid 950 gives 50 of 100.
    let p = Price::new(1000);
    assert_eq!(apply_greedy(GreedyVariant::BestGuess, Side::Sell, 900, p, 0.5, &primary, &feed).get(), 950);
    assert_eq!(apply_greedy(GreedyVariant::MarketSim, Side::Sell, 900, p, 0.5, &primary, &feed).get(), 1000);
}

#[test]
fn valuation_and_surplus() {
    let b = PrivateBenefits::from_unsorted(2, vec![-30.0, 50.0, 10.0, -5.0]).unwrap();
    // Sorted descending: theta^-1 = 50, theta^0 = 10, theta^1 = -5, theta^2 = -30.
    assert_eq!(compute_valuation(&b, 0, 1000, Side::Buy), 995);
    assert_eq!(compute_valuation(&b, 0, 1000, Side::Sell), 1010);
    assert_eq!(compute_valuation(&b, -1, 1000, Side::Buy), 1010);
    // Long 2 after paying 2000: -2000 + 2 * 1000.5 + (-5 - 30).
    assert_eq!(zi_terminal_surplus(&b, 2, -2000, 1000.5), -34.0);
    // Short 1 after receiving 1020: 1020 - 1000.5 - 10.
    assert_eq!(zi_terminal_surplus(&b, -1, 1020, 1000.5), 9.5);
}

#[test]
fn terminal_estimate() {
    let params = FundamentalParams {
        mean: 100_000.0,
        kappa: 0.05,
        shock_variance: 0.0,
        horizon: 50,
    };
    let mut values = vec![100_000.0; 51];
    values[40] = 100_100.0;
    let s = FundamentalSeries::from_values(params, values).unwrap();
    // 100000 + 0.95^10 * 100 = 100059.87
    assert_eq!(s.estimate_terminal(40), 100_060);
    assert_eq!(s.estimate_terminal(50), 100_000);
}

/// With a constant fundamental every trade moves cash and units between
/// traders at no net value, so total surplus equals the private value of
/// the terminal holdings.
#[test]
fn surplus_is_private_value_of_holdings() {
    for config in MarketConfig::ALL {
        let file = ExperimentFile {
            config: Some(config),
            latency: Some(if config == MarketConfig::Cda { 0 } else { 5 }),
            environment: Some(Environment {
                n_zi: 6,
                arrival_rate: 0.2,
                kappa: 0.05,
                horizon: 60,
            }),
            defaults: Some(Defaults {
                fundamental_mean: 100_000.0,
                shock_variance: 0.0,
                pv_variance: 5.0e6,
                alpha: 0.001,
                q_max: 10,
            }),
            mixture: Some(vec![1; 6]),
            mixtures: Some(1),
            runs: Some(40),
            ..ExperimentFile::default()
        };
        let spec = file.resolve().unwrap();
        let mut trades = 0;
        for r in 0..40 {
            let out = simulate(&spec.params, &mixture_for(&spec, 0), run_meta(&spec, 0, r).seed, RunOptions::default()).unwrap();
            assert!(out.series.values().iter().all(|&v| v == 100_000.0));
            let mut held = 0.0;
            for z in &out.zi {
                let b = &z.benefits;
                held += match z.position {
                    q if q > 0 => (1..=q).map(|k| b.theta(k)).sum::<f64>(),
                    q => (q + 1..=0).map(|k| -b.theta(k)).sum::<f64>(),
                };
            }
            let total = out.zi_surplus() + out.la_surplus();
            assert!((total - held).abs() < 1e-6, "{config:?} run {r}: {total} vs {held}");
            common::check_run_invariants(&out).unwrap();
            trades += out.logs.trades.len();
        }
        assert!(trades > 0, "{config:?} produced no trades");
    }
}

#[test]
fn t_test_closed_form() {
    // t = 3 / sqrt(2.5 / 5), df = 4: p = 1 - sqrt(9/11) * 12/11.
    let p = one_sample_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.0).unwrap();
    let want = 1.0 - (9.0f64 / 11.0).sqrt() * 12.0 / 11.0;
    assert!((p - want).abs() < 1e-12, "{p} vs {want}");
    // df = 1: p = 1 - (2/pi) atan(|t|); values 0, 2 against target 0 give t = 1.
    let p = one_sample_t_test(&[0.0, 2.0], 0.0).unwrap();
    assert!((p - 0.5).abs() < 1e-12);
    assert_eq!(one_sample_t_test(&[3.0, 3.0], 3.0).unwrap(), 1.0);
    assert_eq!(one_sample_t_test(&[3.0, 3.0], 4.0).unwrap(), 0.0);
}

#[test]
fn bootstrap_percentile_ranks() {
    // One run per mixture and draws of one mixture: the bootstrap means are
    // raw group values, so the endpoints are order statistics.
    let groups: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
    let sample = MixtureGroupedSample::new(groups.clone()).unwrap();
    let report = bootstrap_ci(&sample, 1000, 1, &[95, 99], &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let reference = common::reference_bootstrap(&groups, 1000, 1, &[95, 99], &mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(report.means, reference.means);
    // Ranks 25 and 975 of 1000 for 95%, 5 and 995 for 99%.
    assert_eq!(report.interval(95).unwrap().lower, report.means[24]);
    assert_eq!(report.interval(95).unwrap().upper, report.means[974]);
    assert_eq!(report.interval(99).unwrap().lower, report.means[4]);
    assert_eq!(report.interval(99).unwrap().upper, report.means[994]);
}
