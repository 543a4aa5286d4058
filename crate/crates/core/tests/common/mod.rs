//! Oracles and checks shared by the integration tests and the acceptance
//! harness. Nothing here calls the code it checks for the answer.

#![allow(dead_code)]

use rand::Rng;

use fragsim::exchange::{ExchangeId, LimitOrder, OrderBook, OrderId, Price, Quote, Side, SubmitOutcome, Trade, TraderRef};
use fragsim::market::RunOutput;
use fragsim::sip::{NbboQuote, VenuePrice};

// ---------------------------------------------------------------------------
// Order book

/// Flat list of resting orders; every query is a full scan.
#[derive(Default)]
pub struct NaiveBook {
    resting: Vec<LimitOrder>,
}

impl NaiveBook {
    /// Index of the best contra order for an incoming `side` order: best
    /// price, then earliest submission (ids are issued in order).
    fn best_contra(&self, side: Side) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, o) in self.resting.iter().enumerate() {
            if o.side == side {
                continue;
            }
            let better = match best {
                None => true,
                Some(j) => {
                    let b = &self.resting[j];
                    let price_better = match side {
                        Side::Buy => o.price < b.price,
                        Side::Sell => o.price > b.price,
                    };
                    price_better || (o.price == b.price && o.id.0 < b.id.0)
                }
            };
            if better {
                best = Some(i);
            }
        }
        best
    }

    pub fn submit(&mut self, order: LimitOrder, time: u64) -> Option<Trade> {
        if let Some(i) = self.best_contra(order.side) {
            let r = self.resting[i];
            let crosses = match order.side {
                Side::Buy => r.price <= order.price,
                Side::Sell => r.price >= order.price,
            };
            if crosses {
                self.resting.remove(i);
                let (b, s) = if order.side == Side::Buy { (order, r) } else { (r, order) };
                return Some(Trade {
                    buy_order: b.id,
                    sell_order: s.id,
                    buyer: b.owner,
                    seller: s.owner,
                    buy_submit_time: b.submit_time,
                    sell_submit_time: s.submit_time,
                    aggressor: order.side,
                    price: r.price,
                    time,
                    venue: order.venue,
                });
            }
        }
        self.resting.push(order);
        None
    }

    pub fn withdraw(&mut self, id: OrderId) -> Option<LimitOrder> {
        let i = self.resting.iter().position(|o| o.id == id)?;
        Some(self.resting.remove(i))
    }

    pub fn best(&self, side: Side) -> Option<Price> {
        let prices = self.resting.iter().filter(|o| o.side == side).map(|o| o.price);
        match side {
            Side::Buy => prices.max(),
            Side::Sell => prices.min(),
        }
    }

    /// Resting ids of one side, best first.
    pub fn priority(&self, side: Side) -> Vec<OrderId> {
        let mut v: Vec<LimitOrder> = self.resting.iter().filter(|o| o.side == side).copied().collect();
        v.sort_by(|a, b| {
            let by_price = match side {
                Side::Buy => b.price.cmp(&a.price),
                Side::Sell => a.price.cmp(&b.price),
            };
            by_price.then(a.id.0.cmp(&b.id.0))
        });
        v.into_iter().map(|o| o.id).collect()
    }
}

/// Drive the real book and the naive oracle with one random stream of
/// submissions and withdrawals, comparing every outcome and quote.
pub fn check_book_stream<R: Rng>(rng: &mut R, max_ops: usize) -> Result<(), String> {
    let mut book = OrderBook::new();
    let mut oracle = NaiveBook::default();
    let n_ops = rng.random_range(1..=max_ops);
    let mut next_id = 0u64;
    for t in 0..n_ops as u64 {
        if next_id > 0 && rng.random_bool(0.25) {
            let id = OrderId(rng.random_range(0..next_id));
            let got = book.withdraw(id);
            let want = oracle.withdraw(id);
            if got != want {
                return Err(format!("withdraw {id:?} at op {t}: book {got:?}, oracle {want:?}"));
            }
        } else {
            let order = LimitOrder {
                id: OrderId(next_id),
                owner: TraderRef::Zi(rng.random_range(0..8)),
                side: if rng.random_bool(0.5) { Side::Buy } else { Side::Sell },
                price: Price::new(rng.random_range(95..=105)),
                submit_time: t,
                venue: ExchangeId(0),
            };
            next_id += 1;
            let got = match book.submit(order, t) {
                SubmitOutcome::Traded(tr) => Some(tr),
                SubmitOutcome::Rested => None,
            };
            let want = oracle.submit(order, t);
            if got != want {
                return Err(format!("submit {order:?}: book {got:?}, oracle {want:?}"));
            }
        }
        let q = book.quote(ExchangeId(0), t);
        if q.bid != oracle.best(Side::Buy) || q.ask != oracle.best(Side::Sell) {
            return Err(format!("quote after op {t}: {q:?}"));
        }
    }
    for side in [Side::Buy, Side::Sell] {
        let got: Vec<OrderId> = book.resting(side).iter().map(|o| o.id).collect();
        if got != oracle.priority(side) {
            return Err(format!("{side:?} queue order differs"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Per-run invariants

/// Conservation, LA flatness and profitability, and transaction parity.
pub fn check_run_invariants(out: &RunOutput) -> Result<(), String> {
    let la_cash = out.la.as_ref().map_or(0, |l| l.cash);
    let la_pos = out.la.as_ref().map_or(0, |l| l.position as i64);
    let cash: i64 = out.zi.iter().map(|z| z.cash).sum::<i64>() + la_cash;
    let pos: i64 = out.zi.iter().map(|z| z.position as i64).sum::<i64>() + la_pos;
    if cash != 0 || pos != 0 {
        return Err(format!("conservation: cash {cash}, position {pos}"));
    }
    if la_pos != 0 {
        return Err(format!("LA ends with position {la_pos}"));
    }
    let mut zi_tx = 0u64;
    let mut la_tx = 0u64;
    for t in &out.logs.trades {
        for who in [t.buyer, t.seller] {
            if who.is_la() {
                la_tx += 1;
            } else {
                zi_tx += 1;
            }
        }
    }
    if zi_tx + la_tx != 2 * out.logs.trades.len() as u64 || !la_tx.is_multiple_of(2) {
        return Err(format!("transaction parity: zi {zi_tx}, la {la_tx}, trades {}", out.logs.trades.len()));
    }
    let zi_recorded: u64 = out.zi.iter().map(|z| z.transactions).sum();
    let la_recorded = out.la.as_ref().map_or(0, |l| l.transactions);
    if zi_recorded != zi_tx || la_recorded != la_tx {
        return Err(format!("trader counters {zi_recorded}/{la_recorded} vs trade log {zi_tx}/{la_tx}"));
    }
    if la_tx > 0 && out.la_surplus() <= 0.0 {
        return Err(format!("LA traded {la_tx} times with surplus {}", out.la_surplus()));
    }
    for a in &out.logs.arbitrages {
        if (a.profit as f64) < out.params.alpha * a.best_ask.get() as f64 {
            return Err(format!("arbitrage at t={} earned {} on ask {}", a.time, a.profit, a.best_ask.get()));
        }
    }
    let profit: i64 = out.logs.arbitrages.iter().map(|a| a.profit).sum();
    if profit != la_cash {
        return Err(format!("arbitrage profits {profit} != LA cash {la_cash}"));
    }
    Ok(())
}

/// Brute-force NBBO: highest bid and lowest ask over the views, ties going
/// to the lower-numbered exchange.
pub fn brute_force_nbbo(views: &[Option<Quote>], time: u64) -> NbboQuote {
    let mut bid: Option<VenuePrice> = None;
    let mut ask: Option<VenuePrice> = None;
    for (i, v) in views.iter().enumerate() {
        let Some(q) = v else { continue };
        let venue = ExchangeId(i as u32);
        if let Some(b) = q.bid {
            if bid.is_none() || b > bid.unwrap().price {
                bid = Some(VenuePrice { price: b, venue });
            }
        }
        if let Some(a) = q.ask {
            if ask.is_none() || a < ask.unwrap().price {
                ask = Some(VenuePrice { price: a, venue });
            }
        }
    }
    NbboQuote { bid, ask, time }
}

/// Replay the BBO publications of a zero-latency run and check that each
/// NBBO publication equals the brute-force consolidation at that point.
pub fn check_nbbo_replay(out: &RunOutput) -> Result<usize, String> {
    if out.params.latency != 0 {
        return Err("replay needs zero latency".into());
    }
    let n = out.params.n_exchanges;
    let seq = &out.logs.bbo_sequence;
    if seq.len() != out.logs.nbbo.len() {
        return Err(format!("{} BBO publications but {} NBBO", seq.len(), out.logs.nbbo.len()));
    }
    let mut cursor = vec![0usize; n];
    let mut views: Vec<Option<Quote>> = vec![None; n];
    for (k, &venue) in seq.iter().enumerate() {
        let v = venue as usize;
        let q = out.logs.bbo[v][cursor[v]];
        cursor[v] += 1;
        views[v] = Some(q);
        let want = brute_force_nbbo(&views, q.time);
        if out.logs.nbbo[k] != want {
            return Err(format!("NBBO publication {k}: got {:?}, want {want:?}", out.logs.nbbo[k]));
        }
    }
    Ok(seq.len())
}

// ---------------------------------------------------------------------------
// Statistics

/// Reference mixture bootstrap. Consumes the random stream the same way as
/// the library (one uniform mixture index per draw) but computes each mean
/// from per-mixture multiplicities, and the percentile ranks by search.
pub struct RefBootstrap {
    pub means: Vec<f64>,
    pub mean: f64,
    pub se: f64,
    pub endpoints: Vec<(u32, f64, f64)>,
}

pub fn reference_bootstrap<R: Rng>(groups: &[Vec<f64>], b: usize, draw: usize, levels: &[u32], rng: &mut R) -> RefBootstrap {
    let m = groups.len();
    let mut means = Vec::with_capacity(b);
    for _ in 0..b {
        let mut counts = vec![0usize; m];
        for _ in 0..draw {
            counts[rng.random_range(0..m)] += 1;
        }
        let mut total = 0.0;
        let mut n = 0usize;
        for (g, &c) in groups.iter().zip(&counts) {
            for &v in g {
                total += v * c as f64;
            }
            n += g.len() * c;
        }
        means.push(total / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Welford.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in means.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    let se = if b > 1 { (m2 / (b - 1) as f64).sqrt() } else { 0.0 };
    let endpoints = levels
        .iter()
        .map(|&l| {
            // Smallest rank k with k / b >= tail / 2, and likewise above.
            let tail = (100 - l) as usize;
            let mut lo = 1;
            while lo * 200 < tail * b {
                lo += 1;
            }
            let mut hi = 1;
            while hi * 200 < (200 - tail) * b {
                hi += 1;
            }
            (l, means[lo - 1], means[hi.min(b) - 1])
        })
        .collect();
    RefBootstrap { means, mean, se, endpoints }
}

/// Two-sided one-sample t-test p-value via the closed-form Student t CDF
/// for integer degrees of freedom (finite trigonometric series).
pub fn reference_t_test(values: &[f64], target: f64) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let t = (mean - target) / (var / n).sqrt();
    let df = values.len() - 1;
    1.0 - prob_abs_t_below(t.abs(), df)
}

/// P(|T| <= t) for Student's t with `df` degrees of freedom.
pub fn prob_abs_t_below(t: f64, df: usize) -> f64 {
    let theta = (t / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    if df % 2 == 1 {
        // (2/pi) [theta + sin cos (1 + 2/3 cos^2 + 2*4/(3*5) cos^4 + ...)]
        let mut sum = 0.0;
        if df > 1 {
            let mut term = 1.0;
            sum = 1.0;
            let mut k = 1;
            while 2 * k + 3 <= df {
                term *= (2 * k) as f64 / (2 * k + 1) as f64 * c2;
                sum += term;
                k += 1;
            }
            sum *= s * c;
        }
        2.0 / std::f64::consts::PI * (theta + sum)
    } else {
        // sin [1 + 1/2 cos^2 + 1*3/(2*4) cos^4 + ...]
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while 2 * k <= df - 2 {
            term *= (2 * k - 1) as f64 / (2 * k) as f64 * c2;
            sum += term;
            k += 1;
        }
        s * sum
    }
}

/// Synthetic grouped dataset with integer values, so every summation order
/// gives the same floating-point sum.
pub fn synthetic_groups<R: Rng>(rng: &mut R) -> Vec<Vec<f64>> {
    let m = rng.random_range(5..=60);
    let scale = rng.random_range(10..=5000) as f64;
    (0..m)
        .map(|_| {
            let mixture_effect = rng.random_range(-1.0..1.0) * scale;
            let runs = rng.random_range(1..=12);
            (0..runs)
                .map(|_| (mixture_effect + rng.random_range(-1.0..1.0) * scale * 0.5).round())
                .collect()
        })
        .collect()
}
