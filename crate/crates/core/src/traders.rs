//! Background (ZI) traders and the latency arbitrageur.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::Time;
use crate::exchange::{ExchangeId, OrderId, Price, Quote, Side};
use crate::security::round_price;
use crate::sip::NbboQuote;
use crate::Error;

/// Shading range and greedy threshold of a ZI strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZiStrategy {
    pub r_min: i64,
    pub r_max: i64,
    pub eta: f64,
}

impl ZiStrategy {
    pub const fn new(r_min: i64, r_max: i64, eta: f64) -> Self {
        ZiStrategy { r_min, r_max, eta }
    }
}

/// The eleven strategy rows, `ZI_1` at index 0.
pub const STRATEGY_TABLE: [ZiStrategy; 11] = [
    ZiStrategy::new(0, 125, 1.0),
    ZiStrategy::new(0, 250, 1.0),
    ZiStrategy::new(0, 500, 1.0),
    ZiStrategy::new(250, 500, 1.0),
    ZiStrategy::new(0, 1000, 1.0),
    ZiStrategy::new(500, 1000, 0.4),
    ZiStrategy::new(500, 1000, 1.0),
    ZiStrategy::new(0, 1500, 0.6),
    ZiStrategy::new(1000, 2000, 0.4),
    ZiStrategy::new(0, 2500, 0.4),
    ZiStrategy::new(0, 2500, 1.0),
];

/// 1-based row of [`STRATEGY_TABLE`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct StrategyId(u8);

impl StrategyId {
    pub fn new(row: u8) -> Result<Self, Error> {
        if (1..=STRATEGY_TABLE.len() as u8).contains(&row) {
            Ok(StrategyId(row))
        } else {
            Err(Error::InvalidParameter(format!("strategy row {row} outside 1..=11")))
        }
    }

    pub fn row(self) -> u8 {
        self.0
    }

    pub fn strategy(self) -> ZiStrategy {
        STRATEGY_TABLE[self.0 as usize - 1]
    }
}

impl TryFrom<u8> for StrategyId {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self, Error> {
        StrategyId::new(v)
    }
}

impl From<StrategyId> for u8 {
    fn from(s: StrategyId) -> u8 {
        s.0
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ZI{}", self.0)
    }
}

/// How ZI traders take quotes and route orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum GreedyVariant {
    /// Greedy check against the best of primary BBO and NBBO; takes the quote.
    #[serde(rename = "bestguess")]
    #[value(name = "bestguess")]
    BestGuess,
    /// Greedy check against the primary BBO only; prices at the valuation.
    #[serde(rename = "marketsim")]
    #[value(name = "marketsim")]
    MarketSim,
    /// As `MarketSim`, with every order routed by the buy-side rule.
    #[serde(rename = "marketsim-bug")]
    #[value(name = "marketsim-bug")]
    MarketSimWithRoutingBug,
}

impl GreedyVariant {
    pub const ALL: [GreedyVariant; 3] = [
        GreedyVariant::BestGuess,
        GreedyVariant::MarketSim,
        GreedyVariant::MarketSimWithRoutingBug,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GreedyVariant::BestGuess => "bestguess",
            GreedyVariant::MarketSim => "marketsim",
            GreedyVariant::MarketSimWithRoutingBug => "marketsim-bug",
        }
    }
}

impl fmt::Display for GreedyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GreedyVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        GreedyVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variant '{s}'")))
    }
}

/// Marginal private benefits `theta^q` for `q` in `-q_max+1..=q_max`,
/// non-increasing in `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateBenefits {
    q_max: i32,
    thetas: Vec<f64>,
}

impl PrivateBenefits {
    /// `2 * q_max` independent normal draws, sorted descending.
    pub fn generate<R: Rng + ?Sized>(q_max: i32, variance: f64, rng: &mut R) -> Result<Self, Error> {
        let normal =
            Normal::new(0.0, variance.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let thetas = (0..2 * q_max).map(|_| normal.sample(rng)).collect();
        Self::from_unsorted(q_max, thetas)
    }

    pub fn from_unsorted(q_max: i32, mut thetas: Vec<f64>) -> Result<Self, Error> {
        if q_max < 1 || thetas.len() != 2 * q_max as usize {
            return Err(Error::InvalidParameter(format!(
                "need {} private benefits for q_max={q_max}, got {}",
                2 * q_max,
                thetas.len()
            )));
        }
        thetas.sort_by(|a, b| b.total_cmp(a));
        Ok(PrivateBenefits { q_max, thetas })
    }

    pub fn zeros(q_max: i32) -> Self {
        PrivateBenefits {
            q_max,
            thetas: vec![0.0; 2 * q_max as usize],
        }
    }

    pub fn q_max(&self) -> i32 {
        self.q_max
    }

    /// `theta^q`.
    pub fn theta(&self, q: i32) -> f64 {
        assert!(
            (-self.q_max + 1..=self.q_max).contains(&q),
            "theta index {q} outside {}..={}",
            -self.q_max + 1,
            self.q_max
        );
        self.thetas[(q + self.q_max - 1) as usize]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.thetas
    }
}

/// `round(r_hat + theta^{q+1})` when buying, `round(r_hat + theta^q)` when
/// selling.
pub fn compute_valuation(benefits: &PrivateBenefits, position: i32, r_hat: i64, side: Side) -> i64 {
    let theta = match side {
        Side::Buy => benefits.theta(position + 1),
        Side::Sell => benefits.theta(position),
    };
    round_price(r_hat as f64 + theta)
}

/// Uniform integer shade away from `valuation`, clipped at zero.
pub fn draw_shaded_price<R: Rng + ?Sized>(valuation: i64, strategy: &ZiStrategy, side: Side, rng: &mut R) -> Price {
    let (lo, hi) = match side {
        Side::Buy => (valuation - strategy.r_max, valuation - strategy.r_min),
        Side::Sell => (valuation + strategy.r_min, valuation + strategy.r_max),
    };
    Price::new(rng.random_range(lo..=hi).max(0))
}

/// Replace `price` with a more aggressive one when an observed quote would
/// deliver at least `eta` of the requested surplus.
pub fn apply_greedy(
    variant: GreedyVariant,
    side: Side,
    valuation: i64,
    price: Price,
    eta: f64,
    primary: &Quote,
    nbbo: &NbboQuote,
) -> Price {
    let requested = (valuation - price.get()).abs() as f64;
    let (max_bid, min_ask) = match variant {
        GreedyVariant::BestGuess => {
            let mut max_bid = nbbo.bid_price();
            let mut min_ask = nbbo.ask_price();
            if let Some(b) = primary.bid {
                if max_bid.is_none_or(|m| b >= m) {
                    max_bid = Some(b);
                }
            }
            if let Some(a) = primary.ask {
                if min_ask.is_none_or(|m| a <= m) {
                    min_ask = Some(a);
                }
            }
            (max_bid, min_ask)
        }
        GreedyVariant::MarketSim | GreedyVariant::MarketSimWithRoutingBug => (primary.bid, primary.ask),
    };
    let target = match side {
        Side::Buy => min_ask.filter(|a| requested * eta <= (valuation - a.get()) as f64),
        Side::Sell => max_bid.filter(|b| requested * eta <= (b.get() - valuation) as f64),
    };
    match (target, variant) {
        (None, _) => price,
        (Some(quote), GreedyVariant::BestGuess) => quote,
        (Some(_), _) => Price::new(valuation.max(0)),
    }
}

/// Venue an order goes to: the primary exchange unless the NBBO shows a
/// better price elsewhere that the order would immediately cross.
pub fn route_order(
    variant: GreedyVariant,
    side: Side,
    price: Price,
    primary_venue: ExchangeId,
    primary: &Quote,
    nbbo: &NbboQuote,
) -> ExchangeId {
    // The routing bug evaluates the buy branch for every order.
    let branch = match variant {
        GreedyVariant::MarketSimWithRoutingBug => Side::Buy,
        _ => side,
    };
    let (better, crosses, alt) = match branch {
        Side::Buy => match nbbo.ask {
            Some(ask) => (
                primary.ask.is_none_or(|a| ask.price < a),
                price >= ask.price,
                Some(ask.venue),
            ),
            None => (false, false, None),
        },
        Side::Sell => match nbbo.bid {
            Some(bid) => (
                primary.bid.is_none_or(|b| bid.price > b),
                price <= bid.price,
                Some(bid.venue),
            ),
            None => (false, false, None),
        },
    };
    match alt {
        Some(venue) if better && crosses => venue,
        _ => primary_venue,
    }
}

/// Cash plus the public and private value of the terminal position.
pub fn zi_terminal_surplus(benefits: &PrivateBenefits, position: i32, cash: i64, r_terminal: f64) -> f64 {
    let private: f64 = if position > 0 {
        (1..=position).map(|q| benefits.theta(q)).sum()
    } else if position < 0 {
        (position + 1..=0).map(|q| -benefits.theta(q)).sum()
    } else {
        0.0
    };
    cash as f64 + position as f64 * r_terminal + private
}

/// An order a ZI trader has decided to send.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderPlan {
    pub side: Side,
    pub valuation: i64,
    pub price: Price,
    pub venue: ExchangeId,
}

#[derive(Debug, Clone)]
pub struct ZiTrader {
    pub id: usize,
    pub primary: ExchangeId,
    pub strategy_id: StrategyId,
    pub benefits: PrivateBenefits,
    pub position: i32,
    pub cash: i64,
    /// Resting orders this trader submitted, with their venues.
    pub outstanding: Vec<(ExchangeId, OrderId)>,
    pub transactions: u64,
}

impl ZiTrader {
    pub fn new(id: usize, primary: ExchangeId, strategy_id: StrategyId, benefits: PrivateBenefits) -> Self {
        ZiTrader {
            id,
            primary,
            strategy_id,
            benefits,
            position: 0,
            cash: 0,
            outstanding: Vec::new(),
            transactions: 0,
        }
    }

    pub fn strategy(&self) -> ZiStrategy {
        self.strategy_id.strategy()
    }

    /// Side draw, position check, valuation, shading, greedy adjustment and
    /// routing. Consumes one side draw and, if an order results, one price
    /// draw. `None` means the side would breach the position limit.
    #[allow(clippy::too_many_arguments)]
    pub fn plan_order<R: Rng + ?Sized>(
        &self,
        r_hat: i64,
        variant: GreedyVariant,
        greedy: bool,
        primary: &Quote,
        nbbo: &NbboQuote,
        rng: &mut R,
    ) -> Option<OrderPlan> {
        let side = if rng.random::<bool>() { Side::Buy } else { Side::Sell };
        let next = match side {
            Side::Buy => self.position + 1,
            Side::Sell => self.position - 1,
        };
        if next.abs() > self.benefits.q_max() {
            return None;
        }
        let strategy = self.strategy();
        let valuation = compute_valuation(&self.benefits, self.position, r_hat, side);
        let mut price = draw_shaded_price(valuation, &strategy, side, rng);
        if greedy {
            price = apply_greedy(variant, side, valuation, price, strategy.eta, primary, nbbo);
        }
        let venue = route_order(variant, side, price, self.primary, primary, nbbo);
        Some(OrderPlan {
            side,
            valuation,
            price,
            venue,
        })
    }

    pub fn surplus(&self, r_terminal: f64) -> f64 {
        zi_terminal_surplus(&self.benefits, self.position, self.cash, r_terminal)
    }
}

/// A detected cross-venue arbitrage and the two legs that capture it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbPlan {
    pub best_bid: Price,
    pub bid_venue: ExchangeId,
    pub best_ask: Price,
    pub ask_venue: ExchangeId,
    pub buy_price: Price,
    pub sell_price: Price,
}

/// Latency arbitrageur with zero-latency views of every exchange.
#[derive(Debug, Clone)]
pub struct LaTrader {
    pub alpha: f64,
    views: Vec<Quote>,
    pub cash: i64,
    pub position: i32,
    pub transactions: u64,
    executing: bool,
}

impl LaTrader {
    pub fn new(alpha: f64, n_exchanges: usize) -> Self {
        LaTrader {
            alpha,
            views: (0..n_exchanges)
                .map(|i| Quote::empty(ExchangeId(i as u32), 0))
                .collect(),
            cash: 0,
            position: 0,
            transactions: 0,
            executing: false,
        }
    }

    pub fn is_executing(&self) -> bool {
        self.executing
    }

    pub fn set_executing(&mut self, on: bool) {
        self.executing = on;
    }

    /// Record the new BBO and, unless a strategy execution is in flight,
    /// return the legs of any opportunity with `BID* > (1 + alpha) ASK*`.
    pub fn on_bbo_update(&mut self, venue: ExchangeId, quote: Quote) -> Option<ArbPlan> {
        self.views[venue.index()] = quote;
        if self.executing {
            return None;
        }
        self.evaluate()
    }

    pub fn evaluate(&self) -> Option<ArbPlan> {
        let mut bid: Option<(Price, ExchangeId)> = None;
        let mut ask: Option<(Price, ExchangeId)> = None;
        for q in &self.views {
            if let Some(b) = q.bid {
                if bid.is_none_or(|(m, _)| b > m) {
                    bid = Some((b, q.venue));
                }
            }
            if let Some(a) = q.ask {
                if ask.is_none_or(|(m, _)| a < m) {
                    ask = Some((a, q.venue));
                }
            }
        }
        let ((best_bid, bid_venue), (best_ask, ask_venue)) = (bid?, ask?);
        if ((best_bid.get() - best_ask.get()) as f64) <= self.alpha * best_ask.get() as f64 {
            return None;
        }
        let sum = best_bid.get() + best_ask.get();
        Some(ArbPlan {
            best_bid,
            bid_venue,
            best_ask,
            ask_venue,
            buy_price: Price::new(sum.div_euclid(2)),
            sell_price: Price::new(sum.div_euclid(2) + sum.rem_euclid(2)),
        })
    }
}

/// Terminal per-trader record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderRecord {
    pub trader_id: String,
    pub trader_type: String,
    pub strategy: Option<u8>,
    pub position: i32,
    pub cash: i64,
    pub surplus: f64,
    pub transactions: u64,
}

/// Exponential inter-arrival time rounded up to at least one tick.
pub fn draw_interarrival<R: Rng + ?Sized>(exp: &rand_distr::Exp<f64>, rng: &mut R) -> Time {
    let x: f64 = exp.sample(rng);
    (x.ceil() as Time).max(1)
}
