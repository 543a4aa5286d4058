//! One simulation run: exchanges, SIP, security and traders wired to the
//! event loop.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::engine::{Event, EventKind, EventQueue, Time};
use crate::exchange::{
    Exchange, ExchangeId, LimitOrder, OrderId, Price, Quote, Side, SubmitOutcome, Subscriber, Trade, TraderRef,
};
use crate::security::{FundamentalParams, FundamentalSeries};
use crate::sip::{compute_nbbo, NbboQuote, Sip};
use crate::traders::{
    draw_interarrival, GreedyVariant, LaTrader, PrivateBenefits, StrategyId, TraderRecord, ZiTrader,
};
use crate::Error;

/// Everything a run needs besides the strategy assignment and the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub horizon: Time,
    /// Poisson arrival rate per ZI trader.
    pub arrival_rate: f64,
    pub fundamental_mean: f64,
    pub kappa: f64,
    pub shock_variance: f64,
    pub pv_variance: f64,
    pub q_max: i32,
    pub alpha: f64,
    pub n_exchanges: usize,
    pub with_la: bool,
    pub latency: Time,
    pub variant: GreedyVariant,
    pub greedy_enabled: bool,
}

impl SimParams {
    pub fn fundamental(&self) -> FundamentalParams {
        FundamentalParams {
            mean: self.fundamental_mean,
            kappa: self.kappa,
            shock_variance: self.shock_variance,
            horizon: self.horizon,
        }
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), Error> {
        self.fundamental().validate()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if !(self.arrival_rate > 0.0 && self.arrival_rate.is_finite()) {
            return bad(format!("arrival rate {} must be positive", self.arrival_rate));
        }
        if !(self.pv_variance >= 0.0) {
            return bad(format!("private value variance {} must be non-negative", self.pv_variance));
        }
        if self.q_max < 1 {
            return bad(format!("q_max {} must be at least 1", self.q_max));
        }
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha {} must be non-negative", self.alpha));
        }
        if self.n_exchanges == 0 {
            return bad("need at least one exchange".into());
        }
        if self.with_la && self.n_exchanges < 2 {
            return bad("an arbitrageur needs at least two exchanges".into());
        }
        Ok(())
    }
}

/// Options that change what is recorded, never what happens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub record_orders: bool,
    /// Check every NBBO publication against the exchanges' live books.
    /// Only meaningful with zero SIP latency.
    pub audit_nbbo: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OrderEventKind {
    Add,
    Withdraw,
    Trade,
}

/// One row of the optional order log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderLogEntry {
    pub time: Time,
    pub venue: u32,
    pub event: OrderEventKind,
    pub order_id: u64,
    pub trader_id: String,
    pub side: &'static str,
    pub price: i64,
    pub exec_price: Option<i64>,
}

/// An arbitrage the LA acted on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbRecord {
    pub time: Time,
    pub best_bid: Price,
    pub best_ask: Price,
    /// Realized cash gain over the two legs.
    pub profit: i64,
}

#[derive(Debug, Clone, Default)]
pub struct RunLogs {
    pub trades: Vec<Trade>,
    /// Every BBO publication, per exchange.
    pub bbo: Vec<Vec<Quote>>,
    /// Venue of every BBO publication, in publication order across
    /// exchanges.
    pub bbo_sequence: Vec<u32>,
    /// Every NBBO publication.
    pub nbbo: Vec<NbboQuote>,
    pub arbitrages: Vec<ArbRecord>,
    pub orders: Option<Vec<OrderLogEntry>>,
}

/// State and logs at the end of a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub params: SimParams,
    pub series: FundamentalSeries,
    pub logs: RunLogs,
    pub zi: Vec<ZiTrader>,
    pub la: Option<LaTrader>,
    pub events_dispatched: u64,
    /// NBBO publications that disagreed with the live books; `None` when
    /// not audited.
    pub nbbo_mismatches: Option<u64>,
}

impl RunOutput {
    pub fn zi_surplus(&self) -> f64 {
        let r_t = self.series.terminal();
        self.zi.iter().map(|z| z.surplus(r_t)).sum()
    }

    pub fn la_surplus(&self) -> f64 {
        self.la.as_ref().map_or(0.0, |la| la.cash as f64)
    }

    pub fn trader_records(&self) -> Vec<TraderRecord> {
        let r_t = self.series.terminal();
        let mut out: Vec<TraderRecord> = self
            .zi
            .iter()
            .map(|z| TraderRecord {
                trader_id: TraderRef::Zi(z.id).to_string(),
                trader_type: "ZI".into(),
                strategy: Some(z.strategy_id.row()),
                position: z.position,
                cash: z.cash,
                surplus: z.surplus(r_t),
                transactions: z.transactions,
            })
            .collect();
        if let Some(la) = &self.la {
            out.push(TraderRecord {
                trader_id: TraderRef::La.to_string(),
                trader_type: "LA".into(),
                strategy: None,
                position: la.position,
                cash: la.cash,
                surplus: la.cash as f64,
                transactions: la.transactions,
            });
        }
        out
    }
}

/// The simulated world of one run.
pub struct Market {
    params: SimParams,
    exchanges: Vec<Exchange>,
    sip: Sip,
    series: FundamentalSeries,
    zi: Vec<ZiTrader>,
    la: Option<LaTrader>,
    rng: ChaCha8Rng,
    interarrival: Exp<f64>,
    next_order_id: u64,
    logs: RunLogs,
    audit: Option<u64>,
}

impl Market {
    /// Build the world and draw, in order, the fundamental shocks, each
    /// trader's private benefits and each trader's first arrival.
    pub fn new(
        params: SimParams,
        mixture: &[StrategyId],
        seed: u64,
        options: RunOptions,
        queue: &mut EventQueue<EventKind>,
    ) -> Result<Self, Error> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series = FundamentalSeries::generate(params.fundamental(), &mut rng)?;

        let mut zi = Vec::with_capacity(mixture.len());
        for (i, &strategy) in mixture.iter().enumerate() {
            let benefits = PrivateBenefits::generate(params.q_max, params.pv_variance, &mut rng)?;
            let primary = ExchangeId((i % params.n_exchanges) as u32);
            zi.push(ZiTrader::new(i, primary, strategy, benefits));
        }

        let interarrival =
            Exp::new(params.arrival_rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for i in 0..zi.len() {
            let dt = draw_interarrival(&interarrival, &mut rng);
            queue.schedule(dt, EventKind::ZiArrival(i));
        }

        let mut exchanges: Vec<Exchange> = (0..params.n_exchanges)
            .map(|i| Exchange::new(ExchangeId(i as u32)))
            .collect();
        for ex in &mut exchanges {
            ex.subscribe(Subscriber::Sip);
            if params.with_la {
                ex.subscribe(Subscriber::La);
            }
        }

        // Roughly two book changes per arrival.
        let expected = (mixture.len() as f64 * params.arrival_rate * params.horizon as f64 * 2.2) as usize;
        let per_exchange = expected / params.n_exchanges + 16;

        Ok(Market {
            sip: Sip::new(params.n_exchanges, params.latency),
            la: params.with_la.then(|| LaTrader::new(params.alpha, params.n_exchanges)),
            logs: RunLogs {
                trades: Vec::with_capacity(expected / 4),
                bbo: (0..params.n_exchanges).map(|_| Vec::with_capacity(per_exchange)).collect(),
                nbbo: Vec::with_capacity(expected),
                bbo_sequence: Vec::with_capacity(expected),
                orders: options.record_orders.then(Vec::new),
                ..RunLogs::default()
            },
            audit: options.audit_nbbo.then_some(0),
            params,
            exchanges,
            series,
            zi,
            rng,
            interarrival,
            next_order_id: 0,
        })
    }

    pub fn handle(&mut self, queue: &mut EventQueue<EventKind>, ev: Event<EventKind>) {
        match ev.kind {
            EventKind::ZiArrival(i) => self.zi_arrival(queue, i, ev.time),
            EventKind::NbboUpdate { venue, quote } => {
                let nbbo = self.sip.apply_nbbo_update(venue, quote, ev.time);
                self.record_nbbo(nbbo);
            }
        }
    }

    fn zi_arrival(&mut self, queue: &mut EventQueue<EventKind>, i: usize, t: Time) {
        let dt = draw_interarrival(&self.interarrival, &mut self.rng);
        queue.schedule(t + dt, EventKind::ZiArrival(i));

        for (venue, id) in std::mem::take(&mut self.zi[i].outstanding) {
            if let Some(order) = self.exchanges[venue.index()].book.withdraw(id) {
                self.log_order(t, &order, OrderEventKind::Withdraw, None);
                self.publish(queue, venue, t);
            }
        }

        let r_hat = self.series.estimate_terminal(t);
        let trader = &self.zi[i];
        let primary = self.exchanges[trader.primary.index()].last_published();
        let nbbo = self.sip.nbbo();
        let plan = trader.plan_order(
            r_hat,
            self.params.variant,
            self.params.greedy_enabled,
            &primary,
            &nbbo,
            &mut self.rng,
        );
        if let Some(plan) = plan {
            let order = self.new_order(TraderRef::Zi(i), plan.side, plan.price, t, plan.venue);
            self.submit(queue, order, t);
        }
    }

    fn new_order(&mut self, owner: TraderRef, side: Side, price: Price, t: Time, venue: ExchangeId) -> LimitOrder {
        let id = OrderId(self.next_order_id);
        self.next_order_id += 1;
        LimitOrder {
            id,
            owner,
            side,
            price,
            submit_time: t,
            venue,
        }
    }

    fn submit(&mut self, queue: &mut EventQueue<EventKind>, order: LimitOrder, t: Time) {
        self.log_order(t, &order, OrderEventKind::Add, None);
        let venue = order.venue;
        match self.exchanges[venue.index()].book.submit(order, t) {
            SubmitOutcome::Traded(trade) => {
                self.settle(&trade);
                self.log_order(t, &order, OrderEventKind::Trade, Some(trade.price));
                self.logs.trades.push(trade);
            }
            SubmitOutcome::Rested => match order.owner {
                TraderRef::Zi(i) => self.zi[i].outstanding.push((venue, order.id)),
                TraderRef::La => panic!(
                    "arbitrageur order {:?} rested on exchange {} at t={t}",
                    order.id,
                    venue.index()
                ),
            },
        }
        self.publish(queue, venue, t);
    }

    fn settle(&mut self, trade: &Trade) {
        let p = trade.price.get();
        for (who, order, sign) in [(trade.buyer, trade.buy_order, 1), (trade.seller, trade.sell_order, -1)] {
            match who {
                TraderRef::Zi(i) => {
                    let z = &mut self.zi[i];
                    z.position += sign;
                    z.cash -= sign as i64 * p;
                    z.transactions += 1;
                    z.outstanding.retain(|&(_, id)| id != order);
                    assert!(
                        z.position.abs() <= self.params.q_max,
                        "trader {i} position {} exceeds limit {}",
                        z.position,
                        self.params.q_max
                    );
                }
                TraderRef::La => {
                    let la = self.la.as_mut().expect("arbitrageur trade without arbitrageur");
                    la.position += sign;
                    la.cash -= sign as i64 * p;
                    la.transactions += 1;
                }
            }
        }
    }

    fn publish(&mut self, queue: &mut EventQueue<EventKind>, venue: ExchangeId, t: Time) {
        let ex = &mut self.exchanges[venue.index()];
        let quote = ex.publish_bbo(t);
        self.logs.bbo[venue.index()].push(quote);
        self.logs.bbo_sequence.push(venue.0);
        for k in 0..self.exchanges[venue.index()].subscribers().len() {
            match self.exchanges[venue.index()].subscribers()[k] {
                Subscriber::Sip => {
                    if let Some(nbbo) = self.sip.on_bbo_update(venue, quote, t, queue) {
                        self.record_nbbo(nbbo);
                    }
                }
                Subscriber::La => self.la_update(queue, venue, quote, t),
            }
        }
    }

    fn la_update(&mut self, queue: &mut EventQueue<EventKind>, venue: ExchangeId, quote: Quote, t: Time) {
        let Some(la) = self.la.as_mut() else { return };
        let Some(plan) = la.on_bbo_update(venue, quote) else { return };
        la.set_executing(true);
        let cash_before = la.cash;

        let buy = self.new_order(TraderRef::La, Side::Buy, plan.buy_price, t, plan.ask_venue);
        self.submit(queue, buy, t);
        let sell = self.new_order(TraderRef::La, Side::Sell, plan.sell_price, t, plan.bid_venue);
        self.submit(queue, sell, t);

        let la = self.la.as_mut().expect("present");
        la.set_executing(false);
        assert_eq!(la.position, 0, "arbitrageur not flat after executing at t={t}");
        self.logs.arbitrages.push(ArbRecord {
            time: t,
            best_bid: plan.best_bid,
            best_ask: plan.best_ask,
            profit: la.cash - cash_before,
        });
    }

    fn record_nbbo(&mut self, nbbo: NbboQuote) {
        if let Some(count) = self.audit.as_mut() {
            let live: Vec<Quote> = self.exchanges.iter().map(|e| e.book.quote(e.id, nbbo.time)).collect();
            if compute_nbbo(&live, nbbo.time) != nbbo {
                *count += 1;
            }
        }
        self.logs.nbbo.push(nbbo);
    }

    fn log_order(&mut self, t: Time, order: &LimitOrder, event: OrderEventKind, exec: Option<Price>) {
        if let Some(log) = self.logs.orders.as_mut() {
            log.push(OrderLogEntry {
                time: t,
                venue: order.venue.0,
                event,
                order_id: order.id.0,
                trader_id: order.owner.to_string(),
                side: order.side.as_str(),
                price: order.price.get(),
                exec_price: exec.map(Price::get),
            });
        }
    }

    /// Check closed-system invariants and hand back the final state.
    pub fn finish(self, events_dispatched: u64) -> RunOutput {
        let cash: i64 = self.zi.iter().map(|z| z.cash).sum::<i64>() + self.la.as_ref().map_or(0, |l| l.cash);
        let position: i64 =
            self.zi.iter().map(|z| z.position as i64).sum::<i64>() + self.la.as_ref().map_or(0, |l| l.position as i64);
        assert_eq!(cash, 0, "cash not conserved");
        assert_eq!(position, 0, "positions not conserved");
        RunOutput {
            params: self.params,
            series: self.series,
            logs: self.logs,
            zi: self.zi,
            la: self.la,
            events_dispatched,
            nbbo_mismatches: self.audit,
        }
    }
}

/// Run one simulation to the horizon.
pub fn simulate(params: &SimParams, mixture: &[StrategyId], seed: u64, options: RunOptions) -> Result<RunOutput, Error> {
    let mut queue = EventQueue::new();
    let mut market = Market::new(*params, mixture, seed, options, &mut queue)?;
    let n = queue.run(params.horizon, |q, ev| market.handle(q, ev));
    Ok(market.finish(n))
}

/// As [`simulate`], writing one line per dispatched event to `trace`.
pub fn simulate_traced<W: Write>(
    params: &SimParams,
    mixture: &[StrategyId],
    seed: u64,
    options: RunOptions,
    trace: &mut W,
) -> Result<RunOutput, Error> {
    let mut queue = EventQueue::new();
    let mut market = Market::new(*params, mixture, seed, options, &mut queue)?;
    let n = queue
        .run_traced(params.horizon, |q, ev| market.handle(q, ev), trace)
        .map_err(|e| Error::io("<trace>", e))?;
    Ok(market.finish(n))
}
